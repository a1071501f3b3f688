"""Initial state construction at s0 = -log(eps).

The primary field starts as the profile localized by a cutoff, plus an
admissible perturbation, plus the two unstable-direction injections
alpha*x^2*chi and beta*x^3*chi whose origin jets the shooting iteration
steers to zero.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import FieldState, Frame, Grid, ModulationState, Params, jet_at_zero
from .profile import make_profile_frame

__all__ = [
    "DataSpec",
    "cutoff",
    "build_initial",
    "initialize_newton_seed",
    "perturbation_jets",
]

CUTOFF_KINDS = ("smooth", "c1")
PERTURBATIONS = ("zero", "even", "odd", "mixed")
SEED_KINDS = ("zero", "bumps")


@dataclass(frozen=True)
class DataSpec:
    """Initial-data recipe: unstable-direction parameters, perturbation
    choice, cutoff flavor, and the secondary-field seeds.

    ``perturbation`` is a catalogue name or ``csv:<path>`` for user samples
    (two columns x, value; cubic-interpolated onto the grid).
    ``amplitude`` scales the catalogue perturbations; None means eps/100.
    """

    alpha: float = 0.0
    beta: float = 0.0
    perturbation: str = "zero"
    cutoff_kind: str = "smooth"
    seed_za: str = "zero"
    amplitude: float | None = None

    def __post_init__(self):
        if self.cutoff_kind not in CUTOFF_KINDS:
            raise ValueError(f"cutoff_kind must be one of {CUTOFF_KINDS}, got {self.cutoff_kind!r}")
        if self.seed_za not in SEED_KINDS:
            raise ValueError(f"seed_za must be one of {SEED_KINDS}, got {self.seed_za!r}")
        if not (self.perturbation in PERTURBATIONS or self.perturbation.startswith("csv:")):
            raise ValueError(
                f"perturbation must be one of {PERTURBATIONS} or 'csv:<path>', "
                f"got {self.perturbation!r}"
            )


def cutoff(x, kind: str = "smooth"):
    """Even bump: exactly 1 on |x| <= 1, exactly 0 on |x| >= 2.

    "smooth" is the classical C-infinity partition-of-unity blend
    T(2-|x|) / (T(2-|x|) + T(|x|-1)) with T(v) = exp(-1/v).
    "c1" is the simpler exp(1 - 1/(1 - (|x|-1)^2)) transition (only C^1 at
    |x| = 1, kept for comparison runs).
    """
    r = np.abs(np.asarray(x, dtype=float))
    out = np.zeros_like(r)
    out[r <= 1.0] = 1.0
    band = (r > 1.0) & (r < 2.0)
    rb = r[band]
    if kind == "smooth":
        with np.errstate(over="ignore"):
            t_up = np.exp(-1.0 / (2.0 - rb))
            t_dn = np.exp(-1.0 / (rb - 1.0))
        out[band] = t_up / (t_up + t_dn)
    elif kind == "c1":
        out[band] = np.exp(1.0 - 1.0 / (1.0 - (rb - 1.0) ** 2))
    else:
        raise ValueError(f"unknown cutoff kind {kind!r}")
    return out if np.ndim(x) else float(out)


def _catalogue(name: str, amp: float, kind: str):
    """Perturbation samples plus its analytic (2nd, 3rd) origin derivatives.

    The even/odd shapes are chosen so the Taylor series at 0 starts with a
    bare x^2 (resp. x^3): all of n in {0,1,4,5,6} vanish identically.
    """
    def even(x):
        return amp * (x**2 + 4 * x**4 + 8 * x**6) * np.exp(-4.0 * x**2) * cutoff(x / 1.5, kind)

    def odd(x):
        return amp * (x**3 + 4 * x**5) * np.exp(-4.0 * x**2) * cutoff(x / 1.5, kind)

    if name == "zero":
        return (lambda x: np.zeros_like(np.asarray(x, dtype=float))), 0.0, 0.0
    if name == "even":
        return even, 2.0 * amp, 0.0
    if name == "odd":
        return odd, 0.0, 6.0 * amp
    if name == "mixed":
        return (lambda x: even(x) + odd(x)), 2.0 * amp, 6.0 * amp
    raise ValueError(f"unknown perturbation {name!r}")


def _load_csv_perturbation(path: str):
    xs, vs = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#") or row[0].strip() == "x":
                continue
            xs.append(float(row[0]))
            vs.append(float(row[1]))
    if len(xs) < 8:
        raise ValueError(f"perturbation file {path} has {len(xs)} samples; need >= 8")
    order = np.argsort(xs)
    xs_arr = np.asarray(xs, dtype=float)[order]
    vs_arr = np.asarray(vs, dtype=float)[order]
    if np.any(np.diff(xs_arr) <= 0):
        raise ValueError(f"perturbation file {path} has duplicate x samples")
    from scipy.interpolate import CubicSpline

    spline = CubicSpline(xs_arr, vs_arr, extrapolate=False)
    lo, hi = xs_arr[0], xs_arr[-1]

    def fn(x):
        x = np.asarray(x, dtype=float)
        out = np.where((x >= lo) & (x <= hi), np.nan_to_num(spline(x)), 0.0)
        return out

    return fn


def perturbation_jets(spec: DataSpec, params: Params, frame: Frame) -> tuple[float, float]:
    """(2nd, 3rd) origin derivatives of the configured perturbation."""
    if spec.perturbation.startswith("csv:"):
        fn = _load_csv_perturbation(spec.perturbation[4:])
        vals = fn(frame.grid.nodes)
        _validate_user_jets(vals, params, frame)
        return (
            jet_at_zero(frame.stencils, vals, 2),
            jet_at_zero(frame.stencils, vals, 3),
        )
    amp = params.epsilon / 100.0 if spec.amplitude is None else spec.amplitude
    _, j2, j3 = _catalogue(spec.perturbation, amp, spec.cutoff_kind)
    if abs(j2) > params.epsilon or abs(j3) > params.epsilon:
        raise ValueError(
            f"perturbation origin derivatives ({j2:.3e}, {j3:.3e}) exceed "
            f"epsilon = {params.epsilon:.3e}; reduce amplitude"
        )
    return j2, j3


def _validate_user_jets(vals: np.ndarray, params: Params, frame: Frame) -> None:
    jets = [jet_at_zero(frame.stencils, vals, n) for n in range(7)]
    eps = params.epsilon
    for n in (0, 1):  # must vanish; higher vanishing orders are noise-limited
        if abs(jets[n]) > 1e-3 * eps:
            raise ValueError(f"user perturbation: derivative {n} at 0 is {jets[n]:.3e}, expected 0")
    for n in (2, 3):
        if abs(jets[n]) > eps:
            raise ValueError(
                f"user perturbation: |derivative {n}|(0) = {abs(jets[n]):.3e} > epsilon"
            )


def initialize_newton_seed(spec: DataSpec, params: Params, frame: Frame) -> tuple[float, float]:
    """Seed (alpha0, beta0) that cancels the perturbation's origin curvature:
    alpha0 = -j2/2, beta0 = -j3/6, making q2(s0) = q3(s0) = 0."""
    j2, j3 = perturbation_jets(spec, params, frame)
    return -0.5 * j2, -j3 / 6.0


def build_initial(
    spec: DataSpec, params: Params, grid: Grid, frame: Frame | None = None
) -> tuple[FieldState, ModulationState]:
    """Assemble (FieldState, ModulationState) at s0 = -log(eps).

    W0 = profile * chi(eps^(1/4) x) + perturbation + alpha x^2 chi + beta x^3 chi,
    stored as a deviation from the frame background; Z/A seeds are either zero
    or eps^(3/2) bumps supported in |x| <= (M/2) eps^(-1/4).
    """
    eps = params.epsilon
    bound = 2.0 * params.bigM**30 * eps
    if abs(spec.alpha) > bound or abs(spec.beta) > bound:
        raise ValueError(
            f"(alpha, beta) = ({spec.alpha:.3e}, {spec.beta:.3e}) outside "
            f"admissible rectangle |.| <= {bound:.3e}"
        )
    if grid.min_spacing > eps**1.25 / 8.0:
        raise ValueError(
            f"grid spacing {grid.min_spacing:.3e} too coarse for epsilon = {eps:.3e} "
            f"(need <= {eps**1.25 / 8.0:.3e})"
        )
    if frame is None:
        frame = make_profile_frame(grid)
    x = grid.nodes
    chi_x = cutoff(x, spec.cutoff_kind)

    if spec.perturbation.startswith("csv:"):
        pert_fn = _load_csv_perturbation(spec.perturbation[4:])
        pert = pert_fn(x)
        _validate_user_jets(pert, params, frame)
    else:
        amp = eps / 100.0 if spec.amplitude is None else spec.amplitude
        pert_fn, j2, j3 = _catalogue(spec.perturbation, amp, spec.cutoff_kind)
        if abs(j2) > eps or abs(j3) > eps:
            raise ValueError(
                f"perturbation origin derivatives ({j2:.3e}, {j3:.3e}) exceed epsilon"
            )
        pert = pert_fn(x)

    # W = base*chi(eps^{1/4}x) + pert + (alpha x^2 + beta x^3) chi, so the
    # deviation from the background is base*(chi - 1) + the localized terms
    dev = (
        frame.base_W * (cutoff(eps**0.25 * x, spec.cutoff_kind) - 1.0)
        + pert
        + (spec.alpha * x**2 + spec.beta * x**3) * chi_x
    )

    if spec.seed_za == "zero":
        Z = np.zeros_like(x)
        A = np.zeros_like(x)
    else:
        # support |x| <= (M/2) eps^(-1/4), C8-small
        loc = cutoff(4.0 * x * eps**0.25 / params.bigM, spec.cutoff_kind)
        Z = eps**1.5 * np.exp(-(x**2)) * loc
        A = eps**1.5 * np.exp(-(x**2)) * loc

    state = FieldState(s=-math.log(eps), dev_W=dev, Z=Z, A=A, frame=frame)
    state.validate()
    mod = ModulationState(
        tau=0.0, xi=0.0, kappa=params.kappa0,
        tau_dot=0.0, xi_dot=0.0, kappa_dot=0.0, mu=0.0, beta_tau=1.0,
    )
    return state, mod
