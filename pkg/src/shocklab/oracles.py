"""Independent ground truth for two corners of the laboratory.

Exact one-dimensional transport by characteristics checks the PDE core
whenever the sound fields are off, with the comparison done in the original
physical variables.  A scalar blow-up model equation with the same
expanding-horizon Newton scheme checks the shooting concept against closed
forms, with its solver cross-checked route-against-route (adaptive RK versus
a fixed point of the integral form).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, solve_ivp

from .core import SolverFailure, eta
from .dynamics import evolve
from .initial_data import _catalogue, _load_csv_perturbation, build_initial, cutoff
from .profile import BurgersProfile, profile_eval

__all__ = [
    "BlowUpError",
    "BurgersReport",
    "CharacteristicSolution",
    "ModelODE",
    "ModelODESolution",
    "burgers_selfsimilar_compare",
    "characteristics_eval",
    "initial_w_callable",
    "model_ode_shoot",
    "model_ode_solve",
    "solution_slope",
    "t_star",
]


class BlowUpError(SolverFailure):
    def __init__(self, message, s_escape=None):
        super().__init__(message)
        self.s_escape = s_escape


# ---------------------------------------------------------------------------
# method of characteristics


@dataclass
class CharacteristicSolution:
    """Exact solution w(theta, t) = w0(theta0), theta = theta0 + t*w0(theta0),
    queried pointwise; t is the time elapsed since the data was posed."""

    w0: object  # callable, vectorized over theta
    t: float
    root_tol: float = 1e-12
    w0_prime: object | None = None  # optional analytic slope
    _tstar: float | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.t < 0.0:
            raise ValueError(f"elapsed time must be nonnegative, got {self.t}")

    def slope(self, theta0):
        if self.w0_prime is not None:
            return self.w0_prime(theta0)
        h = 1e-7
        return (self.w0(theta0 + h) - self.w0(theta0 - h)) / (2.0 * h)


def t_star(cs: CharacteristicSolution, lo: float = -10.0, hi: float = 10.0,
           n: int = 200001) -> float:
    """Blow-up time -1/min w0' with the minimum taken over a dense lattice."""
    if cs._tstar is None:
        slopes = cs.slope(np.linspace(lo, hi, n))
        worst = float(np.min(slopes))
        cs._tstar = math.inf if worst >= 0.0 else -1.0 / worst
    return cs._tstar


def _invert(cs: CharacteristicSolution, theta: np.ndarray) -> np.ndarray:
    """Solve theta0 + t*w0(theta0) = theta per query; the map is strictly
    increasing for t < t_star, so a lattice bracket plus safeguarded Newton
    cannot miss."""
    t = cs.t
    if t == 0.0:
        return theta.copy()
    ts = t_star(cs)
    if t >= ts:
        raise ValueError(f"t = {t:.6e} is at or beyond blow-up t* = {ts:.6e}")

    qlo, qhi = float(theta.min()), float(theta.max())
    a, b, step = qlo, qhi, max(1.0, qhi - qlo)
    for _ in range(64):
        if a + t * float(cs.w0(a)) <= qlo:
            break
        a -= step
        step *= 2.0
    else:
        raise SolverFailure("could not bracket characteristic feet from below")
    step = max(1.0, qhi - qlo)
    for _ in range(64):
        if b + t * float(cs.w0(b)) >= qhi:
            break
        b += step
        step *= 2.0
    else:
        raise SolverFailure("could not bracket characteristic feet from above")

    lattice = np.linspace(a, b, 4097)
    fvals = lattice + t * cs.w0(lattice)
    idx = np.clip(np.searchsorted(fvals, theta), 1, lattice.size - 1)
    lo_b, hi_b = lattice[idx - 1], lattice[idx]
    x = 0.5 * (lo_b + hi_b)
    for _ in range(100):
        fx = x + t * cs.w0(x) - theta
        if np.all(np.abs(fx) <= cs.root_tol):
            break
        lo_b = np.where(fx < 0.0, x, lo_b)
        hi_b = np.where(fx >= 0.0, x, hi_b)
        xn = x - fx / (1.0 + t * cs.slope(x))
        bad = (xn <= lo_b) | (xn >= hi_b) | ~np.isfinite(xn)
        x = np.where(bad, 0.5 * (lo_b + hi_b), xn)
    resid = np.abs(x + t * cs.w0(x) - theta)
    if np.any(resid > cs.root_tol):
        raise SolverFailure(
            f"characteristic solve stalled: residual {float(resid.max()):.3e} "
            f"> {cs.root_tol:.1e}")
    return x


def characteristics_eval(cs: CharacteristicSolution, theta):
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    w = cs.w0(_invert(cs, th))
    return w if np.ndim(theta) else float(w[0])


def solution_slope(cs: CharacteristicSolution, theta):
    """d w / d theta at time t, from differentiating the implicit relation."""
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    s0 = cs.slope(_invert(cs, th))
    out = s0 / (1.0 + cs.t * s0)
    return out if np.ndim(theta) else float(out[0])


# ---------------------------------------------------------------------------
# self-similar run against the exact transport solution


def initial_w_callable(config):
    """The run's initial datum in physical variables, as an exact callable
    (no tabulation): w0(theta) at t0 = -epsilon."""
    params, spec = config.params, config.data
    eps, kind = params.epsilon, spec.cutoff_kind
    prof = BurgersProfile()
    if spec.perturbation.startswith("csv:"):
        pert_fn = _load_csv_perturbation(spec.perturbation[4:])
    else:
        amp = eps / 100.0 if spec.amplitude is None else spec.amplitude
        pert_fn, _, _ = _catalogue(spec.perturbation, amp, kind)
    scale = eps**0.25

    def w0(theta):
        x = np.asarray(theta, dtype=float) / eps**1.25
        total = (profile_eval(prof, x) * cutoff(scale * x, kind)
                 + pert_fn(x)
                 + (spec.alpha * x**2 + spec.beta * x**3) * cutoff(x, kind))
        return scale * total + params.kappa0

    return w0, -eps


@dataclass(frozen=True)
class BurgersRow:
    s: float
    t: float
    sup_error: float
    weighted_error: float
    n_probes: int


@dataclass(frozen=True)
class BurgersReport:
    rows: list
    probe_limit: float

    @property
    def sup_error(self) -> float:
        return max(r.sup_error for r in self.rows)

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["s", "t", "sup_error", "weighted_error", "n_probes"])
            for r in self.rows:
                wr.writerow([repr(r.s), repr(r.t), repr(r.sup_error),
                             repr(r.weighted_error), r.n_probes])


def burgers_selfsimilar_compare(config, span: float = 2.0,
                                probe_limit: float | None = None,
                                root_tol: float = 1e-13) -> BurgersReport:
    """Run the modulated solver with sound off and compare the reconstructed
    physical w against the characteristics oracle at every snapshot.

    Probes are the grid nodes with |x| <= probe_limit; both sides of the
    comparison are evaluated exactly at those points.  The default window is
    the grid's design half-width: beyond it the sinh map coarsens cells on
    purpose, so a sup there measures the (intentional) far-field damping
    instead of the scheme order.  Pass 0.9 * grid.nodes.max() to sweep
    everything up to the one-sided boundary stencils.
    """
    if config.data.seed_za != "zero":
        raise ValueError("oracle comparison requires zero sound seeds")
    grid = config.grid.build()
    state, mod = build_initial(config.data, config.params, grid)
    sol = config.solver
    snaps = evolve(state, mod, config.params, state.s + span,
                   cadence=config.output.cadence, cfl=sol.cfl,
                   ds_max=sol.ds_max, drift_tol=sol.drift_tol,
                   q5_floor=sol.q5_floor, keep_fields=True)
    w0, t0 = initial_w_callable(config)
    if probe_limit is None:
        probe_limit = float(config.grid.half_width)
    mask = np.abs(grid.nodes) <= probe_limit
    xs = grid.nodes[mask]
    weight = eta(xs, -0.05)
    tstar_shared = t_star(CharacteristicSolution(w0, 0.0))  # one w0, one t*

    rows = []
    for sn in snaps:
        st = sn.state
        t_phys = sn.tau - math.exp(-sn.s)
        theta = sn.xi + xs * math.exp(-1.25 * sn.s)
        w_num = (math.exp(-0.25 * sn.s)
                 * (st.frame.base_W[mask] + st.dev_W[mask]) + sn.kappa)
        # exp(-s0) reproduces epsilon only to an ulp; clamp the first row
        elapsed = max(0.0, t_phys - t0)
        cs = CharacteristicSolution(w0, elapsed, root_tol=root_tol,
                                    _tstar=tstar_shared)
        w_exact = characteristics_eval(cs, theta)
        err = np.abs(w_num - w_exact)
        rows.append(BurgersRow(
            s=sn.s, t=t_phys, sup_error=float(err.max()),
            weighted_error=float(np.max(err * weight)), n_probes=xs.size))
    return BurgersReport(rows=rows, probe_limit=probe_limit)


# ---------------------------------------------------------------------------
# the scalar model equation u' = u/2 + g + eps*u^2


@dataclass(frozen=True)
class ModelODE:
    g: object  # forcing, callable of s
    eps: float
    alpha: float


@dataclass(frozen=True)
class ModelODESolution:
    u: object  # dense callable from the adaptive route
    s_end: float
    lattice: np.ndarray
    u_fixed: np.ndarray  # fixed point of the integral form on the lattice
    cross_error: float  # sup disagreement between the two routes
    duhamel_residual: float  # identity defect of the adaptive solution

    def __call__(self, s):
        return self.u(s)


ESCAPE = 1.0e6


def _duhamel_map(m: ModelODE, lattice: np.ndarray, u: np.ndarray) -> np.ndarray:
    # u(s) = e^{s/2} * (alpha + cumulative integral of e^{-sigma/2}(g + eps u^2))
    integrand = np.exp(-0.5 * lattice) * (m.g(lattice) + m.eps * u**2)
    acc = cumulative_simpson(integrand, x=lattice, initial=0.0)
    return np.exp(0.5 * lattice) * (m.alpha + acc)


def model_ode_solve(m: ModelODE, s_end: float, rtol: float = 1e-12,
                    atol: float = 1e-14, lattice_n: int = 4001,
                    fixed_tol: float = 1e-12) -> ModelODESolution:
    """Adaptive RK solution cross-checked against the fixed point of the
    integral form on a Simpson lattice; both routes must agree."""
    if not math.isfinite(s_end) or s_end <= 0.0:
        raise ValueError(f"s_end must be positive and finite, got {s_end}")

    def rhs(s, y):
        return [0.5 * y[0] + m.g(s) + m.eps * y[0] ** 2]

    def escape(s, y):
        return abs(y[0]) - ESCAPE
    escape.terminal = True

    sol = solve_ivp(rhs, (0.0, s_end), [m.alpha], method="DOP853",
                    rtol=rtol, atol=atol, dense_output=True, events=escape)
    if sol.t_events[0].size:
        s_esc = float(sol.t_events[0][0])
        raise BlowUpError(f"|u| exceeded {ESCAPE:.1e} at s = {s_esc:.6f}",
                          s_escape=s_esc)
    if not sol.success:
        raise SolverFailure(f"adaptive integration failed: {sol.message}")
    dense = sol.sol

    def u_call(s):
        vals = dense(np.atleast_1d(np.asarray(s, dtype=float)))[0]
        return vals if np.ndim(s) else float(vals[0])

    lattice = np.linspace(0.0, s_end, lattice_n)
    u_fix = np.exp(0.5 * lattice) * m.alpha
    scale = max(1.0, abs(m.alpha))
    for _ in range(200):
        u_next = _duhamel_map(m, lattice, u_fix)
        worst = float(np.max(np.abs(u_next)))
        if not math.isfinite(worst) or worst > ESCAPE:
            j = int(np.argmax(np.abs(u_next) > ESCAPE))
            raise BlowUpError(
                f"fixed point escaped {ESCAPE:.1e} by s = {lattice[j]:.6f}",
                s_escape=float(lattice[j]))
        delta = float(np.max(np.abs(u_next - u_fix)))
        u_fix = u_next
        if delta <= fixed_tol * scale:
            break
    else:
        raise SolverFailure("integral fixed point did not settle in 200 sweeps")

    u_rk = u_call(lattice)
    cross = float(np.max(np.abs(u_rk - u_fix)))
    residual = float(np.max(np.abs(u_rk - _duhamel_map(m, lattice, u_rk))))
    return ModelODESolution(u=u_call, s_end=s_end, lattice=lattice,
                            u_fixed=u_fix, cross_error=cross,
                            duhamel_residual=residual)


def model_ode_shoot(g, eps: float, n_max: int, newton_tol: float = 1e-12,
                    alpha_guard: float = 1e3):
    """Expanding-horizon Newton for the model equation: at stage N, drive
    u_alpha(N+1) to zero with the variational slope, keeping s_n = n.

    Returns (alpha_star, rows) where each row records the stage, the accepted
    alpha, the achieved horizon value, and the inner iteration count.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    alpha = 0.0
    rows = []
    for N in range(n_max):
        horizon = float(N + 1)
        for inner in range(1, 26):
            def rhs(s, y):
                u, v = y
                return [0.5 * u + g(s) + eps * u * u, (0.5 + 2.0 * eps * u) * v]

            sol = solve_ivp(rhs, (0.0, horizon), [alpha, 1.0], method="DOP853",
                            rtol=1e-12, atol=1e-14)
            if not sol.success:
                raise SolverFailure(
                    f"stage N={N}: integration failed: {sol.message}")
            u_end, v_end = float(sol.y[0, -1]), float(sol.y[1, -1])
            if abs(u_end) <= newton_tol:
                break
            if v_end == 0.0:
                raise SolverFailure(f"stage N={N}: vanishing sensitivity")
            alpha -= u_end / v_end
            if abs(alpha) > alpha_guard:
                raise SolverFailure(
                    f"stage N={N}: iterate escaped |alpha| > {alpha_guard:.1e}")
        else:
            raise SolverFailure(
                f"stage N={N}: horizon value {u_end:.3e} still above "
                f"{newton_tol:.1e} after 25 inner steps")
        rows.append({"N": N, "alpha": alpha, "u_horizon": u_end,
                     "inner": inner})
    return alpha, rows
