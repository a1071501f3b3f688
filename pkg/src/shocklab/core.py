"""Shared domain types: physical parameters, the stretched grid, derivative
stencils, and the field/modulation state containers used by every solver
module.

The spatial grid is uniform in a map coordinate y and stretched by
x = stretch * sinh(y), so a few thousand nodes resolve both the O(1e-4)
inner scale and an O(1e2) outer domain.  All first derivatives use
upwind-biased 4-point stencils (third order on the nonuniform nodes);
derivatives at x = 0 come from a degree-8 least-squares fit through the 13
nodes nearest the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ParameterError",
    "GridError",
    "SolverFailure",
    "Params",
    "Grid",
    "StencilSet",
    "Frame",
    "FieldState",
    "ModulationState",
    "QVector",
    "make_params",
    "make_grid",
    "make_stencils",
    "make_frame",
    "eta",
    "weighted_sup",
    "jet_at_zero",
    "derivative_at_zero",
    "qvector",
    "constraint_drift",
]

N_JET = 7  # derivatives 0..6 are extracted at the origin
LSQ_POINTS = 13
LSQ_DEGREE = 8


class ParameterError(ValueError):
    """A physical or numerical parameter violates its domain."""


class GridError(ValueError):
    """Grid construction arguments are invalid."""


class SolverFailure(RuntimeError):
    """Raised when an evolution or algebraic solve cannot proceed.

    Carries enough context (self-similar time, offending node, ...) for a
    post-mortem; orchestration maps it to a nonzero exit code.
    """

    def __init__(self, message: str, *, s: float | None = None, node: int | None = None):
        super().__init__(message)
        self.s = s
        self.node = node


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class Params:
    """Adiabatic exponent, its derived transport coefficients, and the data
    scales (epsilon, kappa0, bigM, ell) shared by all modules."""

    gamma: float
    lam: float
    beta1: float
    beta2: float
    beta3: float
    beta4: float
    beta5: float
    epsilon: float
    kappa0: float
    bigM: float
    ell: float


def make_params(gamma: float, epsilon: float, kappa0: float, bigM: float, ell: float) -> Params:
    """Validate the free parameters and populate the derived coefficients.

    beta1..beta5 are fixed rational functions of lam = (gamma - 1) / 2.
    """
    if not gamma > 1:
        raise ParameterError(f"gamma must be > 1, got {gamma}")
    if not 0 < epsilon < 1:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not 0 < ell < 1:
        raise ParameterError(f"ell must lie in (0, 1), got {ell}")
    if not epsilon < ell:
        raise ParameterError(f"epsilon must be < ell, got epsilon={epsilon}, ell={ell}")
    if not bigM >= 1:
        raise ParameterError(f"bigM must be >= 1, got {bigM}")
    if not kappa0 > 0:
        raise ParameterError(f"kappa0 must be > 0, got {kappa0}")
    lam = (gamma - 1.0) / 2.0
    return Params(
        gamma=gamma,
        lam=lam,
        beta1=1.0 / (1.0 + lam),
        beta2=(1.0 - lam) / (1.0 + lam),
        beta3=(1.0 - 2.0 * lam) / (1.0 + lam),
        beta4=(3.0 + 2.0 * lam) / (1.0 + lam),
        beta5=lam / (2.0 + 2.0 * lam),
        epsilon=epsilon,
        kappa0=kappa0,
        bigM=bigM,
        ell=ell,
    )


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class Grid:
    n_nodes: int
    stretch: float
    half_width: float
    nodes: np.ndarray  # strictly increasing, exactly antisymmetric, nodes[mid] == 0.0

    @property
    def mid(self) -> int:
        return self.n_nodes // 2

    @property
    def x_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def min_spacing(self) -> float:
        # sinh stretching is monotone in |y|, so the tightest cell straddles 0
        return float(self.nodes[self.mid + 1] - self.nodes[self.mid])

    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)


def make_grid(n_nodes: int, stretch: float, half_width: float) -> Grid:
    if n_nodes % 2 == 0 or n_nodes < 129:
        raise GridError(f"n_nodes must be odd and >= 129, got {n_nodes}")
    if stretch <= 0:
        raise GridError(f"stretch must be positive, got {stretch}")
    if half_width <= 0:
        raise GridError(f"half_width must be positive, got {half_width}")
    half = (n_nodes + 1) // 2
    y_half = np.linspace(0.0, half_width, half)
    x_half = stretch * np.sinh(y_half)
    # mirror the positive half so node j and node n-1-j are exact negatives
    nodes = np.concatenate([-x_half[:0:-1], x_half])
    return Grid(n_nodes=n_nodes, stretch=stretch, half_width=half_width, nodes=nodes)


# ---------------------------------------------------------------------------
# stencils


def _fornberg(x: np.ndarray, x0: float, m: int) -> np.ndarray:
    """Weights of the m-th derivative at x0 for the nodes x (classic recurrence)."""
    n = len(x)
    c = np.zeros((n, m + 1), dtype=np.result_type(x, np.float64))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = x[0] - x0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                # row i must read row i-1 before the j-loop overwrites it
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


@dataclass(frozen=True)
class StencilSet:
    """Per-node upwind first-derivative weights plus the origin jet extractor.

    ``w_pos``/``i_pos`` serve nodes where the transport speed is >= 0 (stencil
    biased toward smaller x); ``w_neg``/``i_neg`` the opposite sign.  ``q_weights``
    maps the 13-node window around the origin to derivatives 0..6 of its
    degree-8 least-squares polynomial fit.
    """

    grid: Grid
    w_pos: np.ndarray  # (n, 4)
    w_neg: np.ndarray  # (n, 4)
    i_pos: np.ndarray  # (n,) int32, first index of each 4-node stencil
    i_neg: np.ndarray  # (n,) int32
    q_weights: np.ndarray  # (7, 13)
    window: slice  # the 13 nodes nearest 0

    def jet_window(self, f: np.ndarray) -> np.ndarray:
        return f[self.window]


def _biased_tables(grid: Grid, offset: int) -> tuple[np.ndarray, np.ndarray]:
    """4-point first-derivative stencils starting at j - offset, edge-clamped."""
    n = grid.n_nodes
    x = grid.nodes
    w = np.empty((n, 4))
    start = np.empty(n, dtype=np.int32)
    for j in range(n):
        s = min(max(j - offset, 0), n - 4)
        start[j] = s
        w[j] = _fornberg(x[s : s + 4], x[j], 1)
    return w, start


def monomial_residual(stencils: StencilSet) -> float:
    """Worst deviation of the jet extractor from exactness on the monomial
    basis x^m, m <= 8, measured in the scaled coordinate t = x/h where the
    fit is performed.  (Raw-unit exactness for high derivative orders at tiny
    h is impossible in float64 — the scaled identity is the meaningful one.)
    """
    xs = stencils.grid.nodes[stencils.window]
    h = np.max(np.abs(xs))
    V = np.vander(xs / h, LSQ_DEGREE + 1, increasing=True)
    fact = np.array([math.factorial(k) for k in range(N_JET)])
    P = stencils.q_weights / (fact / h ** np.arange(N_JET))[:, None]
    eye = np.eye(N_JET, LSQ_DEGREE + 1)
    return float(np.max(np.abs(P @ V - eye)))


def make_stencils(grid: Grid) -> StencilSet:
    w_pos, i_pos = _biased_tables(grid, 2)  # wind from the left
    w_neg, i_neg = _biased_tables(grid, 1)  # wind from the right
    mid = grid.mid
    half = LSQ_POINTS // 2
    window = slice(mid - half, mid + half + 1)
    xs = grid.nodes[window]
    h = np.max(np.abs(xs))
    # scaled Vandermonde keeps the pseudo-inverse well conditioned
    V = np.vander(xs / h, LSQ_DEGREE + 1, increasing=True)
    P = np.linalg.pinv(V)
    fact = np.array([math.factorial(k) for k in range(N_JET)])
    q_weights = P[:N_JET] * (fact / h ** np.arange(N_JET))[:, None]
    return StencilSet(
        grid=grid, w_pos=w_pos, w_neg=w_neg, i_pos=i_pos, i_neg=i_neg,
        q_weights=q_weights, window=window,
    )


# ---------------------------------------------------------------------------
# weights and norms


def eta(x, gamma_w: float):
    """The polynomial weight (1 + x^4)^gamma_w."""
    x = np.asarray(x, dtype=float)
    return (1.0 + x**4) ** gamma_w


def weighted_sup(field: np.ndarray, grid: Grid, gamma_w: float) -> float:
    """max_j |field_j| * eta(x_j)^gamma_w; requires finite input."""
    field = np.asarray(field, dtype=float)
    if not np.all(np.isfinite(field)):
        raise ValueError("weighted_sup requires a finite field")
    return float(np.max(np.abs(field) * eta(grid.nodes, gamma_w)))


# ---------------------------------------------------------------------------
# state containers


@dataclass(frozen=True)
class Frame:
    """Immutable per-run discretization bundle.

    The primary field is stored as a deviation from a static background table
    (``base_W``, typically the self-similar profile) whose origin jet is known
    analytically.  Extracting q_n = base_jet[n] + stencil(dev) keeps the tiny
    near-origin values out of catastrophic float64 cancellation; with a zero
    base the container degenerates to a plain field discretization.
    """

    grid: Grid
    stencils: StencilSet
    base_W: np.ndarray  # background table on grid nodes
    base_dW: np.ndarray  # its first derivative (analytic, for transport terms)
    base_jet: np.ndarray  # derivatives 0..6 of the background at x = 0

    @property
    def has_base(self) -> bool:
        return bool(np.any(self.base_W != 0.0))


def make_frame(grid: Grid, base_W=None, base_dW=None, base_jet=None) -> Frame:
    n = grid.n_nodes
    zeros = np.zeros(n)
    return Frame(
        grid=grid,
        stencils=make_stencils(grid),
        base_W=zeros if base_W is None else np.asarray(base_W, float),
        base_dW=zeros if base_dW is None else np.asarray(base_dW, float),
        base_jet=np.zeros(N_JET) if base_jet is None else np.asarray(base_jet, float),
    )


@dataclass(frozen=True)
class FieldState:
    """Grid samples of the three unknowns at self-similar time s.

    ``dev_W`` holds W minus the frame background; Z and A are stored raw
    (they are uniformly small, so no conditioning trick is needed).
    """

    s: float
    dev_W: np.ndarray
    Z: np.ndarray
    A: np.ndarray
    frame: Frame

    @property
    def W(self) -> np.ndarray:
        return self.frame.base_W + self.dev_W

    def validate(self) -> None:
        n = self.frame.grid.n_nodes
        for name, arr in (("W", self.dev_W), ("Z", self.Z), ("A", self.A)):
            if arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
            if not np.all(np.isfinite(arr)):
                bad = int(np.flatnonzero(~np.isfinite(arr))[0])
                raise SolverFailure(f"non-finite {name} at node {bad}", s=self.s, node=bad)


@dataclass(frozen=True)
class ModulationState:
    """Blow-up time / location / amplitude shifts and their instantaneous rates."""

    tau: float
    xi: float
    kappa: float
    tau_dot: float
    xi_dot: float
    kappa_dot: float
    mu: float
    beta_tau: float

    def validate(self) -> None:
        if abs(self.beta_tau * (1.0 - self.tau_dot) - 1.0) > 1e-12:
            raise ValueError(
                f"beta_tau inconsistent with tau_dot: "
                f"beta_tau*(1-tau_dot)-1 = {self.beta_tau * (1 - self.tau_dot) - 1:.3e}"
            )


@dataclass(frozen=True)
class QVector:
    """Derivatives 0..6 of W at the origin."""

    q: np.ndarray

    def __getitem__(self, n: int) -> float:
        return float(self.q[n])


# ---------------------------------------------------------------------------
# origin jets


def jet_at_zero(stencils: StencilSet, f: np.ndarray, n: int) -> float:
    """n-th derivative at x=0 of the degree-8 LSQ fit through the 13 central
    nodes of a raw field."""
    if not 0 <= n < N_JET:
        raise ValueError(f"jet order must be 0..6, got {n}")
    return float(stencils.q_weights[n] @ f[stencils.window])


def full_jet(stencils: StencilSet, f: np.ndarray) -> np.ndarray:
    return stencils.q_weights @ f[stencils.window]


def derivative_at_zero(state: FieldState, n: int) -> float:
    """n-th x-derivative of W at x = 0 (degree-8 LSQ through the 13 nearest
    nodes, applied in deviation form so the background jet enters exactly)."""
    if not 0 <= n < N_JET:
        raise ValueError(f"derivative order must be 0..6, got {n}")
    return float(state.frame.base_jet[n] + jet_at_zero(state.frame.stencils, state.dev_W, n))


def qvector(state: FieldState) -> QVector:
    return QVector(q=state.frame.base_jet + full_jet(state.frame.stencils, state.dev_W))


def constraint_drift(state: FieldState) -> tuple[float, float, float]:
    """(|q0|, |q1 + 1|, |q4|) — the constraints the modulation should pin."""
    q = qvector(state)
    return abs(q[0]), abs(q[1] + 1.0), abs(q[4])
