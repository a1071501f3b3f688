"""The self-similar blow-up profile family and its derivatives.

Member i of the family satisfies the implicit relation x = -W - W^(2i+1);
the default i=2 member is the one the dynamics converge to.  Evaluation is a
safeguarded Newton/bisection solve (the map is a strictly decreasing
bijection, so the root is unique and bracketable), derivatives come from the
implicit-differentiation recurrence, and everything is vectorized over x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Frame, Grid, make_stencils

__all__ = [
    "BurgersProfile",
    "RescaledProfile",
    "DecayCertificate",
    "profile_eval",
    "profile_deriv",
    "profile_jet",
    "profile_decay_certificate",
    "rescaled_eval",
    "make_profile_frame",
    "w1_closed_form",
]

MAX_DERIV = 8


@dataclass(frozen=True)
class BurgersProfile:
    """Family member index and the residual tolerance of the implicit solve.

    root_tol is enforced relative to max(1, |x|): at |x| ~ 1e6 the absolute
    residual of even a correctly rounded float64 root is ~1e-10, so only the
    relative statement is meaningful.
    """

    index_i: int = 2
    root_tol: float = 1e-12

    def __post_init__(self):
        if self.index_i < 1:
            raise ValueError(f"index_i must be >= 1, got {self.index_i}")
        if not 0 < self.root_tol < 1e-6:
            raise ValueError(f"root_tol must lie in (0, 1e-6), got {self.root_tol}")

    @property
    def power(self) -> int:
        return 2 * self.index_i + 1


@dataclass(frozen=True)
class RescaledProfile:
    """W rescaled so its fifth derivative at the origin equals nu."""

    nu: float
    base: BurgersProfile = field(default_factory=BurgersProfile)

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")


def profile_eval(p: BurgersProfile, x):
    """Unique real root W of W^(2i+1) + W + x = 0 (vectorized over x).

    Newton clipped to a shrinking bracket, bisection when the step escapes.
    """
    # works in the input's precision (float64 normally, longdouble for oracles)
    dtype = np.result_type(np.asarray(x), np.float64)
    x_arr = np.atleast_1d(np.asarray(x, dtype=dtype))
    if not np.all(np.isfinite(x_arr)):
        raise ValueError("profile_eval requires finite x")
    pw = p.power
    bound = 1.0 + np.abs(x_arr) ** (1.0 / pw)
    lo = -bound  # f(lo) < 0 since |lo|^pw >= 1 + |x|
    hi = bound.copy()
    w = np.clip(-np.sign(x_arr) * np.minimum(np.abs(x_arr), np.abs(x_arr) ** (1.0 / pw)), lo, hi)
    scale = np.maximum(1.0, np.abs(x_arr))
    f_tol = 5.0 * np.finfo(dtype).eps
    for _ in range(200):
        f = w**pw + w + x_arr
        if np.all(np.abs(f) <= f_tol * scale):
            break
        lo = np.where(f < 0, w, lo)
        hi = np.where(f >= 0, w, hi)
        step = f / (pw * w ** (pw - 1) + 1.0)
        wn = w - step
        off = (wn <= lo) | (wn >= hi) | ~np.isfinite(wn)
        wn = np.where(off, 0.5 * (lo + hi), wn)
        if np.array_equal(wn, w):
            break
        w = wn
    resid = np.abs(w**pw + w + x_arr)
    if np.any(resid > p.root_tol * scale):
        j = int(np.argmax(resid / scale))
        raise RuntimeError(
            f"implicit solve stalled at x={x_arr[j]!r}: residual {resid[j]:.3e}"
        )
    return w if np.ndim(x) else float(w[0])


def _leibniz(a: np.ndarray, b: np.ndarray, k: int) -> np.ndarray:
    return sum(math.comb(k, j) * a[j] * b[k - j] for j in range(k + 1))


def profile_jet(p: BurgersProfile, x, n: int) -> np.ndarray:
    """Derivatives 0..n of W at each x, shape (n+1,) + shape(x).

    Differentiating D * W' = -1 with D = 1 + (2i+1) W^(2i) gives
    D * W^(m) = -sum_{k=1}^{m-1} C(m-1,k) D^(k) W^(m-k).
    """
    if not 0 <= n <= MAX_DERIV:
        raise ValueError(f"derivative order must be 0..{MAX_DERIV}, got {n}")
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    W = np.atleast_1d(profile_eval(p, x_arr))
    J = np.zeros((n + 1,) + W.shape)
    J[0] = W
    if n == 0:
        return J
    D0 = 1.0 + p.power * W ** (2 * p.index_i)
    J[1] = -1.0 / D0

    def power_jet(power: int, upto: int) -> np.ndarray:
        """Jet of W^power, orders 0..upto, from J (valid through order upto)."""
        if power == 1:
            return J[: upto + 1]
        half = power_jet(power // 2, upto)
        out = np.zeros((upto + 1,) + W.shape)
        other = power_jet(power - power // 2, upto) if power % 2 else half
        for k in range(upto + 1):
            out[k] = _leibniz(half, other, k)
        return out

    for m in range(2, n + 1):
        # D^(k) = (2i+1) * (W^(2i))^(k); needs J only through order m-1
        Dj = p.power * power_jet(2 * p.index_i, m - 1)
        acc = np.zeros_like(W)
        for k in range(1, m):
            acc += math.comb(m - 1, k) * Dj[k] * J[m - k]
        J[m] = -acc / D0
    return J


def profile_deriv(p: BurgersProfile, x, n: int):
    """n-th derivative of W at x, n <= 8."""
    J = profile_jet(p, x, n)
    out = J[n]
    return out if np.ndim(x) else float(out[0])


@dataclass(frozen=True)
class DecayCertificate:
    """Outcome of the pointwise decay checks; margins are (bound - value),
    so any negative margin is a violation."""

    ok: bool
    margin_value: float  # min over samples of (3/2)(1+x^4)^(1/20) - |W|
    margin_slope: float  # min of (1+x^4)^(-1/5) - |W'|
    margin_flat: float  # min over |x| >= ell of W' - (-1 + ell^7/50)
    argmin_value: float
    argmin_slope: float
    argmin_flat: float
    empirical_constants: tuple  # sup |W^(n)| (1+x^4)^(n/4-1/20), n = 2..5
    failures: tuple = ()


def profile_decay_certificate(p: BurgersProfile, sample_xs, ell: float = 0.1) -> DecayCertificate:
    """Check the growth/decay envelope of W and W' on the given samples.

    Inequalities: |W| <= (3/2)(1+x^4)^(1/20); |W'| <= (1+x^4)^(-1/5);
    and -1 + ell^7/50 <= W' <= 0 wherever |x| >= ell.
    """
    if p.index_i != 2:
        raise ValueError("decay certificate is specific to the index-2 profile")
    xs = np.asarray(sample_xs, dtype=float)
    J = profile_jet(p, xs, 5)
    W, dW = J[0], J[1]
    eta4 = 1.0 + xs**4
    m_value = 1.5 * eta4**0.05 - np.abs(W)
    m_slope = eta4**-0.2 - np.abs(dW)
    flat_mask = np.abs(xs) >= ell
    flat_floor = -1.0 + ell**7 / 50.0
    m_flat_all = np.where(flat_mask, np.minimum(dW - flat_floor, -dW), np.inf)

    failures = []
    for name, margins in (("value", m_value), ("slope", m_slope), ("flat", m_flat_all)):
        bad = np.flatnonzero(margins < 0)
        for j in bad[:5]:
            failures.append((name, float(xs[j]), float(margins[j])))

    consts = tuple(
        float(np.max(np.abs(J[n]) * eta4 ** (n / 4.0 - 0.05))) for n in range(2, 6)
    )
    have_flat = bool(np.any(flat_mask))
    return DecayCertificate(
        ok=not failures,
        margin_value=float(np.min(m_value)),
        margin_slope=float(np.min(m_slope)),
        margin_flat=float(np.min(m_flat_all[flat_mask])) if have_flat else math.inf,
        argmin_value=float(xs[np.argmin(m_value)]),
        argmin_slope=float(xs[np.argmin(m_slope)]),
        argmin_flat=float(xs[flat_mask][np.argmin(m_flat_all[flat_mask])]) if have_flat else math.nan,
        empirical_constants=consts,
        failures=tuple(failures),
    )


def rescaled_eval(r: RescaledProfile, x, n: int):
    """n-th derivative of the nu-rescaled profile, n <= 5.

    W_nu(x) = k^(-1) W(k x) with k = (nu/120)^(1/4), so the n-th derivative
    picks up the factor k^(n-1).
    """
    if not 0 <= n <= 5:
        raise ValueError(f"derivative order must be 0..5, got {n}")
    k = (r.nu / 120.0) ** 0.25
    out = k ** (n - 1) * profile_deriv(r.base, k * np.asarray(x, dtype=float), n)
    return out if np.ndim(x) else float(out)


# analytic origin jet of the index-2 profile: W = -x + x^5 - 5 x^9 + ...
ORIGIN_JET = np.array([0.0, -1.0, 0.0, 0.0, 0.0, 120.0, 0.0])


def make_profile_frame(grid: Grid, p: BurgersProfile | None = None) -> Frame:
    """Frame whose background is the profile tabulated on the grid.

    The origin jet is supplied analytically: feeding tabulated float64 values
    through the least-squares extractor would contaminate the high orders.
    """
    p = p or BurgersProfile()
    if p.index_i != 2:
        raise ValueError("evolution background must be the index-2 profile")
    J = profile_jet(p, grid.nodes, 1)
    return Frame(
        grid=grid,
        stencils=make_stencils(grid),
        base_W=J[0],
        base_dW=J[1],
        base_jet=ORIGIN_JET.copy(),
    )


def w1_closed_form(x):
    """Cardano form of the index-1 member (root of W^3 + W + x = 0); used only
    as an independent cross-check of the implicit solver."""
    x_arr = np.asarray(x, dtype=float)
    srt = np.sqrt(1.0 / 27.0 + x_arr**2 / 4.0)
    out = np.cbrt(-x_arr / 2.0 + srt) - np.cbrt(x_arr / 2.0 + srt)
    return out if np.ndim(x) else float(out)
