"""Right-hand sides, modulation-rate solve, SSP-RK3 stepping, and the evolve
driver for the modulated self-similar system.

The primary field is advanced in deviation form: substituting
W = background + dev into the evolution equation and cancelling the
background's steady-state identity leaves

    d(dev)/ds = dev/4 - V_W d(dev)/dx
                - (beta_tau*dev + (beta_tau-1)*Wb + G_W) * Wb'
                - e^(-3s/4) beta_tau kappa_dot + F_W

with Wb, Wb' the tabulated background.  This keeps the origin jet of the
evolved array at the size of the deviation itself, which is what makes the
q4/q5 extractions usable in float64.

The modulation rates (mu, tau_dot, kappa_dot, xi_dot) are re-solved from the
origin-jet constraint system at every Runge-Kutta stage.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .core import (
    FieldState,
    ModulationState,
    Params,
    QVector,
    SolverFailure,
    full_jet,
    qvector,
)

__all__ = [
    "SpeedSet",
    "ForcingSet",
    "Snapshot",
    "compute_speeds",
    "compute_forcings",
    "solve_modulation",
    "rhs",
    "step",
    "evolve",
    "write_snapshot",
]

MOD_TOL = 1e-12
MOD_MAX_ITERS = 50
Q5_FLOOR_DEFAULT = 50.0
_BIN4 = [math.comb(4, j) for j in range(5)]


@dataclass(frozen=True)
class SpeedSet:
    """Transport speeds g = beta_tau-weighted field part + G remainder, and
    the grid speeds V = g + 5x/4 actually fed to the upwind stencils."""

    g_W: np.ndarray
    g_Z: np.ndarray
    g_A: np.ndarray
    G_W: np.ndarray
    G_Z: np.ndarray
    G_A: np.ndarray
    V_W: np.ndarray
    V_Z: np.ndarray
    V_A: np.ndarray


@dataclass(frozen=True)
class ForcingSet:
    F_W: np.ndarray
    F_Z: np.ndarray
    F_A: np.ndarray


def compute_speeds(state: FieldState, mod: ModulationState, params: Params) -> SpeedSet:
    """Pointwise transport speeds for the three fields."""
    s = state.s
    bt = mod.beta_tau
    e14 = math.exp(0.25 * s)
    W = state.W
    Z = state.Z
    G_W = -bt * (mod.xi_dot - mod.kappa) * e14 + bt * params.beta2 * e14 * Z
    G_Z = bt * e14 * (params.beta2 * mod.kappa - mod.xi_dot + Z)
    G_A = bt * e14 * (params.beta1 * mod.kappa - mod.xi_dot + params.beta1 * Z)
    g_W = bt * W + G_W
    g_Z = bt * params.beta2 * W + G_Z
    g_A = bt * params.beta1 * W + G_A
    x54 = 1.25 * state.frame.grid.nodes
    return SpeedSet(
        g_W=g_W, g_Z=g_Z, g_A=g_A, G_W=G_W, G_Z=G_Z, G_A=G_A,
        V_W=g_W + x54, V_Z=g_Z + x54, V_A=g_A + x54,
    )


def compute_forcings(state: FieldState, mod: ModulationState, params: Params) -> ForcingSet:
    """Pointwise coupling forcings; all three vanish identically when A = 0
    except F_A's quadratic source."""
    s = state.s
    bt = mod.beta_tau
    em34 = math.exp(-0.75 * s)
    em1 = math.exp(-s)
    U = math.exp(-0.25 * s) * state.W + mod.kappa
    Z, A = state.Z, state.A
    F_W = -bt * em34 * A * (params.beta3 * Z + params.beta4 * U)
    F_Z = -bt * em1 * A * (params.beta3 * U + params.beta4 * Z)
    F_A = (
        -2.0 * bt * params.beta1 * em1 * A**2
        + 0.5 * bt * params.beta1 * em1 * (U + Z) ** 2
        - bt * params.beta5 * em1 * (U - Z) ** 2
    )
    return ForcingSet(F_W=F_W, F_Z=F_Z, F_A=F_A)


def _origin_jets(state: FieldState, upto: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """(Z, A) derivatives 0..upto at the origin (raw stencil extraction)."""
    st = state.frame.stencils
    Zj = st.q_weights[: upto + 1] @ state.Z[st.window]
    Aj = st.q_weights[: upto + 1] @ state.A[st.window]
    return Zj, Aj


def _forcing_jets_W(
    s: float, bt: float, kappa: float, q: np.ndarray, Zj: np.ndarray, Aj: np.ndarray,
    params: Params, upto: int = 4,
) -> np.ndarray:
    """Derivatives 0..upto of F_W at x=0 by the product rule.

    F_W = -beta_tau e^(-3s/4) A * (beta3 Z + beta4 U), U = e^(-s/4) W + kappa.
    """
    em14 = math.exp(-0.25 * s)
    U = em14 * q[: upto + 1].copy()
    U[0] += kappa
    B = params.beta3 * Zj[: upto + 1] + params.beta4 * U
    out = np.empty(upto + 1)
    for n in range(upto + 1):
        out[n] = -bt * math.exp(-0.75 * s) * sum(
            math.comb(n, j) * Aj[j] * B[n - j] for j in range(n + 1)
        )
    return out


def solve_modulation(
    state: FieldState,
    params: Params,
    prev: ModulationState,
    q5_floor: float = Q5_FLOOR_DEFAULT,
    q: QVector | None = None,
) -> ModulationState:
    """Rates (mu, tau_dot, kappa_dot, xi_dot) enforcing the origin constraints.

    mu comes from the fifth-order jet balance, tau_dot from the first-order
    one, kappa_dot from the zeroth; xi_dot then realizes mu by definition.
    beta_tau = 1/(1 - tau_dot) is iterated to a fixed point (the coupling is
    an O(epsilon) contraction, so a couple of passes suffice).
    """
    qv = (q or qvector(state)).q
    if abs(qv[5]) < q5_floor:
        raise SolverFailure(
            f"profile degeneracy: |q5| = {abs(qv[5]):.3e} below floor {q5_floor}",
            s=state.s,
        )
    s = state.s
    kappa = prev.kappa
    Zj, Aj = _origin_jets(state, upto=4)
    e14 = math.exp(0.25 * s)
    e34 = math.exp(0.75 * s)

    tau_dot = prev.tau_dot
    mu_old = math.inf
    kd_old = math.inf
    for _ in range(MOD_MAX_ITERS):
        bt = 1.0 / (1.0 - tau_dot)
        Gj = bt * params.beta2 * e14 * Zj  # G_W^(j)(0) for j >= 1; Gj[0] unused
        Fj = _forcing_jets_W(s, bt, kappa, qv, Zj, Aj, params, upto=4)
        mu = (
            -10.0 * bt * qv[2] * qv[3]
            - sum(_BIN4[j] * Gj[j] * qv[5 - j] for j in range(2, 5))
            + Fj[4]
        ) / qv[5]
        tau_dot_new = (Gj[1] - mu * qv[2] + Fj[1]) / bt
        kappa_dot = e34 * (mu + Fj[0]) / bt
        if (
            abs(mu - mu_old) + abs(tau_dot_new - tau_dot) + abs(kappa_dot - kd_old)
            <= MOD_TOL
        ):
            tau_dot = tau_dot_new
            break
        mu_old, kd_old, tau_dot = mu, kappa_dot, tau_dot_new
    else:
        raise SolverFailure(
            f"modulation fixed point did not converge in {MOD_MAX_ITERS} iterations",
            s=state.s,
        )
    bt = 1.0 / (1.0 - tau_dot)
    xi_dot = kappa + params.beta2 * Zj[0] - mu / (bt * e14)
    return ModulationState(
        tau=prev.tau, xi=prev.xi, kappa=prev.kappa,
        tau_dot=tau_dot, xi_dot=xi_dot, kappa_dot=kappa_dot,
        mu=mu, beta_tau=bt,
    )


def rhs(
    state: FieldState, mod: ModulationState, params: Params
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(d dev/ds, dZ/ds, dA/ds) at the given state and modulation rates."""
    fr = state.frame
    speeds = compute_speeds(state, mod, params)
    force = compute_forcings(state, mod, params)
    st = fr.stencils
    bt = mod.beta_tau

    d_dev = kernels.upwind_dx(state.dev_W, speeds.V_W, st)
    dW = (
        0.25 * state.dev_W
        - speeds.V_W * d_dev
        - (bt * state.dev_W + (bt - 1.0) * fr.base_W + speeds.G_W) * fr.base_dW
        - math.exp(-0.75 * state.s) * bt * mod.kappa_dot
        + force.F_W
    )
    za_live = np.any(state.Z) or np.any(state.A)
    if za_live:
        dZ = -speeds.V_Z * kernels.upwind_dx(state.Z, speeds.V_Z, st) + force.F_Z
        dA = -speeds.V_A * kernels.upwind_dx(state.A, speeds.V_A, st) + force.F_A
    else:
        dZ = force.F_Z
        dA = force.F_A

    for name, arr in (("W", dW), ("Z", dZ), ("A", dA)):
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise SolverFailure(
                f"non-finite d{name}/ds at node {bad} (x = {fr.grid.nodes[bad]:.6g})",
                s=state.s, node=bad,
            )
    return dW, dZ, dA


def _scalar_rates(mod: ModulationState, s: float) -> np.ndarray:
    """(dtau/ds, dxi/ds, dkappa/ds): physical-time rates times dt/ds."""
    dt_ds = mod.beta_tau * math.exp(-s)
    return np.array([mod.tau_dot * dt_ds, mod.xi_dot * dt_ds, mod.kappa_dot * dt_ds])


def step(
    state: FieldState,
    mod: ModulationState,
    params: Params,
    ds: float,
    q5_floor: float = Q5_FLOOR_DEFAULT,
    mod1: ModulationState | None = None,
) -> tuple[FieldState, ModulationState]:
    """One SSP-RK3 step of fields and (tau, xi, kappa), with the modulation
    rates re-solved at every stage.  ``mod1``, if given, must be the already
    solved rates at ``state`` (lets the driver reuse its CFL solve)."""
    if ds <= 0:
        raise ValueError(f"ds must be positive, got {ds}")
    s0 = state.s
    fr = state.frame
    u0 = (state.dev_W, state.Z, state.A)
    sc0 = np.array([mod.tau, mod.xi, mod.kappa])

    mod1 = mod1 or solve_modulation(state, params, mod, q5_floor)
    k1 = rhs(state, mod1, params)
    u1 = tuple(u + ds * k for u, k in zip(u0, k1))
    sc1 = sc0 + ds * _scalar_rates(mod1, s0)
    st1 = FieldState(s=s0 + ds, dev_W=u1[0], Z=u1[1], A=u1[2], frame=fr)
    m1 = replace(mod1, tau=sc1[0], xi=sc1[1], kappa=sc1[2])

    mod2 = solve_modulation(st1, params, m1, q5_floor)
    k2 = rhs(st1, mod2, params)
    u2 = tuple(0.75 * u + 0.25 * (v + ds * k) for u, v, k in zip(u0, u1, k2))
    sc2 = 0.75 * sc0 + 0.25 * (sc1 + ds * _scalar_rates(mod2, s0 + ds))
    st2 = FieldState(s=s0 + 0.5 * ds, dev_W=u2[0], Z=u2[1], A=u2[2], frame=fr)
    m2 = replace(mod2, tau=sc2[0], xi=sc2[1], kappa=sc2[2])

    mod3 = solve_modulation(st2, params, m2, q5_floor)
    k3 = rhs(st2, mod3, params)
    u3 = tuple(u / 3.0 + 2.0 / 3.0 * (v + ds * k) for u, v, k in zip(u0, u2, k3))
    sc3 = sc0 / 3.0 + 2.0 / 3.0 * (sc2 + ds * _scalar_rates(mod3, s0 + 0.5 * ds))

    out = FieldState(s=s0 + ds, dev_W=u3[0], Z=u3[1], A=u3[2], frame=fr)
    mod_out = replace(mod3, tau=sc3[0], xi=sc3[1], kappa=sc3[2])
    return out, mod_out


@dataclass(frozen=True)
class Snapshot:
    """One observation: modulation scalars/rates plus the origin jet; the
    full field state is retained when the caller asks for it."""

    s: float
    tau: float
    xi: float
    kappa: float
    tau_dot: float
    xi_dot: float
    kappa_dot: float
    mu: float
    beta_tau: float
    q: np.ndarray
    state: FieldState | None = None

    def row(self) -> dict:
        d = {
            "s": self.s, "tau": self.tau, "xi": self.xi, "kappa": self.kappa,
            "tau_dot": self.tau_dot, "xi_dot": self.xi_dot,
            "kappa_dot": self.kappa_dot, "mu": self.mu, "beta_tau": self.beta_tau,
        }
        for n in range(7):
            d[f"q{n}"] = float(self.q[n])
        return d


def _local_spacing(grid) -> np.ndarray:
    dx = np.diff(grid.nodes)
    return np.minimum(np.concatenate([[dx[0]], dx]), np.concatenate([dx, [dx[-1]]]))


def _take_snapshot(state, mod, params, q5_floor, keep_fields) -> tuple[Snapshot, ModulationState]:
    m = solve_modulation(state, params, mod, q5_floor)
    q = qvector(state)
    snap = Snapshot(
        s=state.s, tau=m.tau, xi=m.xi, kappa=m.kappa,
        tau_dot=m.tau_dot, xi_dot=m.xi_dot, kappa_dot=m.kappa_dot,
        mu=m.mu, beta_tau=m.beta_tau, q=q.q.copy(),
        state=state if keep_fields else None,
    )
    return snap, m


def evolve(
    state: FieldState,
    mod: ModulationState,
    params: Params,
    s_target: float,
    cadence: float = 0.25,
    cfl: float = 0.4,
    ds_max: float = 2e-3,
    drift_tol: float = 1e-6,
    q5_floor: float = Q5_FLOOR_DEFAULT,
    keep_fields: bool = False,
    observer=None,
) -> list[Snapshot]:
    """March to s_target, snapshotting every ``cadence`` units of s.

    The step size is CFL-limited from the stage-one speeds of the fields that
    are actually active, capped at ds_max, and clamped to land exactly on
    snapshot marks.  Constraint drift (|q0|, |q1+1|, |q4|) is enforced at
    every snapshot.
    """
    if s_target < state.s:
        raise ValueError(f"s_target {s_target} precedes state.s {state.s}")
    grid = state.frame.grid
    dx_local = _local_spacing(grid)
    if cadence > 0.0:
        marks = [state.s + cadence * k
                 for k in range(1, int((s_target - state.s) / cadence) + 1)]
    else:
        marks = []  # endpoints only
    if s_target > state.s + 1e-12 and (not marks or marks[-1] < s_target - 1e-12):
        marks.append(s_target)

    snaps: list[Snapshot] = []

    def observe(st, md):
        snap, md2 = _take_snapshot(st, md, params, q5_floor, keep_fields)
        d0, d1, d4 = abs(snap.q[0]), abs(snap.q[1] + 1.0), abs(snap.q[4])
        if max(d0, d1, d4) > drift_tol:
            raise SolverFailure(
                f"constraint drift (|q0|, |q1+1|, |q4|) = ({d0:.3e}, {d1:.3e}, {d4:.3e}) "
                f"exceeds {drift_tol:.1e}",
                s=st.s,
            )
        snaps.append(snap)
        if observer is not None:
            observer(snap)
        return md2

    mod = observe(state, mod)
    for target in marks:
        while state.s < target - 1e-13:
            mod1 = solve_modulation(state, params, mod, q5_floor)
            speeds = compute_speeds(state, mod1, params)
            vmax = np.abs(speeds.V_W)
            if np.any(state.Z):
                vmax = np.maximum(vmax, np.abs(speeds.V_Z))
            if np.any(state.A):
                vmax = np.maximum(vmax, np.abs(speeds.V_A))
            ds = cfl * float(np.min(dx_local / np.maximum(vmax, 1e-300)))
            ds = min(ds, ds_max, target - state.s)
            state, mod = step(state, mod, params, ds, q5_floor, mod1=mod1)
            state.validate()
        mod = observe(state, mod)
    return snaps


def write_snapshot(dirname: str, index: int, snap: Snapshot) -> tuple[str, str]:
    """Write one snapshot as CSV (x, W, Z, A) plus a JSON sidecar of scalars.

    Floats are serialized with repr (shortest round-trip, 17 significant
    digits when needed).
    """
    if snap.state is None:
        raise ValueError("snapshot was taken without keep_fields; no arrays to write")
    os.makedirs(dirname, exist_ok=True)
    base = os.path.join(dirname, f"snapshot_{index:04d}")
    st = snap.state
    xs = st.frame.grid.nodes
    W = st.W
    with open(base + ".csv", "w") as fh:
        fh.write("x,W,Z,A\n")
        for j in range(len(xs)):
            fh.write(
                f"{float(xs[j])!r},{float(W[j])!r},{float(st.Z[j])!r},{float(st.A[j])!r}\n"
            )
    with open(base + ".json", "w") as fh:
        json.dump(snap.row(), fh, indent=1)
        fh.write("\n")
    return base + ".csv", base + ".json"
