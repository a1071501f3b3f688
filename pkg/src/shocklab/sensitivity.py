"""Forward sensitivities of the modulated solve with respect to the two
shooting parameters.

For each parameter c in (alpha, beta) this evolves the fields (W_c, Z_c, A_c)
= d(W, Z, A)/dc together with the modulation-variable sensitivities, in
lockstep with the base state inside the same RK stages.  The result is an
exact linearization of the discrete scheme, so the 2x2 Newton Jacobian
[[d_a q2, d_b q2], [d_a q3, d_b q3]] matches central finite differences of
full runs to the FD truncation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .core import (
    FieldState,
    ModulationState,
    Params,
    SolverFailure,
    qvector,
)
from .dynamics import (
    Q5_FLOOR_DEFAULT,
    _BIN4,
    _forcing_jets_W,
    _local_spacing,
    _origin_jets,
    _scalar_rates,
    _take_snapshot,
    compute_forcings,
    compute_speeds,
    rhs,
    solve_modulation,
)
from .initial_data import cutoff

C_PARAMS = ("alpha", "beta")


@dataclass
class SensBranch:
    """Sensitivity fields and modulation sensitivities for one parameter."""

    W_c: np.ndarray
    Z_c: np.ndarray
    A_c: np.ndarray
    mu_c: float = 0.0
    tau_dot_c: float = 0.0
    kappa_dot_c: float = 0.0
    xi_dot_c: float = 0.0
    kappa_c: float = 0.0
    tau_c: float = 0.0


@dataclass
class SensitivityState:
    alpha: SensBranch
    beta: SensBranch

    def branches(self):
        return ((0, self.alpha), (1, self.beta))


def initial_sensitivity(grid, cutoff_kind: str = "smooth") -> SensitivityState:
    """d(initial data)/d(alpha, beta): x^2 chi and x^3 chi, everything else 0."""
    x = grid.nodes
    chi = cutoff(x, cutoff_kind)
    z = np.zeros_like(x)
    return SensitivityState(
        alpha=SensBranch(W_c=x**2 * chi, Z_c=z.copy(), A_c=z.copy()),
        beta=SensBranch(W_c=x**3 * chi, Z_c=z.copy(), A_c=z.copy()),
    )


def branch_jet(branch: SensBranch, frame, upto: int = 6) -> np.ndarray:
    """d_c q^(n) for n = 0..upto, read off the W_c field at the origin."""
    st = frame.stencils
    return st.q_weights[: upto + 1] @ branch.W_c[st.window]


def jacobian(sens: SensitivityState, frame) -> np.ndarray:
    """[[d_a q2, d_b q2], [d_a q3, d_b q3]] at the current time."""
    qa = branch_jet(sens.alpha, frame, upto=3)
    qb = branch_jet(sens.beta, frame, upto=3)
    return np.array([[qa[2], qb[2]], [qa[3], qb[3]]])


def _branch_forcing_hat(
    s, bt, kappa, q, Zj, Aj, params, q_c, Z_cj, A_cj, kappa_c, upto=4
) -> np.ndarray:
    """Explicit part of d_c F_W^(n)(0) (the beta_tau variation handled apart).

    d_c F^(n) = beta_tau F^(n) tau_dot_c + Fhat_c^(n) with
    Fhat_c^(n) = -bt e^(-3s/4) sum_j C(n,j) [A_c^(j) B^(n-j) + A^(j) B_c^(n-j)].
    """
    em14 = math.exp(-0.25 * s)
    U = em14 * q[: upto + 1].copy()
    U[0] += kappa
    B = params.beta3 * Zj[: upto + 1] + params.beta4 * U
    U_c = em14 * q_c[: upto + 1].copy()
    U_c[0] += kappa_c
    B_c = params.beta3 * Z_cj[: upto + 1] + params.beta4 * U_c
    pre = -bt * math.exp(-0.75 * s)
    out = np.empty(upto + 1)
    for n in range(upto + 1):
        out[n] = pre * sum(
            math.comb(n, j) * (A_cj[j] * B[n - j] + Aj[j] * B_c[n - j])
            for j in range(n + 1)
        )
    return out


def _branch_origin_jets(branch: SensBranch, frame, upto: int = 4):
    st = frame.stencils
    Z_cj = st.q_weights[: upto + 1] @ branch.Z_c[st.window]
    A_cj = st.q_weights[: upto + 1] @ branch.A_c[st.window]
    return Z_cj, A_cj


def solve_modulation_sensitivities(
    state: FieldState,
    mod: ModulationState,
    branch: SensBranch,
    params: Params,
    q5_floor: float = Q5_FLOOR_DEFAULT,
) -> tuple[float, float, float, float]:
    """(mu_c, tau_dot_c, kappa_dot_c, xi_dot_c): exact derivative of the
    modulation fixed point at its solution, solved in that order (the first
    two are a 2x2 linear system, the rest substitutions)."""
    qv = qvector(state).q
    if abs(qv[5]) < q5_floor:
        raise SolverFailure(
            f"profile degeneracy: |q5| = {abs(qv[5]):.3e} below floor {q5_floor}",
            s=state.s,
        )
    s = state.s
    bt = mod.beta_tau
    kappa = mod.kappa
    e14 = math.exp(0.25 * s)
    e34 = math.exp(0.75 * s)

    q_c = branch_jet(branch, state.frame)
    Zj, Aj = _origin_jets(state, upto=4)
    Z_cj, A_cj = _branch_origin_jets(branch, state.frame, upto=4)
    Gj = bt * params.beta2 * e14 * Zj
    Ghat = bt * params.beta2 * e14 * Z_cj
    Fj = _forcing_jets_W(s, bt, kappa, qv, Zj, Aj, params, upto=4)
    Fhat = _branch_forcing_hat(
        s, bt, kappa, qv, Zj, Aj, params, q_c, Z_cj, A_cj, branch.kappa_c, upto=4
    )

    # d_c of q5 mu = -10 bt q2 q3 - sum C(4,j) G^(j) q^(5-j) + F^(4), split into
    # (mu_c, tau_dot_c) unknowns on the left:
    C_a = (
        10.0 * bt**2 * qv[2] * qv[3]
        + bt * sum(_BIN4[j] * Gj[j] * qv[5 - j] for j in range(2, 5))
        - bt * Fj[4]
    )
    R_a = (
        -q_c[5] * mod.mu
        - 10.0 * bt * (q_c[2] * qv[3] + qv[2] * q_c[3])
        - sum(_BIN4[j] * (Gj[j] * q_c[5 - j] + Ghat[j] * qv[5 - j]) for j in range(2, 5))
        + Fhat[4]
    )
    # d_c of bt tau_dot = G^(1) - mu q2 + F^(1):
    C_b = bt * (1.0 + bt * mod.tau_dot) - bt * Gj[1] - bt * Fj[1]
    R_b = Ghat[1] - mod.mu * q_c[2] + Fhat[1]

    det = qv[5] * C_b - C_a * qv[2]
    if abs(det) < 1e-10 * max(1.0, abs(qv[5])):
        raise SolverFailure(
            f"singular modulation-sensitivity system (det = {det:.3e})", s=s
        )
    mu_c = (R_a * C_b - C_a * R_b) / det
    tau_dot_c = (qv[5] * R_b - R_a * qv[2]) / det
    kappa_dot_c = (
        e34 * (mu_c + bt * Fj[0] * tau_dot_c + Fhat[0])
        - bt**2 * tau_dot_c * mod.kappa_dot
    ) / bt
    xi_dot_c = (
        branch.kappa_c
        + params.beta2 * Z_cj[0]
        - (mu_c / bt - mod.mu * tau_dot_c) / e14
    )
    return mu_c, tau_dot_c, kappa_dot_c, xi_dot_c


def sensitivity_rhs(
    state: FieldState,
    mod: ModulationState,
    branch: SensBranch,
    params: Params,
    rates: tuple[float, float, float, float] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(dW_c/ds, dZ_c/ds, dA_c/ds): term-by-term d_c of the base transport.

    ``rates`` are (mu_c, tau_dot_c, kappa_dot_c, xi_dot_c); solved here when
    not supplied.  Upwind direction follows the *base* speeds, which is what
    differentiating the discrete scheme produces.
    """
    if rates is None:
        rates = solve_modulation_sensitivities(state, mod, branch, params)
    mu_c, td_c, kd_c, xd_c = rates
    fr = state.frame
    st = fr.stencils
    s = state.s
    bt = mod.beta_tau
    e14 = math.exp(0.25 * s)
    em14 = math.exp(-0.25 * s)
    em34 = math.exp(-0.75 * s)
    em1 = math.exp(-s)
    b1, b2, b3, b4, b5 = params.beta1, params.beta2, params.beta3, params.beta4, params.beta5

    speeds = compute_speeds(state, mod, params)
    force = compute_forcings(state, mod, params)
    W = state.W
    Z, A = state.Z, state.A
    W_c, Z_c, A_c = branch.W_c, branch.Z_c, branch.A_c
    U = em14 * W + mod.kappa
    U_c = em14 * W_c + branch.kappa_c

    dxW = fr.base_dW + kernels.upwind_dx(state.dev_W, speeds.V_W, st)

    G_W_c = td_c * bt * speeds.G_W - bt * (xd_c - branch.kappa_c) * e14 + bt * b2 * e14 * Z_c
    V_W_c = bt * W_c + td_c * bt**2 * W + G_W_c
    F_W_c = td_c * bt * force.F_W - bt * em34 * (
        A_c * (b3 * Z + b4 * U) + A * (b3 * Z_c + b4 * U_c)
    )
    dWc = (
        0.25 * W_c
        - V_W_c * dxW
        - speeds.V_W * kernels.upwind_dx(W_c, speeds.V_W, st)
        - em34 * (bt * kd_c + bt**2 * td_c * mod.kappa_dot)
        + F_W_c
    )

    G_Z_c = td_c * bt * speeds.G_Z + bt * e14 * (b2 * branch.kappa_c - xd_c + Z_c)
    G_A_c = td_c * bt * speeds.G_A + bt * e14 * (b1 * branch.kappa_c - xd_c + b1 * Z_c)
    F_Z_c = td_c * bt * force.F_Z - bt * em1 * (
        A_c * (b3 * U + b4 * Z) + A * (b3 * U_c + b4 * Z_c)
    )
    F_A_c = (
        td_c * bt * force.F_A
        - 4.0 * bt * b1 * em1 * A * A_c
        + bt * b1 * em1 * (U + Z) * (U_c + Z_c)
        - 2.0 * bt * b5 * em1 * (U - Z) * (U_c - Z_c)
    )
    za_base = np.any(Z) or np.any(A)
    za_sens = np.any(Z_c) or np.any(A_c)
    if za_base or za_sens:
        V_Z_c = bt * b2 * W_c + td_c * bt**2 * b2 * W + G_Z_c
        V_A_c = bt * b1 * W_c + td_c * bt**2 * b1 * W + G_A_c
        dxZ = kernels.upwind_dx(Z, speeds.V_Z, st) if za_base else 0.0
        dxA = kernels.upwind_dx(A, speeds.V_A, st) if za_base else 0.0
        dZc = (
            -V_Z_c * dxZ
            - speeds.V_Z * kernels.upwind_dx(Z_c, speeds.V_Z, st)
            + F_Z_c
        )
        dAc = (
            -V_A_c * dxA
            - speeds.V_A * kernels.upwind_dx(A_c, speeds.V_A, st)
            + F_A_c
        )
    else:
        dZc = F_Z_c
        dAc = F_A_c

    for name, arr in (("W_c", dWc), ("Z_c", dZc), ("A_c", dAc)):
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise SolverFailure(
                f"non-finite d{name}/ds at node {bad} (x = {fr.grid.nodes[bad]:.6g})",
                s=state.s, node=bad,
            )
    return dWc, dZc, dAc


def _branch_scalar_rates(mod: ModulationState, rates, s: float) -> np.ndarray:
    """(dtau_c/ds, dkappa_c/ds) from d_c of dX/ds = beta_tau e^(-s) X_dot."""
    _, td_c, kd_c, _ = rates
    bt = mod.beta_tau
    em1 = math.exp(-s)
    dtau_c = em1 * bt * td_c * (bt * mod.tau_dot + 1.0)
    dkappa_c = em1 * (bt * kd_c + bt**2 * td_c * mod.kappa_dot)
    return np.array([dtau_c, dkappa_c])


def _branch_stage(state, mod, sens, params):
    """Solve rates and RHS for both branches at one RK stage."""
    out = []
    for _, br in sens.branches():
        rates = solve_modulation_sensitivities(state, mod, br, params)
        out.append((rates, sensitivity_rhs(state, mod, br, params, rates)))
    return out


def step_with_sensitivity(
    state: FieldState,
    mod: ModulationState,
    sens: SensitivityState,
    params: Params,
    ds: float,
    q5_floor: float = Q5_FLOOR_DEFAULT,
    mod1: ModulationState | None = None,
) -> tuple[FieldState, ModulationState, SensitivityState]:
    """SSP-RK3 step of base state plus both sensitivity branches, stage by
    stage (mirrors dynamics.step; the combination coefficients must match
    exactly for the FD-equivalence property)."""
    if ds <= 0:
        raise ValueError(f"ds must be positive, got {ds}")
    s0 = state.s
    fr = state.frame

    def pack(sn):
        return [
            (br.W_c, br.Z_c, br.A_c, np.array([br.tau_c, br.kappa_c]))
            for _, br in sn.branches()
        ]

    def unpack(fields, rate_pairs, template):
        branches = []
        for (Wc, Zc, Ac, sc), rates, (_, br) in zip(fields, rate_pairs, template.branches()):
            mu_c, td_c, kd_c, xd_c = rates
            branches.append(SensBranch(
                W_c=Wc, Z_c=Zc, A_c=Ac, mu_c=mu_c, tau_dot_c=td_c,
                kappa_dot_c=kd_c, xi_dot_c=xd_c, tau_c=sc[0], kappa_c=sc[1],
            ))
        return SensitivityState(alpha=branches[0], beta=branches[1])

    u0 = (state.dev_W, state.Z, state.A)
    sc0 = np.array([mod.tau, mod.xi, mod.kappa])
    p0 = pack(sens)

    mod1 = mod1 or solve_modulation(state, params, mod, q5_floor)
    k1 = rhs(state, mod1, params)
    b1 = _branch_stage(state, mod1, sens, params)
    u1 = tuple(u + ds * k for u, k in zip(u0, k1))
    sc1 = sc0 + ds * _scalar_rates(mod1, s0)
    p1 = [
        (W + ds * kW, Z + ds * kZ, A + ds * kA, sc + ds * _branch_scalar_rates(mod1, r, s0))
        for (W, Z, A, sc), (r, (kW, kZ, kA)) in zip(p0, b1)
    ]
    st1 = FieldState(s=s0 + ds, dev_W=u1[0], Z=u1[1], A=u1[2], frame=fr)
    m1 = replace(mod1, tau=sc1[0], xi=sc1[1], kappa=sc1[2])
    sens1 = unpack(p1, [r for r, _ in b1], sens)

    mod2 = solve_modulation(st1, params, m1, q5_floor)
    k2 = rhs(st1, mod2, params)
    b2 = _branch_stage(st1, mod2, sens1, params)
    u2 = tuple(0.75 * u + 0.25 * (v + ds * k) for u, v, k in zip(u0, u1, k2))
    sc2 = 0.75 * sc0 + 0.25 * (sc1 + ds * _scalar_rates(mod2, s0 + ds))
    p2 = [
        (
            0.75 * W0 + 0.25 * (W1 + ds * kW),
            0.75 * Z0 + 0.25 * (Z1 + ds * kZ),
            0.75 * A0 + 0.25 * (A1 + ds * kA),
            0.75 * s0v + 0.25 * (s1v + ds * _branch_scalar_rates(mod2, r, s0 + ds)),
        )
        for (W0, Z0, A0, s0v), (W1, Z1, A1, s1v), (r, (kW, kZ, kA)) in zip(p0, p1, b2)
    ]
    st2 = FieldState(s=s0 + 0.5 * ds, dev_W=u2[0], Z=u2[1], A=u2[2], frame=fr)
    m2 = replace(mod2, tau=sc2[0], xi=sc2[1], kappa=sc2[2])
    sens2 = unpack(p2, [r for r, _ in b2], sens)

    mod3 = solve_modulation(st2, params, m2, q5_floor)
    k3 = rhs(st2, mod3, params)
    b3 = _branch_stage(st2, mod3, sens2, params)
    u3 = tuple(u / 3.0 + 2.0 / 3.0 * (v + ds * k) for u, v, k in zip(u0, u2, k3))
    sc3 = sc0 / 3.0 + 2.0 / 3.0 * (sc2 + ds * _scalar_rates(mod3, s0 + 0.5 * ds))
    p3 = [
        (
            W0 / 3.0 + 2.0 / 3.0 * (W2 + ds * kW),
            Z0 / 3.0 + 2.0 / 3.0 * (Z2 + ds * kZ),
            A0 / 3.0 + 2.0 / 3.0 * (A2 + ds * kA),
            s0v / 3.0 + 2.0 / 3.0 * (s2v + ds * _branch_scalar_rates(mod3, r, s0 + 0.5 * ds)),
        )
        for (W0, Z0, A0, s0v), (W2, Z2, A2, s2v), (r, (kW, kZ, kA)) in zip(p0, p2, b3)
    ]

    out = FieldState(s=s0 + ds, dev_W=u3[0], Z=u3[1], A=u3[2], frame=fr)
    mod_out = replace(mod3, tau=sc3[0], xi=sc3[1], kappa=sc3[2])
    sens_out = unpack(p3, [r for r, _ in b3], sens)
    return out, mod_out, sens_out


@dataclass(frozen=True)
class SensSnapshot:
    """Jacobian history entry: origin-jet sensitivities at one time."""

    s: float
    jac: np.ndarray  # 2x2
    q_alpha: np.ndarray  # 7-vector d_a q^(n)
    q_beta: np.ndarray
    rates_alpha: tuple  # (mu_c, tau_dot_c, kappa_dot_c, xi_dot_c, kappa_c, tau_c)
    rates_beta: tuple

    def row(self) -> dict:
        return {
            "s": self.s,
            "jac": [[float(v) for v in r] for r in self.jac],
            "d_alpha_q2": float(self.jac[0, 0]),
            "d_beta_q3": float(self.jac[1, 1]),
        }


def _sens_snapshot(state, mod, sens, params) -> SensSnapshot:
    fr = state.frame
    qa = branch_jet(sens.alpha, fr)
    qb = branch_jet(sens.beta, fr)
    rows = []
    for _, br in sens.branches():
        rates = solve_modulation_sensitivities(state, mod, br, params)
        rows.append(rates + (br.kappa_c, br.tau_c))
    return SensSnapshot(
        s=state.s,
        jac=np.array([[qa[2], qb[2]], [qa[3], qb[3]]]),
        q_alpha=qa, q_beta=qb,
        rates_alpha=tuple(rows[0]), rates_beta=tuple(rows[1]),
    )


def evolve_with_sensitivity(
    state: FieldState,
    mod: ModulationState,
    sens: SensitivityState,
    params: Params,
    s_target: float,
    cadence: float = 0.25,
    cfl: float = 0.4,
    ds_max: float = 2e-3,
    drift_tol: float = 1e-6,
    q5_floor: float = Q5_FLOOR_DEFAULT,
    keep_fields: bool = False,
):
    """March base + sensitivities to s_target.

    Returns (snapshots, sens_snapshots, final_state, final_mod, final_sens);
    the snapshot lists are aligned (one entry per mark, drift enforced as in
    the base driver).
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

    snaps = []
    sens_snaps = []

    def observe(st, md, sn):
        snap, md2 = _take_snapshot(st, md, params, q5_floor, keep_fields)
        d0, d1, d4 = abs(snap.q[0]), abs(snap.q[1] + 1.0), abs(snap.q[4])
        if max(d0, d1, d4) > drift_tol:
            raise SolverFailure(
                f"constraint drift (|q0|, |q1+1|, |q4|) = ({d0:.3e}, {d1:.3e}, {d4:.3e}) "
                f"exceeds {drift_tol:.1e}",
                s=st.s,
            )
        snaps.append(snap)
        sens_snaps.append(_sens_snapshot(st, md2, sn, params))
        return md2

    mod = observe(state, mod, sens)
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
            state, mod, sens = step_with_sensitivity(
                state, mod, sens, params, ds, q5_floor, mod1=mod1
            )
            state.validate()
        mod = observe(state, mod, sens)
    return snaps, sens_snaps, state, mod, sens
