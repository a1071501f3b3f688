"""Parameter-sensitivity fields: linearized RHS, modulation sensitivities,
lockstep integration, and the Newton Jacobian against finite differences."""

import math

import numpy as np
import pytest

from shocklab.core import (
    FieldState,
    ModulationState,
    make_frame,
    make_grid,
    make_params,
)
from shocklab.dynamics import evolve, rhs, solve_modulation, step
from shocklab.initial_data import cutoff
from shocklab.profile import make_profile_frame
from shocklab.sensitivity import (
    SensBranch,
    branch_jet,
    evolve_with_sensitivity,
    initial_sensitivity,
    jacobian,
    sensitivity_rhs,
    solve_modulation_sensitivities,
    step_with_sensitivity,
)

P3 = make_params(gamma=3.0, epsilon=1e-2, kappa0=1.0, bigM=2.0, ell=0.1)
P75 = make_params(gamma=1.4, epsilon=1e-2, kappa0=1.0, bigM=2.0, ell=0.1)

S0 = -math.log(P3.epsilon)


def idle_mod(kappa=1.0, xi_dot=0.0):
    return ModulationState(
        tau=0.0, xi=0.0, kappa=kappa, tau_dot=0.0, xi_dot=xi_dot,
        kappa_dot=0.0, mu=0.0, beta_tau=1.0,
    )


@pytest.fixture(scope="module")
def grid():
    return make_grid(513, 0.041, 10.0)


@pytest.fixture(scope="module")
def prof_frame(grid):
    return make_profile_frame(grid)


def hand_initial(frame, params, alpha=0.0, beta=0.0, bumps=False):
    # same construction as build_initial but without the resolution guard,
    # so the scheme itself can be exercised on coarse grids
    x = frame.grid.nodes
    eps = params.epsilon
    dev = frame.base_W * (cutoff(eps**0.25 * x) - 1.0)
    dev += (alpha * x**2 + beta * x**3) * cutoff(x)
    Z = np.zeros_like(x)
    A = np.zeros_like(x)
    if bumps:
        bump = eps**1.5 * np.exp(-(x**2)) * cutoff(4.0 * x * eps**0.25 / params.bigM)
        Z, A = bump, bump.copy()
    state = FieldState(s=-math.log(eps), dev_W=dev, Z=Z, A=A, frame=frame)
    return state, idle_mod(kappa=params.kappa0)


def zero_branch(grid, W_c=None, Z_c=None, A_c=None, **scalars):
    z = np.zeros(grid.n_nodes)
    return SensBranch(
        W_c=z.copy() if W_c is None else W_c,
        Z_c=z.copy() if Z_c is None else Z_c,
        A_c=z.copy() if A_c is None else A_c,
        **scalars,
    )


# ---------------------------------------------------------------------------
# initial data and jet extraction


def test_initial_jacobian(prof_frame, grid):
    sens = initial_sensitivity(grid)
    J = jacobian(sens, prof_frame)
    np.testing.assert_allclose(np.diag(J), [2.0, 6.0], rtol=1e-9)
    assert abs(J[0, 1]) < 1e-9 and abs(J[1, 0]) < 1e-9
    # quartic constraint starts clean on both branches
    assert abs(branch_jet(sens.alpha, prof_frame)[4]) < 1e-8
    assert abs(branch_jet(sens.beta, prof_frame)[4]) < 1e-8
    for br in (sens.alpha, sens.beta):
        assert not np.any(br.Z_c) and not np.any(br.A_c)
        assert br.mu_c == br.kappa_c == br.tau_c == 0.0


# ---------------------------------------------------------------------------
# modulation sensitivities


def test_modulation_sens_zero_on_profile(prof_frame, grid):
    state, mod = hand_initial(prof_frame, P3)
    mod = solve_modulation(state, P3, mod)
    rates = solve_modulation_sensitivities(state, mod, zero_branch(grid), P3)
    assert rates == (0.0, 0.0, 0.0, 0.0)


def test_modulation_sens_quartic_forcing(prof_frame, grid):
    # branch A_c = a x^4 chi on the s=0 profile: the only surviving term is
    # Fhat^(4) = -24 a beta4 kappa, so mu_c = Fhat^(4) / q5 with q5 = 120
    x = grid.nodes
    a = -1.2 / (24.0 * P3.beta4 * 1.0)
    state = FieldState(s=0.0, dev_W=np.zeros_like(x), Z=np.zeros_like(x),
                       A=np.zeros_like(x), frame=prof_frame)
    br = zero_branch(grid, A_c=a * x**4 * cutoff(x))
    mu_c, td_c, kd_c, xd_c = solve_modulation_sensitivities(state, idle_mod(), br, P3)
    assert abs(mu_c - 0.01) < 1e-9
    assert abs(td_c) < 1e-12
    assert abs(kd_c - 0.01) < 1e-9
    assert abs(xd_c + 0.01) < 1e-9


@pytest.mark.parametrize("params,bumps", [(P3, False), (P75, True)])
def test_modulation_sens_matches_fd(prof_frame, grid, params, bumps):
    # exact linearization of the fixed point: central FD over the data
    # parameter at the initial time agrees far below the FD truncation
    state, mod0 = hand_initial(prof_frame, params, alpha=1e-3, beta=-5e-4, bumps=bumps)
    mod = solve_modulation(state, params, mod0)
    x = grid.nodes
    chi = cutoff(x)
    h = 1e-5
    for W_c in (x**2 * chi, x**3 * chi):
        rates = solve_modulation_sensitivities(state, mod, zero_branch(grid, W_c=W_c), params)
        stp = FieldState(s=state.s, dev_W=state.dev_W + h * W_c, Z=state.Z,
                         A=state.A, frame=prof_frame)
        stm = FieldState(s=state.s, dev_W=state.dev_W - h * W_c, Z=state.Z,
                         A=state.A, frame=prof_frame)
        mp = solve_modulation(stp, params, mod0)
        mm = solve_modulation(stm, params, mod0)
        fd = (
            (mp.mu - mm.mu) / (2 * h),
            (mp.tau_dot - mm.tau_dot) / (2 * h),
            (mp.kappa_dot - mm.kappa_dot) / (2 * h),
            (mp.xi_dot - mm.xi_dot) / (2 * h),
        )
        for got, want in zip(rates, fd):
            assert abs(got - want) <= 1e-5 * max(abs(want), 1e-4)


# ---------------------------------------------------------------------------
# linearized RHS


def test_zero_everything_gives_zero_rhs(grid):
    frame = make_frame(grid)
    state = FieldState(s=1.0, dev_W=np.zeros(grid.n_nodes),
                       Z=np.zeros(grid.n_nodes), A=np.zeros(grid.n_nodes),
                       frame=frame)
    dW, dZ, dA = sensitivity_rhs(state, idle_mod(), zero_branch(grid), P75,
                                 rates=(0.0, 0.0, 0.0, 0.0))
    np.testing.assert_array_equal(dW, 0.0)
    np.testing.assert_array_equal(dZ, 0.0)
    np.testing.assert_array_equal(dA, 0.0)


def test_rhs_decoupled_reduction(prof_frame, grid):
    # base and branch Z, A all zero: dZ_c/ds must vanish identically and
    # dA_c/ds collapses to bt e^(-s) (beta1 - 2 beta5) U U_c, which is
    # exactly zero for gamma = 3
    x = grid.nodes
    state, mod = hand_initial(prof_frame, P75)
    mod = solve_modulation(state, P75, mod)
    br = zero_branch(grid, W_c=x**2 * cutoff(x), kappa_c=0.3)
    rates = solve_modulation_sensitivities(state, mod, br, P75)
    dW, dZ, dA = sensitivity_rhs(state, mod, br, P75, rates)
    np.testing.assert_array_equal(dZ, 0.0)
    s = state.s
    U = math.exp(-0.25 * s) * state.W + mod.kappa
    U_c = math.exp(-0.25 * s) * br.W_c + br.kappa_c
    want = mod.beta_tau * math.exp(-s) * (P75.beta1 - 2 * P75.beta5) * U * U_c
    np.testing.assert_allclose(dA, want, rtol=1e-12, atol=1e-18)

    state3, mod3 = hand_initial(prof_frame, P3)
    mod3 = solve_modulation(state3, P3, mod3)
    rates3 = solve_modulation_sensitivities(state3, mod3, br, P3)
    _, dZ3, dA3 = sensitivity_rhs(state3, mod3, br, P3, rates3)
    np.testing.assert_array_equal(dZ3, 0.0)
    np.testing.assert_array_equal(dA3, 0.0)


def test_rhs_matches_fd_of_base_rhs(prof_frame, grid):
    # branch built from central differences of two evolved base runs; the
    # linearized RHS must reproduce the FD of the base RHS.  Field-level
    # agreement is tight; the origin-jet rates carry an extra noise floor
    # from differencing the iteratively solved modulation at gamma != 3.
    h = 1e-5
    runs = {}
    for tag, da in (("0", 0.0), ("p", h), ("m", -h)):
        st, md = hand_initial(prof_frame, P75, alpha=1e-3 + da, beta=-5e-4, bumps=True)
        fin = evolve(st, md, P75, st.s + 0.02, cadence=0.02, keep_fields=True)[-1]
        runs[tag] = (fin.state, ModulationState(
            tau=fin.tau, xi=fin.xi, kappa=fin.kappa, tau_dot=fin.tau_dot,
            xi_dot=fin.xi_dot, kappa_dot=fin.kappa_dot, mu=fin.mu,
            beta_tau=fin.beta_tau))
    (st0, md0), (stp, mdp), (stm, mdm) = runs["0"], runs["p"], runs["m"]
    br = SensBranch(
        W_c=(stp.dev_W - stm.dev_W) / (2 * h),
        Z_c=(stp.Z - stm.Z) / (2 * h),
        A_c=(stp.A - stm.A) / (2 * h),
        kappa_c=(mdp.kappa - mdm.kappa) / (2 * h),
        tau_c=(mdp.tau - mdm.tau) / (2 * h),
    )
    rates = solve_modulation_sensitivities(st0, md0, br, P75)
    assert abs(rates[1] - (mdp.tau_dot - mdm.tau_dot) / (2 * h)) < 1e-7
    assert abs(rates[0] - (mdp.mu - mdm.mu) / (2 * h)) < 0.05 * abs(rates[0]) + 1e-7

    ours = sensitivity_rhs(st0, md0, br, P75, rates)
    kp, km = rhs(stp, mdp, P75), rhs(stm, mdm, P75)
    for got, a, b, tol in zip(ours, kp, km, (1e-4, 1e-7, 1e-7)):
        fd = (a - b) / (2 * h)
        assert np.max(np.abs(got - fd)) <= tol * max(1.0, np.max(np.abs(fd)))


# ---------------------------------------------------------------------------
# lockstep stepping


def test_lockstep_base_matches_plain_step(prof_frame, grid):
    state, mod = hand_initial(prof_frame, P3, alpha=1e-3)
    sens = initial_sensitivity(grid)
    s1, m1 = step(state, mod, P3, 1e-3)
    s2, m2, _ = step_with_sensitivity(state, mod, sens, P3, 1e-3)
    assert np.array_equal(s1.dev_W, s2.dev_W)
    assert m1.kappa == m2.kappa and m1.tau == m2.tau and m1.xi == m2.xi


def test_pure_profile_diagonal_growth(prof_frame, grid):
    # on the unperturbed profile the sensitivity jets obey exactly
    # d/ds (d_a q2) = 3/4 d_a q2 and d/ds (d_b q3) = 1/2 d_b q3
    state, mod = hand_initial(prof_frame, P3)
    sens = initial_sensitivity(grid)
    _, ssnaps, *_ = evolve_with_sensitivity(
        state, mod, sens, P3, state.s + 1.0, cadence=0.5)
    J = ssnaps[-1].jac
    np.testing.assert_allclose(
        np.diag(J), [2.0 * math.exp(0.75), 6.0 * math.exp(0.5)], rtol=1e-8)
    assert abs(J[0, 1]) < 1e-8 and abs(J[1, 0]) < 1e-8


@pytest.fixture(scope="module")
def perturbed_jacobians(prof_frame, grid):
    """Lockstep Jacobian after one s-unit plus central-FD Jacobians at
    several steps h (each column from a +/- pair of full base runs)."""
    alpha, beta = 1e-3, -5e-4

    state, mod = hand_initial(prof_frame, P3, alpha, beta)
    _, ssnaps, *_ = evolve_with_sensitivity(
        state, mod, initial_sensitivity(grid), P3, state.s + 1.0, cadence=1.0)
    J_sens = ssnaps[-1].jac

    def fd_jacobian(h):
        cols = []
        for da, db in ((h, 0.0), (0.0, h)):
            stp, mdp = hand_initial(prof_frame, P3, alpha + da, beta + db)
            stm, mdm = hand_initial(prof_frame, P3, alpha - da, beta - db)
            sp = evolve(stp, mdp, P3, stp.s + 1.0, cadence=1.0, drift_tol=1e-4)[-1]
            sm = evolve(stm, mdm, P3, stm.s + 1.0, cadence=1.0, drift_tol=1e-4)[-1]
            cols.append([(sp.q[2] - sm.q[2]) / (2 * h),
                         (sp.q[3] - sm.q[3]) / (2 * h)])
        return np.array(cols).T

    return J_sens, {h: fd_jacobian(h) for h in (1e-6, 4e-3, 2e-3)}


def test_jacobian_matches_fd_full_run(perturbed_jacobians):
    J_sens, fd = perturbed_jacobians
    rel = np.linalg.norm(J_sens - fd[1e-6]) / np.linalg.norm(fd[1e-6])
    assert rel <= 1e-5


def test_fd_duality_order(perturbed_jacobians):
    # halving h must cut |J_fd(h) - J_sens| by ~4 (second-order duality)
    J_sens, fd = perturbed_jacobians
    e_2h = np.linalg.norm(fd[4e-3] - J_sens)
    e_h = np.linalg.norm(fd[2e-3] - J_sens)
    order = math.log2(e_2h / e_h)
    assert order >= 1.9


# ---------------------------------------------------------------------------
# growth over a long window


def test_growth_rates_and_cross_terms(prof_frame, grid):
    # small seed keeps the base nonlinearity (and therefore the q4 time
    # integration residual) low over the 5-unit window; the constraint
    # tolerance is relaxed accordingly for this coarse grid
    state, mod = hand_initial(prof_frame, P3, alpha=1e-4, beta=-5e-5)
    sens = initial_sensitivity(grid)
    _, ssnaps, *_ = evolve_with_sensitivity(
        state, mod, sens, P3, state.s + 5.0, cadence=0.25, drift_tol=1e-5)
    s = np.array([sn.s for sn in ssnaps])
    J = np.array([sn.jac for sn in ssnaps])

    assert np.all(J[:, 0, 0] > 0.0)
    assert np.all(J[:, 1, 1] > 0.0)

    sel = s >= s[0] + 1.0
    slope_a = np.polyfit(s[sel], np.log(J[sel, 0, 0]), 1)[0]
    slope_b = np.polyfit(s[sel], np.log(J[sel, 1, 1]), 1)[0]
    assert 0.65 <= slope_a <= 0.85
    assert 0.40 <= slope_b <= 0.60

    assert np.max(np.abs(J[:, 0, 1]) / J[:, 0, 0]) <= 0.5
    assert np.max(np.abs(J[:, 1, 0]) / J[:, 1, 1]) <= 0.5
