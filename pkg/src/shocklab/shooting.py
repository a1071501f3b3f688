"""Outer Newton iteration over the unstable-direction parameters.

Each evaluation is a fresh run from s0 = -log(eps): the target map
T_N(alpha, beta) = (q2, q3) observed at s_{N+1} = s0 + (N+1) * spacing.
Newton steps -- damped, trust-rectangle-limited -- drive the target to zero
over an expanding horizon, with the Jacobian supplied either by the lockstep
sensitivity integration (default) or by central finite differences.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .config import RunConfig
from .core import Frame, SolverFailure
from .dynamics import evolve
from .initial_data import build_initial, initialize_newton_seed
from .profile import make_profile_frame
from .sensitivity import evolve_with_sensitivity, initial_sensitivity

__all__ = [
    "TEval",
    "Iterate",
    "ShootingRecord",
    "ShootingError",
    "evaluate_T",
    "fd_jacobian",
    "newton_iterate",
    "run_shooting",
    "write_record",
]

DAMPINGS = (1.0, 0.5, 0.25, 0.125)


class ShootingError(SolverFailure):
    """Non-convergence of the Newton loop; carries the partial record."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


@dataclass(frozen=True)
class TEval:
    """One target-map evaluation: observables at the horizon s_{N+1}, the
    arrival residual at s_N, and optionally the Jacobian and snapshots."""

    q2: float
    q3: float
    arrival_q2: float
    arrival_q3: float
    jacobian: np.ndarray | None = None
    snapshots: list | None = None

    def __iter__(self):
        return iter((self.q2, self.q3))

    @property
    def E(self) -> np.ndarray:
        return np.array([self.q2, self.q3])


@dataclass(frozen=True)
class Iterate:
    N: int
    alpha: float
    beta: float
    s_N: float
    E: tuple[float, float]  # (q2, q3) at s_{N+1}
    jacobian: np.ndarray
    step_norm: float  # |d alpha| + |d beta| that produced this iterate
    damping_used: float
    arrival: tuple[float, float]  # (q2, q3) at s_N itself

    def row(self) -> dict:
        return {
            "N": self.N,
            "alpha": self.alpha,
            "beta": self.beta,
            "s_N": self.s_N,
            "E": list(self.E),
            "jacobian": [[float(v) for v in r] for r in self.jacobian],
            "step_norm": self.step_norm,
            "damping_used": self.damping_used,
            "arrival": list(self.arrival),
        }


@dataclass
class ShootingRecord:
    iterates: list[Iterate] = dataclasses.field(default_factory=list)
    converged: bool = False
    failure: str | None = None

    @property
    def last(self) -> Iterate:
        return self.iterates[-1]


def _run_setup(config: RunConfig, frame: Frame | None):
    if frame is None:
        frame = make_profile_frame(config.grid.build())
    return frame


def evaluate_T(
    alpha: float,
    beta: float,
    N: int,
    config: RunConfig,
    frame: Frame | None = None,
    with_jacobian: bool = False,
    cadence: float | None = None,
) -> TEval:
    """Fresh run from s0 to s_{N+1}; unpacks as (q2, q3) at the horizon."""
    frame = _run_setup(config, frame)
    spacing = config.shooting.spacing
    data = replace(config.data, alpha=alpha, beta=beta)
    sol = config.solver
    try:
        state, mod = build_initial(data, config.params, frame.grid, frame)
        s_end = state.s + (N + 1) * spacing
        kw = dict(cadence=spacing if cadence is None else cadence, cfl=sol.cfl,
                  ds_max=sol.ds_max, drift_tol=sol.drift_tol, q5_floor=sol.q5_floor)
        if with_jacobian:
            snaps, ssnaps, *_ = evolve_with_sensitivity(
                state, mod, initial_sensitivity(frame.grid, data.cutoff_kind),
                config.params, s_end, **kw)
            jac = ssnaps[-1].jac
        else:
            snaps = evolve(state, mod, config.params, s_end, **kw)
            jac = None
    except SolverFailure as exc:
        raise SolverFailure(
            f"target evaluation failed at (alpha={alpha!r}, beta={beta!r}, N={N}): {exc}"
        ) from exc
    # with cadence = spacing the horizon marks land on s0 + k*spacing
    arrival = min(snaps, key=lambda sn: abs(sn.s - (snaps[0].s + N * spacing)))
    fin = snaps[-1]
    return TEval(
        q2=float(fin.q[2]), q3=float(fin.q[3]),
        arrival_q2=float(arrival.q[2]), arrival_q3=float(arrival.q[3]),
        jacobian=jac, snapshots=snaps,
    )


def fd_jacobian(eval_fn, alpha: float, beta: float, N: int, h: float) -> np.ndarray:
    """Central-difference Jacobian of an (alpha, beta, N) -> TEval map;
    costs four extra evaluations."""
    cols = []
    for da, db in ((h, 0.0), (0.0, h)):
        tp = eval_fn(alpha + da, beta + db, N)
        tm = eval_fn(alpha - da, beta - db, N)
        cols.append((tp.E - tm.E) / (2.0 * h))
    return np.array(cols).T


def _make_evaluator(config: RunConfig, frame: Frame):
    """evaluator(alpha, beta, N) -> TEval with a Jacobian attached."""
    if config.shooting.jacobian_source == "sensitivity":
        def evaluator(alpha, beta, N):
            return evaluate_T(alpha, beta, N, config, frame, with_jacobian=True)
    else:
        def plain(alpha, beta, N):
            return evaluate_T(alpha, beta, N, config, frame)

        def evaluator(alpha, beta, N):
            ev = plain(alpha, beta, N)
            return replace(ev, jacobian=fd_jacobian(plain, alpha, beta, N,
                                                    config.fd_step))
    return evaluator


def _effective_newton_tol(config: RunConfig, frame: Frame) -> float:
    from .initial_data import perturbation_jets

    j2, _ = perturbation_jets(config.data, config.params, frame)
    return config.shooting.newton_tol * max(1.0, abs(j2))


def newton_iterate(record: ShootingRecord, config: RunConfig, evaluator=None,
                   frame: Frame | None = None,
                   newton_tol: float | None = None) -> ShootingRecord:
    """Append iterate N+1: damped Newton step off the last iterate, then a
    fresh evaluation at the extended horizon."""
    last = record.last
    J = np.asarray(last.jacobian, dtype=float)
    E = np.asarray(last.E, dtype=float)
    sh = config.shooting
    if evaluator is None:
        frame = _run_setup(config, frame)
        evaluator = _make_evaluator(config, frame)
    if newton_tol is None:
        newton_tol = sh.newton_tol

    cond = np.linalg.cond(J)
    if not np.isfinite(cond) or cond > sh.cond_max:
        raise ShootingError(
            f"Jacobian at N={last.N} ill-conditioned (cond = {cond:.3e} > "
            f"{sh.cond_max:.1e})", record)
    full_step = np.linalg.solve(J, E)

    old_norm = float(np.hypot(*E))
    N_next = last.N + 1
    s_next = last.s_N + sh.spacing
    if old_norm <= newton_tol:
        # already at the target (or its discretization floor): keep the
        # parameters and just extend the horizon; the zero step then trips
        # the Cauchy stop upstream
        ev = evaluator(last.alpha, last.beta, N_next)
        record.iterates.append(Iterate(
            N=N_next, alpha=last.alpha, beta=last.beta, s_N=s_next,
            E=(ev.q2, ev.q3), jacobian=ev.jacobian, step_norm=0.0,
            damping_used=1.0, arrival=(ev.arrival_q2, ev.arrival_q3)))
        return record

    for damping in DAMPINGS:
        da, db = damping * full_step
        if abs(da) > sh.trust_alpha or abs(db) > sh.trust_beta:
            continue  # outside the trust rectangle; shrink further
        cand_a, cand_b = last.alpha - da, last.beta - db
        ev = evaluator(cand_a, cand_b, N_next)
        new_norm = float(np.hypot(ev.q2, ev.q3))
        if new_norm < old_norm or new_norm <= newton_tol:
            record.iterates.append(Iterate(
                N=N_next, alpha=cand_a, beta=cand_b, s_N=s_next,
                E=(ev.q2, ev.q3), jacobian=ev.jacobian,
                step_norm=float(abs(da) + abs(db)), damping_used=damping,
                arrival=(ev.arrival_q2, ev.arrival_q3)))
            return record
    raise ShootingError(
        f"damping exhausted at N={last.N}: no step in {DAMPINGS} (within trust "
        f"rectangle {sh.trust_alpha} x {sh.trust_beta}) decreased |E| from "
        f"{old_norm:.3e}", record)


def run_shooting(config: RunConfig, evaluator=None, frame: Frame | None = None):
    """Full Newton loop; returns (alpha_inf, beta_inf, record, final_trajectory).

    The final trajectory is a fresh run with the converged parameters out to
    s0 + (N_max + 1) * spacing at the output cadence.
    """
    sh = config.shooting
    if sh.n_max < 3:
        raise ValueError(f"n_max must be >= 3 for shooting, got {sh.n_max}")
    production = evaluator is None
    if production:
        frame = _run_setup(config, frame)
        evaluator = _make_evaluator(config, frame)
        newton_tol = _effective_newton_tol(config, frame)
        alpha0, beta0 = initialize_newton_seed(config.data, config.params, frame)
    else:
        newton_tol = sh.newton_tol
        alpha0, beta0 = config.data.alpha, config.data.beta

    s0 = -math.log(config.params.epsilon)
    record = ShootingRecord()
    try:
        ev = evaluator(alpha0, beta0, 0)
    except SolverFailure as exc:
        raise ShootingError(f"seed evaluation failed: {exc}", record) from exc
    record.iterates.append(Iterate(
        N=0, alpha=alpha0, beta=beta0, s_N=s0, E=(ev.q2, ev.q3),
        jacobian=ev.jacobian, step_norm=0.0, damping_used=1.0,
        arrival=(ev.arrival_q2, ev.arrival_q3)))

    while record.last.N < sh.n_max:
        record = newton_iterate(record, config, evaluator, frame, newton_tol)
        if record.last.step_norm <= sh.cauchy_tol:
            record.converged = True
            break
    else:
        record.converged = float(np.hypot(*record.last.E)) <= newton_tol
        if not record.converged:
            record.failure = (
                f"N_max = {sh.n_max} reached with |E| = "
                f"{float(np.hypot(*record.last.E)):.3e} > {newton_tol:.1e}")

    alpha_inf, beta_inf = record.last.alpha, record.last.beta
    final_trajectory = None
    if production:
        fin = evaluate_T(alpha_inf, beta_inf, sh.n_max, config, frame,
                         cadence=config.output.cadence)
        final_trajectory = fin.snapshots
    return alpha_inf, beta_inf, record, final_trajectory


def write_record(record: ShootingRecord, path: str) -> None:
    """JSON lines: one row per iterate, then a summary row."""
    with open(path, "w") as fh:
        for it in record.iterates:
            fh.write(json.dumps(it.row()) + "\n")
        fh.write(json.dumps({
            "converged": record.converged,
            "failure": record.failure,
            "alpha_inf": record.last.alpha if record.iterates else None,
            "beta_inf": record.last.beta if record.iterates else None,
        }) + "\n")
