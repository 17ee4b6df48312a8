"""Implicit theta-scheme time stepping on the condensed trace system.

Unknowns live at level n+1; every spatial term is evaluated at the convex
combination w^{n+theta} = (1-theta)w^n + theta*w^{n+1} (traces included,
boundary data and source at t^{n+theta}), while the time derivative is
(u^{n+1}-u^n)/dt. Each Newton iteration statically condenses the
linearization and solves the block tridiagonal trace system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NewtonError, SolverError, StepFailure
from .hdg_operator import (
    Discretization,
    FieldState,
    TraceState,
    condense,
    init_aux_fields,
    recover_local,
    split_local,
)
from .linalg import block_tridiag_solve
from .mesh_basis import integrate_field, l2_norm

DAMPING_FLOOR = 1.0 / 16.0


@dataclass(frozen=True)
class ThetaConfig:
    """Time scheme: theta = 1/2 is Crank-Nicolson, theta = 1 backward Euler."""

    theta: float
    dt: float
    t_final: float
    newton_tol: float = 1e-10
    newton_max_iter: int = 25

    def __post_init__(self):
        if not 0.5 <= self.theta <= 1.0:
            raise ConfigurationError(f"theta must lie in [1/2, 1], got {self.theta}")
        if self.dt <= 0.0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.t_final < 0.0:
            raise ConfigurationError(f"t_final must be >= 0, got {self.t_final}")
        if self.newton_tol <= 0.0:
            raise ConfigurationError("newton_tol must be positive")
        if self.newton_max_iter < 1:
            raise ConfigurationError("newton_max_iter must be >= 1")


@dataclass(frozen=True)
class DiagnosticsRecord:
    step: int
    time: float
    energy: float
    mass: float
    hamiltonian: float
    newton_iterations: int
    newton_final_residual: float


@dataclass
class SimulationResult:
    state: FieldState
    traces: TraceState
    records: list


def discrete_energy(u_coeffs: np.ndarray, mesh) -> float:
    """E_h = (1/2) ||u_h||^2 over the mesh."""
    return 0.5 * l2_norm(u_coeffs, mesh) ** 2


def conserved_quantities(state: FieldState, disc: Discretization):
    """(E, V, I): momentum int u^2, energy functional, mass int u.

    V = int(u^3/3 + (gamma/2) v^2 + beta q^2) with the discrete v, q fields
    standing in for the antiderivative and the derivative of u.
    """
    u_q = state.u @ disc.V
    v_q = state.v @ disc.V
    q_q = state.q @ disc.V
    dens = (u_q ** 3) / 3.0 + 0.5 * disc.config.gamma * v_q ** 2 \
        + disc.config.beta * q_q ** 2
    energy = l2_norm(state.u, disc.mesh) ** 2
    hamiltonian = float(np.dot(disc.jac, dens @ disc.wq))
    mass = integrate_field(state.u, disc.mesh)
    return energy, hamiltonian, mass


def _diagnostics(disc, state, step, iters, residual) -> DiagnosticsRecord:
    _, hamiltonian, mass = conserved_quantities(state, disc)
    return DiagnosticsRecord(
        step=step,
        time=state.time,
        energy=discrete_energy(state.u, disc.mesh),
        mass=mass,
        hamiltonian=hamiltonian,
        newton_iterations=iters,
        newton_final_residual=residual,
    )


def theta_step(disc: Discretization, state0: FieldState, traces0: TraceState,
               theta_cfg: ThetaConfig, dt: float | None = None, step: int = -1):
    """Advance one step of size dt (default theta_cfg.dt).

    Returns:
        (state1, traces1, DiagnosticsRecord). The record counts condensed
        solves; a converged initial guess reports zero iterations.

    Raises:
        NewtonError: No convergence within newton_max_iter solves.
    """
    if dt is None:
        dt = theta_cfg.dt
    th = theta_cfg.theta
    t0 = state0.time
    t1 = t0 + dt
    t_th = t0 + th * dt

    state1 = state0.copy()
    state1.time = t1
    traces1 = traces0.copy()
    traces1.time = t1
    disc.apply_bc(traces1, t1)

    k1 = disc.n_modes
    Mq = disc.Mq
    jac_dt = disc.jac / dt
    tol = theta_cfg.newton_tol

    n_solves = 0
    last_res = np.inf
    n_increases = 0
    lam = 1.0
    while True:
        u_m = (1.0 - th) * state0.u + th * state1.u
        v_m = (1.0 - th) * state0.v + th * state1.v
        p_m = (1.0 - th) * state0.p + th * state1.p
        q_m = (1.0 - th) * state0.q + th * state1.q
        tr_m = disc.combine_traces(traces0, traces1, th, t_th)
        slots = disc.gather_slots(tr_m)
        parts = disc.assemble(u_m, v_m, p_m, q_m, slots, t_th)
        G = parts.S
        G[:, :k1] += jac_dt[:, None] * ((state1.u - state0.u) @ Mq)
        res = float(np.abs(G).max())
        if parts.T.size:
            res = max(res, float(np.abs(parts.T).max()))
        if res <= tol:
            break
        if n_solves >= theta_cfg.newton_max_iter:
            raise NewtonError(n_solves, res)
        if res >= last_res:
            n_increases += 1
            if n_increases >= 2:
                lam = max(0.5 * lam, DAMPING_FLOOR)
        else:
            n_increases = 0
            lam = 1.0
        last_res = res

        A = th * parts.dS_dw
        A[:, :k1, :k1] += jac_dt[:, None, None] * Mq
        blocks = condense(disc, A, th * parts.dS_dtr, G, parts.T,
                          th * parts.dT_dtr, th * parts.dT_dwL,
                          th * parts.dT_dwR)
        dtau = block_tridiag_solve(blocks.system)
        dw = recover_local(dtau, blocks)
        n_solves += 1
        du, dv, dp, dq = split_local(disc, lam * dw)
        state1.u += du
        state1.v += dv
        state1.p += dp
        state1.q += dq
        disc.add_free_vector(traces1, lam * dtau)

    return state1, traces1, _diagnostics(disc, state1, step, n_solves, res)


def run_simulation(disc: Discretization, theta_cfg: ThetaConfig,
                   u0_coeffs: np.ndarray | None = None,
                   initial: tuple | None = None,
                   observer=None, observe_every: int = 1) -> SimulationResult:
    """Integrate from t=0 to t_final, collecting per-step diagnostics.

    Initial data: either u0_coeffs (aux fields and traces then come from
    init_aux_fields) or a prebuilt (FieldState, TraceState) pair in
    `initial` for cases with exact auxiliary initializations. A trailing
    partial step covers t_final when dt does not divide it.

    The observer, if given, is called as observer(step, time, state) at
    step 0 and then every observe_every-th step plus the final one.

    Raises:
        StepFailure: A step's Newton solve failed; carries index and time.
    """
    if (u0_coeffs is None) == (initial is None):
        raise ConfigurationError("provide exactly one of u0_coeffs and initial")
    if initial is not None:
        state, traces = initial
        state = state.copy()
        traces = traces.copy()
    else:
        state, traces = init_aux_fields(u0_coeffs, disc)

    records = [_diagnostics(disc, state, 0, 0, 0.0)]
    if observer is not None:
        observer(0, state.time, state)

    t_final = theta_cfg.t_final
    tiny = 1e-12 * max(1.0, abs(t_final))
    step = 0
    while t_final - state.time > tiny:
        dt = min(theta_cfg.dt, t_final - state.time)
        step += 1
        try:
            state, traces, record = theta_step(disc, state, traces, theta_cfg,
                                               dt=dt, step=step)
        except SolverError as exc:
            raise StepFailure(step, state.time, exc) from exc
        records.append(record)
        at_end = t_final - state.time <= tiny
        if observer is not None and (step % observe_every == 0 or at_end):
            observer(step, state.time, state)
    return SimulationResult(state, traces, records)
