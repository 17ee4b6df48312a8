"""HDG spatial operator for the Ostrovsky equation.

The PDE u_t - beta*u_xxx + f(u)_x - gamma*d_x^{-1}(u) = 0 with
f(u) = (alpha/2) u^2 is written as the first-order system

    u_t - p_x + f(u)_x - gamma*v = g,    v_x = u,    p = beta*q_x,    q = u_x,

discretized element-by-element with single-valued traces (u_hat, v_hat,
q_hat) on the mesh skeleton. Per element the incoming traces are

    beta > 0 : u_hat at both endpoints, v_hat at the right, q_hat at the left
    beta < 0 : u_hat at both endpoints, v_hat and q_hat at the right
    beta = 0 : u_hat at both endpoints, v_hat at the right (p, q dropped)

and the remaining endpoint traces are derived through the stabilization
parameters (tau_pu, tau_vq, tau_qv, tau_f). Transmission rows enforce
single-valuedness of the derived traces at every node not fixed by
boundary data. The element unknowns are eliminated per Newton iteration
(static condensation) leaving a block tridiagonal skeleton system with
one (u_hat, v_hat, q_hat) block per free node.

Local unknown ordering per element: [u, v, p, q] modal blocks of k+1
coefficients each (u, v only when beta = 0). Transmission row ordering
per node: [flux match, v match, q match].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CondensationError, ConfigurationError, UsageError
from .linalg import BlockTridiagonalSystem, block_tridiag_solve, lu_factor
from .mesh_basis import BasisSpec, Mesh, integrate_field

REGIMES = ("dirichlet_beta_pos", "dirichlet_beta_neg", "periodic")

# beta below this (but positive) triggers row scaling of the p = beta*q_x block
SMALL_BETA = 1e-8


def _zero(_t: float) -> float:
    return 0.0


@dataclass(frozen=True)
class BoundaryData:
    """Time-dependent Dirichlet data; unused entries may stay at zero.

    u_left/u_right always apply in Dirichlet regimes; v_right always;
    q_left applies for beta > 0 and q_right for beta < 0.
    """

    u_left: Callable[[float], float] = _zero
    u_right: Callable[[float], float] = _zero
    v_right: Callable[[float], float] = _zero
    q_left: Callable[[float], float] = _zero
    q_right: Callable[[float], float] = _zero


@dataclass(frozen=True)
class ProblemConfig:
    """Equation parameters, flux, boundary regime, and data.

    Attributes:
        alpha: Quadratic flux coefficient, f(u) = (alpha/2) u^2; alpha >= 0.
        beta: Dispersion coefficient; its sign selects the trace pattern.
        gamma: Rotation coefficient, strictly positive.
        bc_regime: One of dirichlet_beta_pos, dirichlet_beta_neg, periodic.
        degenerate_dispersion: Use the reduced two-field scheme; requires
            beta == 0 and the periodic regime.
        source: Optional g(x, t), vectorized in x.
        bc: Boundary data callables (ignored in the periodic regime).
    """

    alpha: float
    beta: float
    gamma: float
    bc_regime: str
    degenerate_dispersion: bool = False
    source: Callable[[np.ndarray, float], np.ndarray] | None = None
    bc: BoundaryData = field(default_factory=BoundaryData)

    def __post_init__(self):
        if self.bc_regime not in REGIMES:
            raise ConfigurationError(
                f"unknown bc_regime {self.bc_regime!r}; expected one of {REGIMES}")
        if self.gamma <= 0.0:
            raise ConfigurationError(f"gamma must be positive, got {self.gamma}")
        if self.alpha < 0.0:
            raise ConfigurationError(f"alpha must be nonnegative, got {self.alpha}")
        if self.bc_regime == "dirichlet_beta_pos" and not self.beta > 0.0:
            raise ConfigurationError(
                f"dirichlet_beta_pos requires beta > 0, got beta={self.beta}")
        if self.bc_regime == "dirichlet_beta_neg" and not self.beta < 0.0:
            raise ConfigurationError(
                f"dirichlet_beta_neg requires beta < 0, got beta={self.beta}")
        if self.degenerate_dispersion:
            if self.beta != 0.0:
                raise ConfigurationError(
                    "degenerate_dispersion requires beta == 0")
            if self.bc_regime != "periodic":
                raise ConfigurationError(
                    "degenerate_dispersion is only supported with periodic bc")
        elif self.beta == 0.0:
            raise ConfigurationError(
                "beta == 0 requires degenerate_dispersion=True")

    def flux(self, u):
        return 0.5 * self.alpha * u * u

    def flux_deriv(self, u):
        return self.alpha * u


@dataclass(frozen=True)
class StabParams:
    """Stabilization parameters of the trace laws.

    tau_f_mode is 'constant' (use tau_f_value) or 'adaptive' (the
    state-dependent tilde_tau closed form).
    """

    tau_pu: float
    tau_vq: float
    tau_qv: float
    tau_f_mode: str = "constant"
    tau_f_value: float = 0.0

    def __post_init__(self):
        if self.tau_f_mode not in ("constant", "adaptive"):
            raise ConfigurationError(
                f"tau_f_mode must be 'constant' or 'adaptive', got {self.tau_f_mode!r}")
        if self.tau_pu < 0.0:
            raise ConfigurationError(f"tau_pu must be >= 0, got {self.tau_pu}")

    @classmethod
    def defaults(cls, beta: float, gamma: float) -> "StabParams":
        """tau_pu=2, tau_f=2, and 0.9*sqrt-scaled tau_vq/tau_qv (0 for beta <= 0)."""
        if beta > 0.0:
            tau_vq = 0.9 * np.sqrt(beta / gamma)
            tau_qv = 0.9 * np.sqrt(gamma / beta)
        else:
            tau_vq = tau_qv = 0.0
        return cls(2.0, tau_vq, tau_qv, "constant", 2.0)

    @classmethod
    def conservative(cls, beta: float, gamma: float) -> "StabParams":
        """Exactly energy-conservative choice; requires beta > 0."""
        if beta <= 0.0:
            raise ConfigurationError("conservative parameters require beta > 0")
        return cls(0.0, np.sqrt(beta / gamma), np.sqrt(gamma / beta), "adaptive")

    def is_conservative(self, beta: float, gamma: float) -> bool:
        if self.tau_pu != 0.0 or self.tau_f_mode != "adaptive" or beta <= 0.0:
            return False
        return (abs(self.tau_vq - np.sqrt(beta / gamma)) < 1e-14
                and abs(self.tau_qv - np.sqrt(gamma / beta)) < 1e-14)


def tilde_tau(u_minus, u_hat, n, alpha):
    """Flux stabilization (1/(u_hat-u)^2) * int_{u_hat}^{u}(f(s)-f(u)) n ds.

    For the quadratic flux the integral collapses to the closed form
    -alpha*n*(u_hat + 2*u_minus)/6, which is what is returned (the u_hat = u
    limit is included). Satisfies |tilde_tau| <= (alpha/2)*max(|u_hat|, |u|).
    """
    return -alpha * n * (np.asarray(u_hat) + 2.0 * np.asarray(u_minus)) / 6.0


def resolve_tau_f(stab: StabParams, u_minus, u_hat, n, alpha):
    """tau_f value used in the flux trace: the constant, or tilde_tau.

    In adaptive mode the degenerate point u_hat == u falls back to |f'(u)|;
    the penalty multiplies (u_hat - u), so the fallback does not change the
    flux there, only the reported coefficient.
    """
    if stab.tau_f_mode == "constant":
        return stab.tau_f_value
    u_minus = np.asarray(u_minus, dtype=float)
    u_hat = np.asarray(u_hat, dtype=float)
    value = tilde_tau(u_minus, u_hat, n, alpha)
    fallback = alpha * np.abs(u_minus)
    out = np.where(u_hat == u_minus, fallback, value)
    return float(out) if out.ndim == 0 else out


@dataclass
class FieldState:
    """Element coefficient arrays (n_elements, k+1) for u, v, p, q at a time."""

    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    q: np.ndarray
    time: float

    def copy(self) -> "FieldState":
        return FieldState(self.u.copy(), self.v.copy(), self.p.copy(),
                          self.q.copy(), self.time)


@dataclass
class TraceState:
    """Skeleton trace values per node.

    Arrays are indexed by node: length n_elements + 1 in Dirichlet regimes
    (entries fixed by boundary data included), length n_elements in the
    periodic regime (node 0 is node N). q_hat stays zero in the beta = 0
    scheme.
    """

    u_hat: np.ndarray
    v_hat: np.ndarray
    q_hat: np.ndarray
    time: float

    def copy(self) -> "TraceState":
        return TraceState(self.u_hat.copy(), self.v_hat.copy(),
                          self.q_hat.copy(), self.time)


@dataclass
class SpatialParts:
    """Batched spatial residuals and derivatives of one linearization point.

    S, dS_dw, dS_dtr are per element; T, dT_dtr, dT_dwL, dT_dwR are per
    free node (transmission rows against the left/right neighbor elements).
    """

    S: np.ndarray
    dS_dw: np.ndarray
    dS_dtr: np.ndarray
    T: np.ndarray
    dT_dtr: np.ndarray
    dT_dwL: np.ndarray
    dT_dwR: np.ndarray


class Discretization:
    """Mesh + basis + problem + stabilization bound into an assembler.

    Precomputes quadrature tables, the trace layout of the regime, and the
    slot coupling patterns used by static condensation.
    """

    def __init__(self, mesh: Mesh, basis: BasisSpec, config: ProblemConfig,
                 stab: StabParams):
        if config.bc_regime == "periodic" and not mesh.periodic:
            raise ConfigurationError("periodic regime requires a periodic mesh")
        if config.bc_regime != "periodic" and mesh.periodic:
            raise ConfigurationError("Dirichlet regimes require a non-periodic mesh")
        self.mesh = mesh
        self.basis = basis
        self.config = config
        self.stab = stab

        if config.degenerate_dispersion:
            self.family = "oh"
        elif config.beta > 0.0:
            self.family = "pos"
        else:
            self.family = "neg"

        n = mesh.n_elements
        k1 = basis.n_modes
        self.n_elements = n
        self.n_modes = k1
        self.n_fields = 2 if self.family == "oh" else 4
        self.n_local = self.n_fields * k1
        self.n_slots = 3 if self.family == "oh" else 4
        self.block_size = 2 if self.family == "oh" else 3

        self.periodic = config.bc_regime == "periodic"
        self.n_trace_nodes = n if self.periodic else n + 1
        if self.periodic:
            self.free_nodes = np.arange(n)
        else:
            self.free_nodes = np.arange(1, n)
        self.n_blocks = len(self.free_nodes)
        self.elem_left = (self.free_nodes - 1) % n
        self.elem_right = self.free_nodes % n

        # quadrature tables
        self.wq = basis.quad.weights
        self.V = basis.val
        self.Vd = basis.der
        self.eL = basis.left
        self.eR = basis.right
        self.B1 = (self.Vd * self.wq) @ self.V.T
        self.Mq = (self.V * self.wq) @ self.V.T
        self.jac = 0.5 * mesh.element_sizes
        self.xq = mesh.physical_points(basis.quad.points)
        self.LL = np.outer(self.eL, self.eL)
        self.RR = np.outer(self.eR, self.eR)

        beta = config.beta
        self.p_row_scale = 1.0 / SMALL_BETA if 0.0 < beta <= SMALL_BETA else 1.0

        # element slots coupling to the left node (slot index, block component)
        # and to the right node; identical for the condensation scatter on
        # both sides of a transmission row
        if self.family == "pos":
            self.left_slots = ((0, 0), (3, 2))
            self.right_slots = ((1, 0), (2, 1))
        elif self.family == "neg":
            self.left_slots = ((0, 0),)
            self.right_slots = ((1, 0), (2, 1), (3, 2))
        else:
            self.left_slots = ((0, 0),)
            self.right_slots = ((1, 0), (2, 1))

        self._build_slot_maps()
        self._condense_token = 0

    # ---------------------------------------------------------------- layout

    def _build_slot_maps(self):
        n = self.n_elements
        b = self.block_size
        node_l = np.arange(n)
        node_r = np.arange(1, n + 1)
        if self.periodic:
            node_r = node_r % n

        def node_to_block(nodes):
            if self.periodic:
                return nodes
            blocks = nodes - 1
            blocks[(nodes == 0) | (nodes == n)] = -1
            return blocks

        blk_l = node_to_block(node_l.copy())
        blk_r = node_to_block(node_r.copy())
        slot_block = np.empty((n, self.n_slots), dtype=np.intp)
        slot_comp = np.empty_like(slot_block)
        for s, c in self.left_slots:
            slot_block[:, s] = blk_l
            slot_comp[:, s] = c
        for s, c in self.right_slots:
            slot_block[:, s] = blk_r
            slot_comp[:, s] = c
        self.slot_block = slot_block
        self.slot_comp = slot_comp
        # flat index into the free vector, -1 where the slot is boundary data
        flat = slot_block * b + slot_comp
        flat[slot_block < 0] = -1
        self.slot_flat = flat

    def zero_state(self, time: float = 0.0) -> FieldState:
        shape = (self.n_elements, self.n_modes)
        return FieldState(np.zeros(shape), np.zeros(shape), np.zeros(shape),
                          np.zeros(shape), time)

    def zero_traces(self, time: float = 0.0) -> TraceState:
        m = self.n_trace_nodes
        return TraceState(np.zeros(m), np.zeros(m), np.zeros(m), time)

    def apply_bc(self, traces: TraceState, t: float) -> None:
        """Overwrite the data-carrying trace entries with boundary values at t."""
        if self.periodic:
            return
        bc = self.config.bc
        n = self.n_elements
        traces.u_hat[0] = bc.u_left(t)
        traces.u_hat[n] = bc.u_right(t)
        traces.v_hat[n] = bc.v_right(t)
        if self.family == "pos":
            traces.q_hat[0] = bc.q_left(t)
        else:
            traces.q_hat[n] = bc.q_right(t)

    def combine_traces(self, a: TraceState, b: TraceState, theta: float,
                       t_eval: float) -> TraceState:
        out = TraceState(
            (1.0 - theta) * a.u_hat + theta * b.u_hat,
            (1.0 - theta) * a.v_hat + theta * b.v_hat,
            (1.0 - theta) * a.q_hat + theta * b.q_hat,
            t_eval,
        )
        self.apply_bc(out, t_eval)
        return out

    def gather_slots(self, traces: TraceState) -> np.ndarray:
        """Per-element incoming trace values, shape (n_elements, n_slots)."""
        n = self.n_elements
        if self.periodic:
            uh_l = traces.u_hat
            uh_r = np.roll(traces.u_hat, -1)
            vh_r = np.roll(traces.v_hat, -1)
            qh = traces.q_hat if self.family == "pos" else np.roll(traces.q_hat, -1)
        else:
            uh_l = traces.u_hat[:n]
            uh_r = traces.u_hat[1:]
            vh_r = traces.v_hat[1:]
            qh = traces.q_hat[:n] if self.family == "pos" else traces.q_hat[1:]
        cols = [uh_l, uh_r, vh_r]
        if self.family != "oh":
            cols.append(qh)
        return np.stack(cols, axis=1)

    def free_vector(self, traces: TraceState) -> np.ndarray:
        cols = [traces.u_hat, traces.v_hat, traces.q_hat][:self.block_size]
        if self.periodic:
            return np.stack(cols, axis=1).reshape(-1)
        return np.stack([c[1:-1] for c in cols], axis=1).reshape(-1)

    def add_free_vector(self, traces: TraceState, delta: np.ndarray) -> None:
        d = delta.reshape(self.n_blocks, self.block_size)
        sl = slice(None) if self.periodic else slice(1, -1)
        traces.u_hat[sl] += d[:, 0]
        traces.v_hat[sl] += d[:, 1]
        if self.block_size > 2:
            traces.q_hat[sl] += d[:, 2]

    # ------------------------------------------------------------- assembly

    def _flux_hat(self, u, uh, n_sign):
        """Numerical flux f_hat and its derivatives wrt (u, uh)."""
        alpha = self.config.alpha
        if self.stab.tau_f_mode == "constant":
            tau = self.stab.tau_f_value
            fh = 0.5 * alpha * u * u - tau * (uh - u) * n_sign
            d_u = alpha * u + tau * n_sign
            d_uh = -tau * n_sign * np.ones_like(uh)
        else:
            c = alpha / 6.0
            fh = c * (u * u + u * uh + uh * uh)
            d_u = c * (2.0 * u + uh)
            d_uh = c * (u + 2.0 * uh)
        return fh, d_u, d_uh

    def assemble(self, state_u, state_v, state_p, state_q, slots, t_src,
                 mode: str = "step", u_pin=None,
                 include_source: bool = True) -> SpatialParts:
        """Spatial residuals, Jacobians, and transmission rows, batched.

        mode 'step' builds the operator rows; mode 'init' replaces the
        momentum rows by u = u_pin, zeroes the tau_vq/tau_qv couplings,
        and closes u_hat through a unit-penalty flux match, which makes
        the aux-field solve linear and nonsingular for any StabParams.
        """
        cfg, stab = self.config, self.stab
        n, k1, w, ns = self.n_elements, self.n_modes, self.n_local, self.n_slots
        jac = self.jac
        V, Vd, wq, eL, eR = self.V, self.Vd, self.wq, self.eL, self.eR
        oh = self.family == "oh"

        uh_l, uh_r, vh_r = slots[:, 0], slots[:, 1], slots[:, 2]
        qh = slots[:, 3] if not oh else None

        u_q = state_u @ V
        v_q = state_v @ V
        u_l, u_r = state_u @ eL, state_u @ eR
        v_l, v_r = state_v @ eL, state_v @ eR
        if not oh:
            p_q = state_p @ V
            q_q = state_q @ V
            p_l, p_r = state_p @ eL, state_p @ eR
            q_l, q_r = state_q @ eL, state_q @ eR

        f_q = cfg.flux(u_q)
        fp_q = cfg.flux_deriv(u_q)

        fh_r, dfh_r_du, dfh_r_duh = self._flux_hat(u_r, uh_r, +1.0)
        fh_l, dfh_l_du, dfh_l_duh = self._flux_hat(u_l, uh_l, -1.0)
        tau_pu = stab.tau_pu
        if oh:
            pf_r = tau_pu * (uh_r - u_r) - fh_r
            pf_l = -tau_pu * (uh_l - u_l) - fh_l
        else:
            pf_r = p_r + tau_pu * (uh_r - u_r) - fh_r
            pf_l = p_l - tau_pu * (uh_l - u_l) - fh_l
        dpf_r_du = -tau_pu - dfh_r_du
        dpf_r_duh = tau_pu - dfh_r_duh
        dpf_l_du = tau_pu - dfh_l_du
        dpf_l_duh = -tau_pu - dfh_l_duh

        # the tau couplings serve energy stability of the time stepping; the
        # init solve zeroes them (pure alternating one-sided traces), which
        # keeps it linear, local, and nonsingular for any StabParams
        if self.family == "pos" and mode == "step":
            tvq, tqv = stab.tau_vq, stab.tau_qv
        else:
            tvq = tqv = 0.0
        if self.family == "pos":
            vtilde_l = v_l - tvq * (qh - q_l)
            qtilde_r = q_r + tqv * (vh_r - v_r)
        else:
            vtilde_l = v_l

        S = np.zeros((n, w))
        dS = np.zeros((n, w, w))
        dStr = np.zeros((n, w, ns))
        sl_u = slice(0, k1)
        sl_v = slice(k1, 2 * k1)
        if not oh:
            sl_p = slice(2 * k1, 3 * k1)
            sl_q = slice(3 * k1, 4 * k1)
        B1, Mq, LL, RR = self.B1, self.Mq, self.LL, self.RR
        gamma, beta = cfg.gamma, cfg.beta

        # momentum row: (p - f, dphi) - gamma (v, phi) - [pf phi] - (g, phi)
        if mode == "step":
            if oh:
                S[:, sl_u] = -(f_q * wq) @ Vd.T
            else:
                S[:, sl_u] = ((p_q - f_q) * wq) @ Vd.T
            S[:, sl_u] -= gamma * jac[:, None] * ((v_q * wq) @ V.T)
            S[:, sl_u] -= pf_r[:, None] * eR - pf_l[:, None] * eL
            if include_source and cfg.source is not None:
                g_q = np.asarray(cfg.source(self.xq, t_src), dtype=float)
                S[:, sl_u] -= jac[:, None] * ((g_q * wq) @ V.T)
            dS[:, sl_u, sl_u] = -np.einsum("nq,jq,lq->njl", fp_q * wq, Vd, V)
            dS[:, sl_u, sl_u] -= dpf_r_du[:, None, None] * RR
            dS[:, sl_u, sl_u] += dpf_l_du[:, None, None] * LL
            dS[:, sl_u, sl_v] = -gamma * jac[:, None, None] * Mq
            if not oh:
                # B1 from the volume term, RR/LL from p inside the flux traces
                dS[:, sl_u, sl_p] = B1 - RR + LL
            dStr[:, sl_u, 1] = -dpf_r_duh[:, None] * eR
            dStr[:, sl_u, 0] = dpf_l_duh[:, None] * eL
        else:
            # init pin u = u_pin
            S[:, sl_u] = state_u - u_pin
            dS[:, sl_u, sl_u] = np.eye(k1)

        # antiderivative row: -(v, dphi) - (u, phi) + [v traces]
        S[:, sl_v] = -(v_q * wq) @ Vd.T - jac[:, None] * ((u_q * wq) @ V.T)
        S[:, sl_v] += vh_r[:, None] * eR - vtilde_l[:, None] * eL
        dS[:, sl_v, sl_u] = -jac[:, None, None] * Mq
        dS[:, sl_v, sl_v] = -B1 - LL
        if self.family == "pos":
            dS[:, sl_v, sl_q] = -tvq * LL
            dStr[:, sl_v, 3] = tvq * eL
        dStr[:, sl_v, 2] = eR

        if not oh:
            # dispersive flux row: (p, phi) + beta (q, dphi) - beta [q traces]
            S[:, sl_p] = jac[:, None] * ((p_q * wq) @ V.T) + beta * ((q_q * wq) @ Vd.T)
            dS[:, sl_p, sl_p] = jac[:, None, None] * Mq
            if self.family == "pos":
                S[:, sl_p] -= beta * (qtilde_r[:, None] * eR - qh[:, None] * eL)
                dS[:, sl_p, sl_q] = beta * (B1 - RR)
                dS[:, sl_p, sl_v] = beta * tqv * RR
                dStr[:, sl_p, 2] = -beta * tqv * eR
                dStr[:, sl_p, 3] = beta * eL
            else:
                S[:, sl_p] -= beta * (qh[:, None] * eR - q_l[:, None] * eL)
                dS[:, sl_p, sl_q] = beta * (B1 + LL)
                dStr[:, sl_p, 3] = -beta * eR
            if self.p_row_scale != 1.0:
                S[:, sl_p] *= self.p_row_scale
                dS[:, sl_p] *= self.p_row_scale
                dStr[:, sl_p] *= self.p_row_scale

            # gradient row: (q, phi) + (u, dphi) - [u_hat traces]
            S[:, sl_q] = jac[:, None] * ((q_q * wq) @ V.T) + (u_q * wq) @ Vd.T
            S[:, sl_q] -= uh_r[:, None] * eR - uh_l[:, None] * eL
            dS[:, sl_q, sl_u] = B1
            dS[:, sl_q, sl_q] = jac[:, None, None] * Mq
            dStr[:, sl_q, 1] = -eR
            dStr[:, sl_q, 0] = eL

        # ------------------------------------------------- transmission rows
        m, b = self.n_blocks, self.block_size
        el, er = self.elem_left, self.elem_right
        T = np.zeros((m, b))
        dTtr = np.zeros((m, b, b))
        dTL = np.zeros((m, b, w))
        dTR = np.zeros((m, b, w))

        if mode == "step":
            T[:, 0] = pf_r[el] - pf_l[er]
            dTtr[:, 0, 0] = dpf_r_duh[el] - dpf_l_duh[er]
            dTL[:, 0, sl_u] = dpf_r_du[el][:, None] * eR
            dTR[:, 0, sl_u] = -dpf_l_du[er][:, None] * eL
            if not oh:
                dTL[:, 0, sl_p] = eR
                dTR[:, 0, sl_p] = -eL
        else:
            # u is pinned, so the flux match only has to close u_hat; match
            # p + (u_hat - u)n across the node, whose p-jump feedback makes
            # u_hat and hence q superconvergent (the unit-penalty variant of
            # the flux law above, linear because u is data here)
            pfi_r = uh_r - u_r
            pfi_l = -(uh_l - u_l)
            if not oh:
                pfi_r = pfi_r + p_r
                pfi_l = pfi_l + p_l
            T[:, 0] = pfi_r[el] - pfi_l[er]
            dTtr[:, 0, 0] = 2.0
            dTL[:, 0, sl_u] = -eR
            dTR[:, 0, sl_u] = -eL
            if not oh:
                dTL[:, 0, sl_p] = eR
                dTR[:, 0, sl_p] = -eL

        # vtilde_l already carries the pos-family tau_vq coupling through
        # the R element's own left q_hat slot, which is the node value
        T[:, 1] = vh_r[el] - vtilde_l[er]
        dTtr[:, 1, 1] = 1.0
        dTR[:, 1, sl_v] = -eL
        if self.family == "pos":
            dTtr[:, 1, 2] = tvq
            dTR[:, 1, sl_q] = -tvq * eL

        if not oh:
            if self.family == "pos":
                T[:, 2] = qtilde_r[el] - qh[er]
                dTtr[:, 2, 1] = tqv
                dTtr[:, 2, 2] = -1.0
                dTL[:, 2, sl_q] = eR
                dTL[:, 2, sl_v] = -tqv * eR
            else:
                # q_hat at the node is the L element's right slot
                T[:, 2] = qh[el] - q_l[er]
                dTtr[:, 2, 2] = 1.0
                dTR[:, 2, sl_q] = -eL

        if mode == "init" and self.periodic:
            # gauge pin: replace the v-match at node 0 by v_hat(x_0) = 0
            T[0, 1] = vh_r[el[0]]
            dTtr[0, 1, :] = 0.0
            dTtr[0, 1, 1] = 1.0
            dTL[0, 1, :] = 0.0
            dTR[0, 1, :] = 0.0

        return SpatialParts(S, dS, dStr, T, dTtr, dTL, dTR)


@dataclass
class CondensedBlocks:
    """Skeleton system of one linearization plus element recovery operators."""

    system: BlockTridiagonalSystem
    ainv_b: np.ndarray
    ainv_g: np.ndarray
    disc: Discretization
    token: int


def condense(disc: Discretization, A: np.ndarray, B: np.ndarray, G: np.ndarray,
             T: np.ndarray, dT_dtr: np.ndarray, dT_dwL: np.ndarray,
             dT_dwR: np.ndarray) -> CondensedBlocks:
    """Eliminate element unknowns; return the trace system and recovery data.

    A, B, G are the per-element Jacobian (wrt local unknowns), Jacobian wrt
    incoming traces, and residual; T and its derivatives are the transmission
    rows. Solving the returned block system yields the trace update, and
    recover_local back-substitutes the element updates.
    """
    try:
        sol = np.linalg.solve(A, np.concatenate([B, G[:, :, None]], axis=2))
    except np.linalg.LinAlgError:
        for i in range(disc.n_elements):
            try:
                lu_factor(A[i])
            except Exception as exc:
                raise CondensationError(i) from exc
        raise CondensationError(-1, "batched local solve failed")
    ainv_b = sol[:, :, :-1]
    ainv_g = sol[:, :, -1]

    el, er = disc.elem_left, disc.elem_right
    m, b = disc.n_blocks, disc.block_size
    rhs = -T + np.einsum("mbw,mw->mb", dT_dwL, ainv_g[el]) \
        + np.einsum("mbw,mw->mb", dT_dwR, ainv_g[er])

    contrib_l = -np.einsum("mbw,mws->mbs", dT_dwL, ainv_b[el])
    contrib_r = -np.einsum("mbw,mws->mbs", dT_dwR, ainv_b[er])

    diag = dT_dtr.copy()
    sub = np.zeros((m, b, b))
    sup = np.zeros((m, b, b))
    for s, c in disc.right_slots:
        diag[:, :, c] += contrib_l[:, :, s]
        sup[:, :, c] += contrib_r[:, :, s]
    for s, c in disc.left_slots:
        diag[:, :, c] += contrib_r[:, :, s]
        sub[:, :, c] += contrib_l[:, :, s]

    if disc.periodic:
        system = BlockTridiagonalSystem(
            diag, sub[1:], sup[:-1], rhs,
            corner_upper=sub[0], corner_lower=sup[m - 1])
    else:
        system = BlockTridiagonalSystem(diag, sub[1:], sup[:-1], rhs)

    disc._condense_token += 1
    return CondensedBlocks(system, ainv_b, ainv_g, disc, disc._condense_token)


def recover_local(trace_update: np.ndarray, blocks: CondensedBlocks) -> np.ndarray:
    """Element updates for a solved trace update; shape (n_elements, n_local).

    Raises:
        UsageError: Wrong update size, or blocks from a superseded
            linearization (condense was called again on the same operator).
    """
    disc = blocks.disc
    if blocks.token != disc._condense_token:
        raise UsageError("stale condensed blocks: condense ran again since these")
    m, b = disc.n_blocks, disc.block_size
    vec = np.asarray(trace_update, dtype=float)
    if vec.shape != (m * b,):
        raise UsageError(f"trace update must have shape ({m * b},), got {vec.shape}")
    flat = disc.slot_flat
    delta_slots = np.where(flat >= 0, vec[np.clip(flat, 0, None)], 0.0)
    return -blocks.ainv_g - np.einsum("nws,ns->nw", blocks.ainv_b, delta_slots)


def split_local(disc: Discretization, delta_w: np.ndarray):
    """Split (n_elements, n_local) updates into per-field coefficient arrays."""
    k1 = disc.n_modes
    parts = [delta_w[:, i * k1:(i + 1) * k1] for i in range(disc.n_fields)]
    if disc.family == "oh":
        zero = np.zeros_like(parts[0])
        return parts[0], parts[1], zero, zero
    return parts[0], parts[1], parts[2], parts[3]


def local_residual(disc: Discretization, element_index: int, state: FieldState,
                   incoming: np.ndarray, t_source: float) -> np.ndarray:
    """Spatial residual of one element given its incoming trace values.

    incoming holds the slot values (u_hat left, u_hat right, v_hat right,
    q_hat left-or-right by regime); the time-derivative row contribution is
    the caller's business.
    """
    incoming = np.asarray(incoming, dtype=float)
    if incoming.shape != (disc.n_slots,):
        raise UsageError(
            f"expected {disc.n_slots} incoming traces, got shape {incoming.shape}")
    parts = _single_element_parts(disc, element_index, state, incoming, t_source)
    return parts.S[0]


def local_jacobian(disc: Discretization, element_index: int, state: FieldState,
                   incoming: np.ndarray, t_source: float) -> np.ndarray:
    """d(local_residual)/d(element coefficients, incoming traces)."""
    incoming = np.asarray(incoming, dtype=float)
    if incoming.shape != (disc.n_slots,):
        raise UsageError(
            f"expected {disc.n_slots} incoming traces, got shape {incoming.shape}")
    parts = _single_element_parts(disc, element_index, state, incoming, t_source)
    return np.concatenate([parts.dS_dw[0], parts.dS_dtr[0]], axis=1)


class _SingleElementView(Discretization):
    """One-element view sharing the parent's tables; local rows only."""

    def __init__(self, parent: Discretization, index: int):
        # deliberately not calling super().__init__: copy what assemble reads
        self.__dict__.update(parent.__dict__)
        self.n_elements = 1
        self.jac = parent.jac[index:index + 1]
        self.xq = parent.xq[index:index + 1]
        self.n_blocks = 1
        self.elem_left = np.zeros(1, dtype=np.intp)
        self.elem_right = np.zeros(1, dtype=np.intp)


def _single_element_parts(disc, index, state, incoming, t_source):
    n_elems = disc.n_elements
    if not 0 <= index < n_elems:
        raise IndexError(f"element index {index} out of range for {n_elems}")
    view = _SingleElementView(disc, index)
    sl = slice(index, index + 1)
    return view.assemble(
        state.u[sl], state.v[sl], state.p[sl], state.q[sl],
        incoming[None, :], t_source, mode="step", include_source=True)


def init_aux_fields(u0_coeffs: np.ndarray, disc: Discretization,
                    t0: float = 0.0):
    """Solve the discrete mixed relations for (v, p, q) and all traces at t0.

    u is held at u0; the momentum rows become u-pins, the flux-match rows
    close u_hat through a unit-penalty match, and in the periodic regime
    the v-match at node 0 is replaced by the gauge pin v_hat(x_0) = 0,
    after which v is shifted to the mean-zero gauge. The resulting system
    is linear, so a single condensed solve is exact.

    Returns:
        (FieldState, TraceState) at time t0.
    """
    state = disc.zero_state(t0)
    state.u = np.array(u0_coeffs, dtype=float)
    if state.u.shape != (disc.n_elements, disc.n_modes):
        raise UsageError(
            f"u0 coefficients must have shape {(disc.n_elements, disc.n_modes)}")
    traces = disc.zero_traces(t0)
    disc.apply_bc(traces, t0)
    slots = disc.gather_slots(traces)
    parts = disc.assemble(state.u, state.v, state.p, state.q, slots, t0,
                          mode="init", u_pin=state.u, include_source=False)
    blocks = condense(disc, parts.dS_dw, parts.dS_dtr, parts.S,
                      parts.T, parts.dT_dtr, parts.dT_dwL, parts.dT_dwR)
    delta = block_tridiag_solve(blocks.system)
    dw = recover_local(delta, blocks)
    du, dv, dp, dq = split_local(disc, dw)
    state.u += du
    state.v += dv
    state.p += dp
    state.q += dq
    disc.add_free_vector(traces, delta)
    if disc.periodic:
        shift = integrate_field(state.v, disc.mesh) / disc.mesh.length
        state.v[:, 0] -= shift
        traces.v_hat -= shift
    return state, traces
