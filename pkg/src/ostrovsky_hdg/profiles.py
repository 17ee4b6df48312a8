"""Benchmark data for the solver: a manufactured decaying sine with its
source term, a Fourier-space solitary-wave generator, and the corner-wave
(peakon) family of the dispersionless limit together with its exact
traveling form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, IterationDivergence
from .hdg_operator import BoundaryData, ProblemConfig
from .linalg import fft_forward, fft_inverse
from .mesh_basis import BasisSpec, Mesh, l2_project


# ------------------------------------------------------------- manufactured


def manufactured_source(x, t, params):
    """Source g making u = e^{-t} sin x solve the forced system.

    params is the (alpha, beta, gamma) triple. The closed form collects
    u_t, the dispersive flux, the quadratic flux, and the rotation term:
    g = -e^{-t} sin x + beta e^{-t} cos x + alpha e^{-2t} sin x cos x
        - gamma e^{-t} (1 - cos x).
    """
    alpha, beta, gamma = params
    x = np.asarray(x, dtype=float)
    e = np.exp(-t)
    return (-e * np.sin(x) + beta * e * np.cos(x)
            + alpha * e * e * np.sin(x) * np.cos(x)
            - gamma * e * (1.0 - np.cos(x)))


@dataclass(frozen=True)
class ManufacturedCase:
    """Decaying sine on (0, 2pi) with every companion field in closed form.

    The antiderivative carries the gauge v(2pi, t) = 0.
    """

    alpha: float = 1.0
    beta: float = 0.5
    gamma: float = 1.0

    x_left: float = 0.0
    x_right: float = 2.0 * np.pi

    def u(self, x, t):
        return np.exp(-t) * np.sin(x)

    def v(self, x, t):
        return np.exp(-t) * (1.0 - np.cos(x))

    def q(self, x, t):
        return np.exp(-t) * np.cos(x)

    def p(self, x, t):
        return -self.beta * np.exp(-t) * np.sin(x)

    def source(self, x, t):
        return manufactured_source(x, t, (self.alpha, self.beta, self.gamma))

    def boundary_data(self) -> BoundaryData:
        return BoundaryData(q_left=lambda t: float(np.exp(-t)))

    def problem_config(self) -> ProblemConfig:
        return ProblemConfig(alpha=self.alpha, beta=self.beta,
                             gamma=self.gamma,
                             bc_regime="dirichlet_beta_pos",
                             source=self.source, bc=self.boundary_data())


# ----------------------------------------------------------- solitary waves


def linear_symbol(kappa, beta, gamma, c_w):
    """beta*kappa^2 - c_w + gamma/kappa^2; the zero mode is excluded."""
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa == 0.0):
        raise ConfigurationError("linear symbol is undefined at kappa = 0")
    return beta * kappa ** 2 - c_w + gamma / kappa ** 2


@dataclass(frozen=True)
class PetviashviliConfig:
    """Iteration knobs: exponent, relaxation, stopping, and the seed shape."""

    exponent: float = 2.0
    relaxation: float = 0.8
    tolerance: float = 1e-10
    max_iterations: int = 500
    seed_profile: str = "sech2"

    def __post_init__(self):
        if not self.exponent > 1.0:
            raise ConfigurationError(
                f"exponent must exceed 1, got {self.exponent}")
        if not 0.0 < self.relaxation <= 1.0:
            raise ConfigurationError(
                f"relaxation must lie in (0, 1], got {self.relaxation}")
        if self.tolerance <= 0.0:
            raise ConfigurationError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if self.seed_profile != "sech2":
            raise ConfigurationError(
                f"unknown seed profile {self.seed_profile!r}")


@dataclass(frozen=True)
class SolitaryProfile:
    """Converged traveling-wave profile on an equispaced periodic grid."""

    grid: np.ndarray
    values: np.ndarray
    speed: float
    residual: float
    iterations: int
    length: float
    spectrum: np.ndarray
    residual_history: tuple


def _signed_modes(n_points: int) -> np.ndarray:
    return ((np.arange(n_points) + n_points // 2) % n_points) - n_points // 2


def petviashvili_solve(alpha, beta, gamma, c_w, length, n_points,
                       cfg: PetviashviliConfig | None = None) -> SolitaryProfile:
    """Fixed-point iteration for the profile equation in Fourier space.

    Iterates U_hat <- -M^p * F_hat / symbol with F = (alpha/2) U^2, the
    amplitude quotient M = sum(symbol |U_hat|^2) / sum(Re(-F_hat conj U_hat))
    over nonzero modes, under-relaxed by cfg.relaxation, zero mode pinned.

    Raises:
        ConfigurationError: Bad sizes, speed outside the solitary range,
            or a symbol too close to zero on the grid.
        IterationDivergence: Residual growth over 20 consecutive iterations
            or max_iterations exhausted; carries the residual history.
    """
    if cfg is None:
        cfg = PetviashviliConfig()
    if n_points < 4 or n_points & (n_points - 1):
        raise ConfigurationError(
            f"n_points must be a power of two >= 4, got {n_points}")
    if length <= 0.0:
        raise ConfigurationError(f"length must be positive, got {length}")
    if alpha <= 0.0:
        raise ConfigurationError("the quadratic flux needs alpha > 0")
    if beta < 0.0 or gamma <= 0.0:
        raise ConfigurationError("profile generation needs beta >= 0, gamma > 0")
    if c_w >= 2.0 * np.sqrt(beta * gamma):
        raise ConfigurationError(
            f"speed {c_w} is outside the solitary range c_w < 2 sqrt(beta*gamma)")

    k = n_points
    x = length * np.arange(k) / k
    modes = _signed_modes(k)
    kappa = 2.0 * np.pi * modes / length
    nz = modes != 0
    symbol = np.empty(k)
    symbol[nz] = linear_symbol(kappa[nz], beta, gamma, c_w)
    symbol[~nz] = 1.0  # never used; the zero mode stays pinned
    if np.min(np.abs(symbol[nz])) < 1e-10:
        raise ConfigurationError("linear symbol nearly vanishes on the grid")

    # seed: mean-subtracted sech^2 bump with the single-soliton scales
    amp = 3.0 * c_w / alpha
    width = np.sqrt(4.0 * beta / abs(c_w)) if beta > 0 else length / 16.0
    u = amp / np.cosh((x - length / 2.0) / width) ** 2
    u -= u.mean()

    history = []
    u_hat = fft_forward(u)
    u_hat[~nz] = 0.0
    for iteration in range(cfg.max_iterations):
        f_hat = fft_forward(0.5 * alpha * u * u)
        res = float(np.max(np.abs(symbol[nz] * u_hat[nz] + f_hat[nz])) / k)
        history.append(res)
        if res <= cfg.tolerance:
            return SolitaryProfile(
                grid=x, values=u, speed=c_w, residual=res,
                iterations=iteration, length=length, spectrum=u_hat,
                residual_history=tuple(history))
        if len(history) > 20 and all(
                history[-i] > history[-i - 1] for i in range(1, 21)):
            raise IterationDivergence(history)

        num = float(np.sum(symbol[nz] * np.abs(u_hat[nz]) ** 2))
        den = float(np.sum((-f_hat[nz] * np.conj(u_hat[nz])).real))
        if den == 0.0:
            raise IterationDivergence(history, "degenerate amplitude quotient")
        m = num / den
        new_hat = np.zeros_like(u_hat)
        new_hat[nz] = -(m ** cfg.exponent) * f_hat[nz] / symbol[nz]
        u_hat = (1.0 - cfg.relaxation) * u_hat + cfg.relaxation * new_hat
        u_hat[~nz] = 0.0
        u = fft_inverse(u_hat).real
    raise IterationDivergence(history, "no convergence within max_iterations")


def evaluate_profile(profile: SolitaryProfile, x) -> np.ndarray:
    """Trigonometric interpolation of the profile at arbitrary points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = profile.spectrum.size
    kappa = 2.0 * np.pi * _signed_modes(k) / profile.length
    phase = np.exp(1j * np.outer(x, kappa))
    out = (phase @ profile.spectrum).real / k
    return out


def profile_to_initial(profile: SolitaryProfile, x0: float, mesh: Mesh,
                       basis: BasisSpec) -> np.ndarray:
    """L2 projection of the shifted profile U(x - x0) onto the mesh space."""
    if not mesh.periodic:
        raise ConfigurationError("profile initial data needs a periodic mesh")
    if abs(mesh.x_left) > 1e-12 or abs(mesh.x_right - profile.length) > 1e-12:
        raise ConfigurationError(
            f"mesh domain ({mesh.x_left}, {mesh.x_right}) does not match the "
            f"profile box (0, {profile.length})")
    return l2_project(lambda x: evaluate_profile(profile, x - x0), mesh, basis)


def traveling_reference(profile: SolitaryProfile, c_w: float, t: float):
    """x -> U(x - c_w t) with periodic wrapping."""
    return lambda x: evaluate_profile(profile, np.asarray(x) - c_w * t)


def write_profile_csv(profile: SolitaryProfile, path) -> None:
    with open(path, "w") as fh:
        fh.write("x,u\n")
        for xi, ui in zip(profile.grid, profile.values):
            fh.write(f"{xi:.12e},{ui:.12e}\n")


# ------------------------------------------------------------ corner waves


def peakon_u0(x) -> np.ndarray:
    """Mean-zero piecewise quadratic on the unit period with a corner at 1/2."""
    s = np.mod(np.asarray(x, dtype=float), 1.0) - 0.5
    return np.where(s <= 0.0,
                    s * s / 6.0 + s / 6.0 + 1.0 / 36.0,
                    s * s / 6.0 - s / 6.0 + 1.0 / 36.0)


def peakon_v0(x) -> np.ndarray:
    """Periodic antiderivative of peakon_u0; already mean-zero."""
    s = np.mod(np.asarray(x, dtype=float), 1.0) - 0.5
    return np.where(s <= 0.0,
                    s ** 3 / 18.0 + s * s / 12.0 + s / 36.0,
                    s ** 3 / 18.0 - s * s / 12.0 + s / 36.0)


def peakon_q0(x) -> np.ndarray:
    """Derivative of peakon_u0 (right-sided value at the corner)."""
    s = np.mod(np.asarray(x, dtype=float), 1.0) - 0.5
    return np.where(s < 0.0, s / 3.0 + 1.0 / 6.0, s / 3.0 - 1.0 / 6.0)


def oh_exact(x, t) -> np.ndarray:
    """Exact corner wave of the dispersionless equation: speed 1/36."""
    return peakon_u0(np.asarray(x, dtype=float) - t / 36.0)
