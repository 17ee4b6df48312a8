"""Meshes, Legendre modal bases, and Gauss-Legendre quadrature on (-1, 1).

Field coefficients throughout the package are ndarrays of shape
(n_elements, degree + 1) holding modal Legendre coefficients per element;
the reference-to-physical map is affine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

MAX_QUAD_POINTS = 32
_NEWTON_TOL = 1e-15


@dataclass(frozen=True)
class Mesh:
    """Partition of an interval into elements.

    Attributes:
        x_left: Left endpoint of the domain.
        x_right: Right endpoint of the domain.
        nodes: Element boundary coordinates, ascending, shape (n_elements + 1,).
        element_sizes: nodes[1:] - nodes[:-1], all positive.
        periodic: Whether the two endpoints are identified.
    """

    x_left: float
    x_right: float
    nodes: np.ndarray
    element_sizes: np.ndarray
    periodic: bool = False

    def __post_init__(self):
        if not self.x_right > self.x_left:
            raise ConfigurationError(
                f"empty domain: x_left={self.x_left}, x_right={self.x_right}"
            )
        if self.n_elements < 2:
            raise ConfigurationError(
                f"need at least 2 elements, got {self.n_elements}"
            )
        if np.any(self.element_sizes <= 0.0):
            raise ConfigurationError("mesh nodes must be strictly increasing")

    @property
    def n_elements(self) -> int:
        return len(self.element_sizes)

    @property
    def length(self) -> float:
        return self.x_right - self.x_left

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    def physical_points(self, ref_points: np.ndarray) -> np.ndarray:
        """Map reference points in [-1, 1] to all elements; shape (n_elements, npts)."""
        mid = self.midpoints()[:, None]
        half = 0.5 * self.element_sizes[:, None]
        return mid + half * np.asarray(ref_points)[None, :]


def build_mesh(x_left: float, x_right: float, n_elements: int,
               periodic: bool = False) -> Mesh:
    """Uniform mesh of (x_left, x_right) with n_elements >= 2 elements."""
    if not isinstance(n_elements, (int, np.integer)):
        raise ConfigurationError(f"n_elements must be an integer, got {n_elements!r}")
    if n_elements < 2:
        raise ConfigurationError(f"n_elements must be >= 2, got {n_elements}")
    if not x_right > x_left:
        raise ConfigurationError(f"need x_right > x_left, got [{x_left}, {x_right}]")
    nodes = np.linspace(x_left, x_right, n_elements + 1)
    return Mesh(float(x_left), float(x_right), nodes, np.diff(nodes), periodic)


def mesh_from_nodes(nodes, periodic: bool = False) -> Mesh:
    """Possibly nonuniform mesh from an ascending array of element boundaries."""
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 1 or len(nodes) < 3:
        raise ConfigurationError("nodes must be a 1-d array with at least 3 entries")
    return Mesh(float(nodes[0]), float(nodes[-1]), nodes, np.diff(nodes), periodic)


@dataclass(frozen=True)
class QuadRule:
    """Gauss-Legendre rule on (-1, 1): sum(weights) == 2, exact through 2n-1."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.points)


def legendre_eval(degree: int, ref_point: float):
    """Evaluate the Legendre polynomial of given degree and its derivative.

    Uses the three-term recurrence; valid for any real ref_point.

    Returns:
        (value, derivative) at ref_point.
    """
    x = float(ref_point)
    if degree == 0:
        return 1.0, 0.0
    p_prev, p = 1.0, x
    d_prev, d = 0.0, 1.0
    for j in range(1, degree):
        p_next = ((2 * j + 1) * x * p - j * p_prev) / (j + 1)
        d_next = d_prev + (2 * j + 1) * p
        p_prev, p = p, p_next
        d_prev, d = d, d_next
    return p, d


def legendre_table(degree: int, points: np.ndarray):
    """Values and derivatives of P_0..P_degree at points; shapes (degree+1, npts)."""
    pts = np.asarray(points, dtype=float)
    vals = np.empty((degree + 1, len(pts)))
    ders = np.empty_like(vals)
    vals[0] = 1.0
    ders[0] = 0.0
    if degree >= 1:
        vals[1] = pts
        ders[1] = 1.0
    for j in range(1, degree):
        vals[j + 1] = ((2 * j + 1) * pts * vals[j] - j * vals[j - 1]) / (j + 1)
        ders[j + 1] = ders[j - 1] + (2 * j + 1) * vals[j]
    return vals, ders


def gauss_legendre_rule(n_points: int) -> QuadRule:
    """Gauss-Legendre nodes and weights on (-1, 1).

    Nodes are the roots of P_n found by Newton iteration from the Chebyshev
    initial guess; weights are 2 / ((1 - x^2) * P_n'(x)^2).

    Args:
        n_points: Number of points, 1 <= n_points <= 32.
    """
    if not isinstance(n_points, (int, np.integer)) or not 1 <= n_points <= MAX_QUAD_POINTS:
        raise ConfigurationError(
            f"n_points must be an integer in [1, {MAX_QUAD_POINTS}], got {n_points!r}"
        )
    n = int(n_points)
    if n == 1:
        return QuadRule(np.array([0.0]), np.array([2.0]))
    i = np.arange(1, n + 1)
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(100):
        vals, ders = legendre_table(n, x)
        dx = vals[n] / ders[n]
        x -= dx
        if np.max(np.abs(dx)) < _NEWTON_TOL:
            break
    _, ders = legendre_table(n, x)
    w = 2.0 / ((1.0 - x * x) * ders[n] ** 2)
    x = x[::-1].copy()
    w = w[::-1].copy()
    # enforce the exact symmetries the analytic rule has
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return QuadRule(x, w)


@dataclass(frozen=True)
class BasisSpec:
    """Legendre modal basis of one element plus tabulated quadrature data.

    Attributes:
        degree: Polynomial degree k >= 1.
        quad: Quadrature rule used for scheme integrals.
        val: P_j(xi_q), shape (k+1, n_q).
        der: P_j'(xi_q), shape (k+1, n_q).
        left: P_j(-1) = (-1)^j, shape (k+1,).
        right: P_j(+1) = 1, shape (k+1,).
    """

    degree: int
    quad: QuadRule
    val: np.ndarray = field(repr=False)
    der: np.ndarray = field(repr=False)
    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.degree < 1:
            raise ConfigurationError(f"degree must be >= 1, got {self.degree}")
        mass = (self.val * self.quad.weights) @ self.val.T
        off = mass - np.diag(np.diag(mass))
        if np.max(np.abs(off)) > 1e-13:
            raise ConfigurationError(
                "quadrature too weak: basis mass matrix not diagonal to 1e-13"
            )

    @property
    def n_modes(self) -> int:
        return self.degree + 1

    @property
    def mass_diag(self) -> np.ndarray:
        """Reference-element mass diagonal 2/(2j+1)."""
        return 2.0 / (2.0 * np.arange(self.degree + 1) + 1.0)


def make_basis(degree: int, n_quad: int | None = None) -> BasisSpec:
    """Basis of the given degree; default quadrature uses degree + 3 points."""
    if not isinstance(degree, (int, np.integer)) or degree < 1:
        raise ConfigurationError(f"degree must be an integer >= 1, got {degree!r}")
    if n_quad is None:
        n_quad = degree + 3
    quad = gauss_legendre_rule(n_quad)
    vals, ders = legendre_table(degree, quad.points)
    left = np.array([(-1.0) ** j for j in range(degree + 1)])
    right = np.ones(degree + 1)
    return BasisSpec(int(degree), quad, vals, ders, left, right)


def l2_project(f, mesh: Mesh, basis: BasisSpec) -> np.ndarray:
    """Element-wise L2 projection of a callable onto the modal basis.

    Args:
        f: Vectorized callable of the physical coordinate.
        mesh: Target mesh.
        basis: Target basis; its quadrature evaluates the inner products.

    Returns:
        Coefficient array of shape (n_elements, degree + 1).
    """
    xq = mesh.physical_points(basis.quad.points)
    fq = np.asarray(f(xq), dtype=float)
    rhs = (fq * basis.quad.weights) @ basis.val.T
    mass = (basis.val * basis.quad.weights) @ basis.val.T
    return np.linalg.solve(mass, rhs.T).T


def eval_field(coeffs: np.ndarray, element_index: int, ref_point: float) -> float:
    """Evaluate a coefficient array on one element at a reference point."""
    n_elems, n_modes = coeffs.shape
    if not -n_elems <= element_index < n_elems:
        raise IndexError(
            f"element index {element_index} out of range for {n_elems} elements"
        )
    vals, _ = legendre_table(n_modes - 1, np.array([float(ref_point)]))
    return float(coeffs[element_index] @ vals[:, 0])


def eval_field_grid(coeffs: np.ndarray, ref_points) -> np.ndarray:
    """Evaluate on every element at the given reference points; shape (N, npts)."""
    ref_points = np.asarray(ref_points, dtype=float)
    vals, _ = legendre_table(coeffs.shape[1] - 1, ref_points)
    return coeffs @ vals


def integrate_field(coeffs: np.ndarray, mesh: Mesh) -> float:
    """Exact integral of the piecewise polynomial over the domain."""
    return float(np.dot(mesh.element_sizes, coeffs[:, 0]))


def l2_error(coeffs: np.ndarray, exact, mesh: Mesh, basis: BasisSpec,
             oversample: int | None = None) -> float:
    """L2-norm distance between a discrete field and a callable.

    Args:
        oversample: Quadrature points per element for the error integral;
            defaults to 2 * (degree + 3) and must be >= degree + 2.
    """
    if oversample is None:
        oversample = 2 * (basis.degree + 3)
    if oversample < basis.degree + 2:
        raise ConfigurationError(
            f"oversample must be >= degree + 2 = {basis.degree + 2}, got {oversample}"
        )
    rule = gauss_legendre_rule(oversample)
    xq = mesh.physical_points(rule.points)
    uq = eval_field_grid(coeffs, rule.points)
    diff = uq - np.asarray(exact(xq), dtype=float)
    cell = (diff * diff) @ rule.weights
    return float(np.sqrt(np.dot(0.5 * mesh.element_sizes, cell)))


def l2_norm(coeffs: np.ndarray, mesh: Mesh) -> float:
    """L2 norm of the discrete field (exact, via modal orthogonality)."""
    diag = 2.0 / (2.0 * np.arange(coeffs.shape[1]) + 1.0)
    cell = (coeffs * coeffs) @ diag
    return float(np.sqrt(np.dot(0.5 * mesh.element_sizes, cell)))
