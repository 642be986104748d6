"""Velocity/spatial lattices, sphere quadrature, and collision kinematics.

Everything downstream (collision kernels, linearized operator, both solvers)
shares the uniform velocity lattice, the product Gauss-Legendre x trapezoid
sphere rule, and the elastic pre/post collision map defined here.  All objects
are immutable after construction and safe to share across threads.
"""

from dataclasses import dataclass, field

import numpy as np


def post_collision(u, v, omega):
    """Elastic hard-sphere collision map.

    u' = u + omega (omega . (v - u)),  v' = v - omega (omega . (v - u)).
    Momentum u + v and energy |u|^2 + |v|^2 are conserved; applying the map
    twice with the same omega returns the inputs.

    Parameters
    ----------
    u, v : array_like, shape (..., 3)
        Pre-collision velocities.
    omega : array_like, shape (..., 3)
        Unit deflection direction(s).

    Returns
    -------
    (u_post, v_post) : ndarray pair, shape (..., 3)
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    omega = np.asarray(omega, dtype=float)
    nrm2 = np.sum(omega * omega, axis=-1)
    if not np.all(np.abs(np.sqrt(nrm2) - 1.0) <= 1e-12):
        raise ValueError("omega must be a unit vector (|omega| = 1 within 1e-12)")
    s = np.sum(omega * (v - u), axis=-1)[..., None]
    return u + s * omega, v - s * omega


def kernel_q(omega, v_minus_u):
    """Hard-sphere collision kernel |omega . (v - u)| (nonnegative)."""
    omega = np.asarray(omega, dtype=float)
    if not np.all(np.abs(np.linalg.norm(omega, axis=-1) - 1.0) <= 1e-12):
        raise ValueError("omega must be a unit vector (|omega| = 1 within 1e-12)")
    return np.abs(np.sum(omega * np.asarray(v_minus_u, dtype=float), axis=-1))


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform cubic velocity lattice on [-rv, rv]^3.

    points_per_axis is odd by default so v = 0 is a lattice point and the
    point set is symmetric under v -> -v.  ``ball`` marks the truncation ball
    |v| <= rv used by the collision quadratures (the box corners only carry
    the e^{-rv^2} tail of admissible states).
    """

    points_per_axis: int
    truncation_radius: float
    axis: np.ndarray = field(init=False, repr=False, compare=False)
    points: np.ndarray = field(init=False, repr=False, compare=False)
    ball: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nv, rv = self.points_per_axis, self.truncation_radius
        if nv < 2:
            raise ValueError("points_per_axis must be >= 2")
        if rv <= 0:
            raise ValueError("truncation_radius must be positive")
        axis = np.linspace(-rv, rv, nv)
        x, y, z = np.meshgrid(axis, axis, axis, indexing="ij")
        pts = np.stack([x, y, z], axis=-1).reshape(-1, 3)
        ball = (np.sum(pts * pts, axis=1) <= rv * rv + 1e-12).reshape(nv, nv, nv)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "ball", ball)
        self.axis.setflags(write=False)
        self.points.setflags(write=False)
        self.ball.setflags(write=False)

    @property
    def nv(self):
        return self.points_per_axis

    @property
    def rv(self):
        return self.truncation_radius

    @property
    def spacing(self):
        return 2.0 * self.truncation_radius / (self.points_per_axis - 1)

    @property
    def cell_volume(self):
        return self.spacing**3

    @property
    def shape(self):
        return (self.nv, self.nv, self.nv)

    @property
    def size(self):
        return self.nv**3

    def squared_speed(self):
        """|v|^2 sampled on the lattice, shape (nv, nv, nv)."""
        return np.sum(self.points * self.points, axis=1).reshape(self.shape)

    def sample(self, fn):
        """Sample a callable of the 3-vector velocity on the lattice."""
        return np.asarray(fn(self.points)).reshape(self.shape)


@dataclass(frozen=True)
class SphereQuadrature:
    """Quadrature nodes/weights on the unit sphere (weights in steradians)."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        weights = np.ascontiguousarray(self.weights, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 3 or len(weights) != len(nodes):
            raise ValueError("nodes must be (n, 3) with matching weights")
        if np.any(np.abs(np.linalg.norm(nodes, axis=1) - 1.0) > 1e-14):
            raise ValueError("quadrature nodes must lie on the unit sphere")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if abs(weights.sum() - 4.0 * np.pi) > 1e-12:
            raise ValueError("quadrature weights must sum to 4*pi")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    def __len__(self):
        return len(self.weights)

    def integrate(self, fn):
        return float(np.dot(self.weights, np.asarray(fn(self.nodes))))

    def antipodal_half(self):
        """Nodes with positive polar cosine and doubled weights.

        The collision integrand depends on omega only through
        |omega . (v - u)| and omega (omega . (v - u)), both even under
        omega -> -omega, so half the nodes carry the full rule.  Requires an
        antipodally symmetric rule with no equatorial nodes (even polar count).
        """
        mask = self.nodes[:, 2] > 0.0
        if 2 * int(mask.sum()) != len(self.weights):
            return self.nodes, self.weights
        return self.nodes[mask], 2.0 * self.weights[mask]


def sphere_quadrature_build(n_polar, n_azimuth=None):
    """Product rule: Gauss-Legendre in cos(theta) x uniform in phi.

    Integrates spherical harmonics exactly up to degree min(2*n_polar - 1,
    n_azimuth - 1).  The node set is symmetric under omega -> -omega when
    n_azimuth is even (pairing (cos, phi) with (-cos, phi + pi)).

    Parameters
    ----------
    n_polar : int
        Number of Gauss-Legendre nodes in cos(theta).
    n_azimuth : int, optional
        Number of uniform azimuthal nodes; defaults to 2 * n_polar.
    """
    if n_azimuth is None:
        n_azimuth = 2 * n_polar
    if n_polar < 1 or n_azimuth < 2:
        raise ValueError("need n_polar >= 1 and n_azimuth >= 2")
    if n_azimuth % 2 != 0:
        raise ValueError("n_azimuth must be even to keep the rule antipodally symmetric")
    cos_t, w_t = np.polynomial.legendre.leggauss(n_polar)
    phi = 2.0 * np.pi * np.arange(n_azimuth) / n_azimuth
    w_phi = 2.0 * np.pi / n_azimuth
    ct, ph = np.meshgrid(cos_t, phi, indexing="ij")
    st = np.sqrt(1.0 - ct**2)
    nodes = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1).reshape(-1, 3)
    # snap trig rounding (sin(pi) ~ 1e-16) to exact zeros: a 1e-16 component
    # makes interpolation points land an ulp off lattice faces, turning the
    # zero-outside-hull cutoff into an order-one ambiguity
    nodes[np.abs(nodes) < 1e-14] = 0.0
    nodes /= np.linalg.norm(nodes, axis=1)[:, None]
    weights = np.repeat(w_t, n_azimuth) * w_phi
    return SphereQuadrature(nodes=nodes, weights=weights)


@dataclass(frozen=True)
class SpatialGrid:
    """Periodic spatial lattice: dimension 0 (homogeneous), 1, or 3."""

    dimension: int = 0
    points_per_axis: int = 1
    period: float = 2.0 * np.pi

    def __post_init__(self):
        if self.dimension not in (0, 1, 3):
            raise ValueError("spatial dimension must be 0, 1, or 3")
        if self.points_per_axis < 1:
            raise ValueError("points_per_axis must be positive")
        if self.period <= 0:
            raise ValueError("period must be positive")

    @property
    def nx(self):
        return self.points_per_axis if self.dimension > 0 else 1

    @property
    def spacing(self):
        return self.period / self.nx

    @property
    def shape(self):
        if self.dimension == 0:
            return ()
        return (self.nx,) * self.dimension

    @property
    def n_cells(self):
        return int(np.prod(self.shape)) if self.dimension > 0 else 1

    def axis_points(self):
        return np.arange(self.nx) * self.spacing

    def wrap(self, idx):
        return np.mod(idx, self.nx)


@dataclass(frozen=True)
class CollisionGeometry:
    """Velocity lattice + sphere rule bundle consumed by the collision kernels."""

    grid: VelocityGrid
    quadrature: SphereQuadrature

    @classmethod
    def build(cls, nv=25, rv=5.0, n_polar=8, n_azimuth=16):
        return cls(
            grid=VelocityGrid(points_per_axis=nv, truncation_radius=rv),
            quadrature=sphere_quadrature_build(n_polar, n_azimuth),
        )


def interpolate(values, grid, points):
    """Trilinear interpolation of lattice samples with zero extension.

    Returns the trilinear interpolant inside the lattice hull and exactly 0
    strictly outside.  Trilinear interpolation is monotone (a convex
    combination of the 8 cell corners), so nonnegative data stays nonnegative
    and fermion bounds F <= 1 are preserved.

    Parameters
    ----------
    values : ndarray, shape grid.shape
        Lattice samples.
    grid : VelocityGrid
    points : ndarray, shape (..., 3)
        Evaluation points.

    Returns
    -------
    ndarray, shape points.shape[:-1]
    """
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
    if np.any(~np.isfinite(values)):
        raise FloatingPointError("non-finite value in interpolation data")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out_shape = np.asarray(points).shape[:-1]
    nv, rv, h = grid.nv, grid.rv, grid.spacing

    t = (pts + rv) / h
    inside = np.all((t >= 0.0) & (t <= nv - 1.0), axis=-1)
    base = np.floor(t).astype(np.int64)
    np.clip(base, 0, nv - 2, out=base)
    r = t - base
    i0, j0, k0 = base[:, 0], base[:, 1], base[:, 2]
    rx, ry, rz = r[:, 0], r[:, 1], r[:, 2]

    out = np.zeros(len(pts))
    for dx in (0, 1):
        wx = rx if dx else 1.0 - rx
        for dy in (0, 1):
            wy = ry if dy else 1.0 - ry
            for dz in (0, 1):
                wz = rz if dz else 1.0 - rz
                out += wx * wy * wz * values[i0 + dx, j0 + dy, k0 + dz]
    out *= inside
    return out.reshape(out_shape) if out_shape else float(out[0])
