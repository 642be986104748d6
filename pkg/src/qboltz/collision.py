"""The cubic collision operator: strong evaluation, splittings, weak forms.

Discrete definition (shared with the naive reference used in tests): velocity
pairs (v, u) run over lattice points inside the truncation ball, the sphere
rule supplies the deflection directions, pair differences are d = h (i - j),
and post-collision values are trilinear interpolations of the lattice samples
in index coordinates, zero outside the lattice hull.  Fields are masked to
the truncation ball on entry ("F treated as 0 outside the ball"), and the
operator is reported on ball points.

Two evaluation paths coexist deliberately: the strong path (pointwise Q via
interpolation, used by the solvers) and the symmetrized weak path (the
quadruple form, used for conservation and entropy verification).  The weak
path multiplies the bracket by phi(v) + phi(u) - phi(u') - phi(v'), which
vanishes identically for the collisional invariants {1, v_i, |v|^2}, so those
weak integrals are zero to rounding rather than to discretization error.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _K
from .geometry import CollisionGeometry, VelocityGrid

_INVARIANT_MONOS = {
    "1": np.array([[0, 0, 0, 1.0]]),
    "vx": np.array([[1, 0, 0, 1.0]]),
    "vy": np.array([[0, 1, 0, 1.0]]),
    "vz": np.array([[0, 0, 1, 1.0]]),
    "v2": np.array([[2, 0, 0, 1.0], [0, 2, 0, 1.0], [0, 0, 2, 1.0]]),
}

_prep_cache = {}


@dataclass
class DistributionField:
    """Density samples F on the velocity lattice (optionally x spatial cells).

    For fermions (theta = -1) admissible states satisfy 0 <= F <= 1; for
    bosons (theta = +1) F >= 0.  ``nonneg_asserted`` turns those bounds into
    construction-time checks (with 1e-12 rounding slack).
    """

    values: np.ndarray
    theta: int
    nonneg_asserted: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.theta not in (-1, 0, 1):
            raise ValueError("theta must be -1, 0, or +1")
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("non-finite value in distribution field")
        if self.nonneg_asserted:
            if self.values.min() < -1e-12:
                raise ValueError(f"negative density {self.values.min():.3e}")
            if self.theta == -1 and self.values.max() > 1.0 + 1e-12:
                raise ValueError(f"fermion density {self.values.max():.3e} exceeds 1")

    def masked(self, grid):
        return self.values * grid.ball if self.values.shape == grid.shape else self.values


def _prep(geom):
    """Per-geometry kernel inputs: offsets, half/full node sets, ball chords."""
    key = id(geom)
    hit = _prep_cache.get(key)
    if hit is not None and hit[0] is geom:
        return hit[1]
    grid, quad = geom.grid, geom.quadrature
    nodes_h, w_h = quad.antipodal_half()
    zlo, zhi = _K.build_ball_chords(grid.ball)
    prep = {
        "half": _K.build_half_offsets(grid.nv),
        "full": _K.build_full_offsets(grid.nv),
        "nodes_half": np.ascontiguousarray(nodes_h),
        "cw_half": np.ascontiguousarray(w_h * grid.cell_volume),
        "nodes_full": np.ascontiguousarray(quad.nodes),
        "cw_full": np.ascontiguousarray(quad.weights * grid.cell_volume),
        "zlo": zlo,
        "zhi": zhi,
    }
    _prep_cache[key] = (geom, prep)
    return prep


def _unpack(F, geom, theta):
    grid = geom.grid
    if isinstance(F, DistributionField):
        if theta is not None and theta != F.theta:
            raise ValueError("theta argument conflicts with the field's statistics")
        theta = F.theta
        values = F.values
    else:
        values = np.asarray(F, dtype=float)
        if theta is None:
            raise ValueError("theta is required when passing a bare array")
    if values.shape != grid.shape:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
    return values * grid.ball, theta


def collision_parts(F, geom, theta=None):
    """Classical part Q1 and cubic correction Q2, so Q = Q1 + theta Q2."""
    values, _ = _unpack(F, geom, 0 if theta is None else theta)
    p = _prep(geom)
    grid = geom.grid
    parts = _K.collision_parts(
        _K.pad_field(values, grid.nv), grid.nv, grid.spacing,
        p["half"], p["nodes_half"], p["cw_half"], p["zlo"], p["zhi"])
    return parts[0].reshape(grid.shape), parts[1].reshape(grid.shape)


def collide(F, geom, theta=None):
    """Full cubic collision operator Q[F,F;F] on the velocity lattice."""
    values, theta = _unpack(F, geom, theta)
    q1, q2 = collision_parts(values, geom, theta)
    return q1 + theta * q2


def collide_q1(F, geom, theta=None):
    """Classical bilinear part; equals collide for theta = 0."""
    values, _ = _unpack(F, geom, 0 if theta is None else theta)
    return collision_parts(values, geom, 0)[0]


def collide_q2(F, geom, theta=None):
    """Trilinear quantum correction."""
    values, _ = _unpack(F, geom, 0 if theta is None else theta)
    return collision_parts(values, geom, 0)[1]


def collide_gain(F, geom, theta=None):
    """Gain term F(u')F(v')(1 + th F(u) + th F(v)) of the cubic splitting."""
    return gain_loss(F, geom, theta)[0]


def collide_loss(F, geom, theta=None):
    """Loss term F(u)F(v)(1 + th F(u') + th F(v')); equals F * loss_rate(F,F)."""
    return gain_loss(F, geom, theta)[1]


def gain_loss(F, geom, theta=None):
    """(gain, loss) pair; gain - loss equals collide to rounding."""
    values, theta = _unpack(F, geom, theta)
    p = _prep(geom)
    grid = geom.grid
    gl = _K.gain_loss_cubic(
        _K.pad_field(values, grid.nv), grid.nv, grid.spacing, float(theta),
        p["half"], p["nodes_half"], p["cw_half"], p["zlo"], p["zhi"])
    return gl[0].reshape(grid.shape), gl[1].reshape(grid.shape)


def loss_rate(G, H, geom, theta):
    """Collision frequency R[G,H](v) = int q G(u)(1 + th H(u') + th H(v'))."""
    grid = geom.grid
    Gm = np.asarray(G, dtype=float) * grid.ball
    Hm = np.asarray(H, dtype=float) * grid.ball
    if Gm.shape != grid.shape or Hm.shape != grid.shape:
        raise ValueError("loss_rate fields must live on the velocity lattice")
    p = _prep(geom)
    out = _K.loss_rate_pair(
        _K.pad_field(Gm, grid.nv), _K.pad_field(Hm, grid.nv),
        grid.nv, grid.spacing, float(theta),
        p["half"], p["nodes_half"], p["cw_half"], p["zlo"], p["zhi"])
    return out.reshape(grid.shape)


def local_iteration_parts(F, geom, theta):
    """(Q_p, Q_tilde) splitting of the operator used by the local iteration:
    Q = Q_p - F * Q_tilde, with both factors nonnegative on admissible data."""
    values, theta = _unpack(F, geom, theta)
    p = _prep(geom)
    grid = geom.grid
    parts = _K.qp_qtilde(
        _K.pad_field(values, grid.nv), grid.nv, grid.spacing, float(theta),
        p["half"], p["nodes_half"], p["cw_half"], p["zlo"], p["zhi"])
    return parts[0].reshape(grid.shape), parts[1].reshape(grid.shape)


def _phi_monomials(phi):
    if isinstance(phi, str):
        try:
            return _INVARIANT_MONOS[phi]
        except KeyError:
            raise ValueError(f"unknown test function '{phi}'; "
                             f"use one of {sorted(_INVARIANT_MONOS)} or a monomial array")
    mono = np.atleast_2d(np.asarray(phi, dtype=float))
    if mono.shape[1] != 4:
        raise ValueError("polynomial test functions are rows (ex, ey, ez, coefficient)")
    return mono


def weak_form(F, phi, geom, theta=None):
    """Symmetrized weak form (1/4) iiint q [bracket] {phi(v)+phi(u)-phi(u')-phi(v')}.

    ``phi`` is a named invariant ("1", "vx", "vy", "vz", "v2") or an array of
    monomial rows (ex, ey, ez, coefficient); polynomials are evaluated exactly
    at the off-lattice post-collision points, so collisional invariants give
    zero to rounding.
    """
    values, theta = _unpack(F, geom, theta)
    mono = _phi_monomials(phi)
    p = _prep(geom)
    grid = geom.grid
    raw = _K.weak_form_poly(
        _K.pad_field(values, grid.nv), grid.nv, grid.spacing, grid.rv, float(theta),
        mono, p["half"], p["nodes_half"], p["cw_half"], p["zlo"], p["zhi"])
    return float(raw * grid.cell_volume)


def invariant_defects(F, geom, theta=None):
    """Weak-form values against {1, vx, vy, vz, |v|^2}; all rounding-level."""
    return np.array([weak_form(F, name, geom, theta)
                     for name in ("1", "vx", "vy", "vz", "v2")])


def entropy(F, grid, theta=None):
    """Quantum entropy integral of S[F] = F ln(1/F) - th (1+th F) ln(1/(1+th F)).

    Requires F > 0 (and F < 1 for fermions) strictly on ball lattice points.
    """
    if isinstance(F, DistributionField):
        theta, values = F.theta, F.values
    else:
        values = np.asarray(F, dtype=float)
        if theta is None:
            raise ValueError("theta is required when passing a bare array")
    mask = grid.ball
    vals = values[mask]
    if np.any(vals <= 0.0):
        site = np.argwhere(mask & (values <= 0.0))[0]
        raise ValueError(f"entropy needs F > 0; offending lattice site {tuple(site)}")
    if theta == -1 and np.any(vals >= 1.0):
        site = np.argwhere(mask & (values >= 1.0))[0]
        raise ValueError(f"fermion entropy needs F < 1; offending lattice site {tuple(site)}")
    s = -vals * np.log(vals)
    if theta != 0:
        s += (1.0 + theta * vals) * np.log1p(theta * vals) / theta
    return float(grid.cell_volume * s.sum())


def entropy_dissipation(F, geom, theta=None):
    """Entropy production (1/4) iiint q (G - L) ln(G/L) >= 0 of the quartic
    gain/loss factors; zero exactly at equilibrium (G = L pointwise)."""
    values, theta = _unpack(F, geom, theta)
    grid = geom.grid
    mask = grid.ball
    vals = values[mask]
    if np.any(vals <= 0.0):
        site = np.argwhere(mask & (values <= 0.0))[0]
        raise ValueError(f"dissipation needs F > 0; offending lattice site {tuple(site)}")
    if theta == -1 and np.any(vals >= 1.0):
        site = np.argwhere(mask & (values >= 1.0))[0]
        raise ValueError(f"fermion dissipation needs F < 1; offending site {tuple(site)}")
    p = _prep(geom)
    raw = _K.entropy_dissipation_sum(
        _K.pad_field(values, grid.nv), grid.nv, grid.spacing, float(theta),
        p["half"], p["nodes_half"], p["cw_half"], p["zlo"], p["zhi"])
    return float(raw * grid.cell_volume)


def qsym_pair(A, B, geom):
    """Symmetrized bilinear collision product of two lattice profiles."""
    grid = geom.grid
    Am = np.asarray(A, dtype=float) * grid.ball
    Bm = np.asarray(B, dtype=float) * grid.ball
    p = _prep(geom)
    out = _K.qsym_pair(
        _K.pad_field(Am, grid.nv), _K.pad_field(Bm, grid.nv),
        grid.nv, grid.spacing,
        p["full"], p["nodes_half"], p["cw_half"], p["zlo"], p["zhi"])
    return out.reshape(grid.shape)


def qsym_triple(A, B, C, geom):
    """Symmetrized trilinear collision product of three lattice profiles."""
    grid = geom.grid
    Am = np.asarray(A, dtype=float) * grid.ball
    Bm = np.asarray(B, dtype=float) * grid.ball
    Cm = np.asarray(C, dtype=float) * grid.ball
    p = _prep(geom)
    out = _K.qsym_triple(
        _K.pad_field(Am, grid.nv), _K.pad_field(Bm, grid.nv), _K.pad_field(Cm, grid.nv),
        grid.nv, grid.spacing,
        p["full"], p["nodes_half"], p["cw_half"], p["zlo"], p["zhi"])
    return out.reshape(grid.shape)


def moment_basis(grid):
    """Rows of {1, vx, vy, vz, |v|^2} sampled on the flat lattice."""
    pts = grid.points
    return np.column_stack([
        np.ones(len(pts)), pts[:, 0], pts[:, 1], pts[:, 2], np.sum(pts * pts, axis=1)])
