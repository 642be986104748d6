"""Perturbation machinery around the quantum Maxwellian.

With F = mu + M^{1/2} f and M = mu(1 + theta mu), the linearized operator is
L[f] = nu f - K[f] with the collision frequency nu(v) and the compact part
K = K2 - K1 assembled from the quadruple-form kernel
kappa = rho^2 mu(u) mu(v) z(u') z(v'), z(w) = 1/(rho - theta e^{-|w|^2}).
All mu / M factors in the linear kernels are evaluated analytically; only the
argument f is interpolated at post-collision points.

The raw transposed-stencil assembly of K is exactly the matrix of the direct
quadrature but is only approximately symmetric: the pre/post change of
variables behind self-adjointness has no exact counterpart once u', v' fall
off-lattice.  The operator stored on a :class:`LinearizedOperator` therefore
symmetrizes the assembly and deflates the orthonormalized five-dimensional
collision-invariant span, so symmetry, the null space, and coercivity on the
complement hold by construction; the raw asymmetry is kept as a diagnostic.

The cubic remainder Gamma and the collision-consistent linearization use the
other convention (everything interpolated from lattice samples, including
mu), which makes

    M^{-1/2} (Q[mu + M^{1/2} f] - Q[mu]) = -L_c[f] + Gamma[f,f;f]

an exact algebraic identity of the discrete operator, to rounding.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels as _K
from .collision import _prep, qsym_pair, qsym_triple
from .equilibrium import QuantumMaxwellianParams, mcal, mcal_sqrt, mu


@dataclass
class PerturbationField:
    """Perturbation samples f with the parameters defining F = mu + M^{1/2} f."""

    values: np.ndarray
    params: QuantumMaxwellianParams

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("non-finite value in perturbation field")

    def reconstruct_F(self, grid):
        MU = grid.sample(lambda v: mu(v, self.params))
        MS = grid.sample(lambda v: mcal_sqrt(v, self.params))
        return (MU + MS * self.values) * grid.ball


def ball_dofs(grid):
    """(ball_map, lin_indices): lattice linear index -> ball DOF (-1 outside)."""
    mask = grid.ball.reshape(-1)
    idx = np.nonzero(mask)[0]
    ball_map = np.full(grid.size, -1, dtype=np.int64)
    ball_map[idx] = np.arange(len(idx))
    return ball_map, idx


def compute_nu(params, geom):
    """Tabulated collision frequency nu(v) over the full lattice."""
    if not params.is_isotropic:
        raise ValueError("the linearized kernels assume isotropic equilibrium parameters")
    grid = geom.grid
    p = _prep(geom)
    MU_ball = (grid.sample(lambda v: mu(v, params)) * grid.ball).reshape(-1)
    raw = _K.nu_table(MU_ball, grid.nv, grid.spacing, grid.rv, params.rho,
                      float(params.theta),
                      p["full"], p["nodes_half"], p["cw_half"], p["zlo"], p["zhi"])
    MU = grid.sample(lambda v: mu(v, params)).reshape(-1)
    MC = grid.sample(lambda v: mcal(v, params)).reshape(-1)
    return (params.rho**2 * MU / MC * raw).reshape(grid.shape)


def assemble_K(params, geom, max_points=20000):
    """Raw dense K = K2 - K1 on ball DOFs via transposed interpolation stencils.

    Exactly represents the direct path (:func:`apply_K_direct`); symmetric only
    up to discretization.  Refuses lattices above ``max_points`` ball DOFs.
    """
    if not params.is_isotropic:
        raise ValueError("the linearized kernels assume isotropic equilibrium parameters")
    grid = geom.grid
    ball_map, idx = ball_dofs(grid)
    if len(idx) > max_points:
        raise MemoryError(
            f"{len(idx)} ball points exceed the assembly guard ({max_points}); "
            "raise max_points explicitly for large spectra")
    p = _prep(geom)
    Msi = grid.sample(lambda v: 1.0 / mcal_sqrt(v, params)).reshape(-1)
    MU = grid.sample(lambda v: mu(v, params)).reshape(-1)
    return _K.assemble_k_matrix(
        Msi, MU, ball_map, len(idx), grid.nv, grid.spacing, grid.rv,
        params.rho, float(params.theta),
        p["full"], p["nodes_half"], p["cw_half"], p["zlo"], p["zhi"])


def _apply_L_direct(f, params, geom, form):
    grid = geom.grid
    p = _prep(geom)
    fm = np.asarray(f, dtype=float) * grid.ball
    Msi = grid.sample(lambda v: 1.0 / mcal_sqrt(v, params)).reshape(-1)
    Msq = grid.sample(lambda v: mcal_sqrt(v, params)).reshape(-1)
    MU = grid.sample(lambda v: mu(v, params)).reshape(-1)
    W = _K.apply_L_direct(
        _K.pad_field(fm, grid.nv), Msi, Msq, MU,
        grid.nv, grid.spacing, grid.rv, params.rho, float(params.theta), form,
        p["full"], p["nodes_half"], p["cw_half"], p["zlo"], p["zhi"])
    return (Msi * W).reshape(grid.shape) * grid.ball


def apply_K_direct(f, params, geom):
    """K[f] by direct quadrature, evaluating f at u', v' by interpolation."""
    nu = compute_nu(params, geom)
    fm = np.asarray(f, dtype=float) * geom.grid.ball
    return nu * fm - _apply_L_direct(fm, params, geom, 0)


def apply_L_quadform(f, params, geom):
    """L[f] = nu f - K[f] from the factorized quadruple-form kernel."""
    return _apply_L_direct(f, params, geom, 0)


def apply_L_fourform(f, params, geom):
    """L[f] from the pre-identity explicit mu-coefficient combinations.

    Agreement with :func:`apply_L_quadform` to rounding verifies numerically
    the algebraic identities collapsing the four coefficient groups into the
    symmetric kernel kappa.
    """
    return _apply_L_direct(f, params, geom, 1)


def raw_null_basis(params, grid):
    """Columns M^{1/2}, v_i M^{1/2}, |v|^2 M^{1/2} restricted to ball DOFs."""
    _, idx = ball_dofs(grid)
    ms = grid.sample(lambda v: mcal_sqrt(v, params)).reshape(-1)[idx]
    pts = grid.points[idx]
    return np.column_stack([
        ms, pts[:, 0] * ms, pts[:, 1] * ms, pts[:, 2] * ms,
        np.sum(pts * pts, axis=1) * ms])


def nu_norm(f, nu, grid):
    """Collision-frequency weighted norm (int nu |f|^2 dv)^{1/2}."""
    fm = np.asarray(f, dtype=float) * grid.ball
    return float(np.sqrt(grid.cell_volume * np.sum(nu * fm * fm)))


def l2_norm(f, grid):
    fm = np.asarray(f, dtype=float) * grid.ball
    return float(np.sqrt(grid.cell_volume * np.sum(fm * fm)))


@dataclass
class LinearizedOperator:
    """Assembled nu, K, symmetrized-deflated L, null projection, and gap delta."""

    params: QuantumMaxwellianParams
    geom: object
    nu: np.ndarray                    # grid shape
    K_matrix: np.ndarray              # (nb, nb), defined by L = diag(nu) - K
    L_matrix: np.ndarray              # (nb, nb), symmetric, invariants deflated
    null_basis: np.ndarray            # (nb, 5), orthonormal in the h^3 product
    raw_basis: np.ndarray             # (nb, 5) un-normalized invariant columns
    raw_gram: np.ndarray              # (5, 5) h^3-Gram of the raw basis
    delta: float                      # coercivity gap in the nu-weighted metric
    raw_asymmetry: float              # ||K_raw - K_raw^T||_F / ||K_raw||_F
    eigenvalues: np.ndarray           # ascending low end of spec(L), plain metric
    ball_map: np.ndarray = field(repr=False, default=None)
    ball_idx: np.ndarray = field(repr=False, default=None)

    @classmethod
    def build(cls, params, geom, max_points=20000, n_eigs=40):
        grid = geom.grid
        h3 = grid.cell_volume
        nu = compute_nu(params, geom)
        K_raw = assemble_K(params, geom, max_points=max_points)
        ball_map, idx = ball_dofs(grid)
        nb = len(idx)
        nub = nu.reshape(-1)[idx]
        asym = float(np.linalg.norm(K_raw - K_raw.T)
                     / max(np.linalg.norm(K_raw), 1e-300))
        L = np.diag(nub) - 0.5 * (K_raw + K_raw.T)

        E = raw_null_basis(params, grid)
        gram = h3 * (E.T @ E)
        w, U = np.linalg.eigh(gram)
        V = E @ (U / np.sqrt(w))          # h^3-orthonormal: h3 V^T V = I
        # deflate the invariant span: L <- (I - P) L (I - P), P = h3 V V^T
        VL = h3 * (V.T @ L)
        L -= V @ VL
        LV = h3 * (L @ V)
        L -= LV @ V.T
        L = 0.5 * (L + L.T)               # scrub rounding asymmetry

        # coercivity gap: min Rayleigh quotient of L against diag(nu) on the
        # orthogonal complement of the invariant span
        Q = np.linalg.qr(V, mode="complete")[0]
        Z = Q[:, 5:]
        A = Z.T @ L @ Z
        B = Z.T @ (nub[:, None] * Z)
        delta = float(scipy.linalg.eigh(A, B, eigvals_only=True,
                                        subset_by_index=[0, 0])[0])
        k = min(n_eigs, nb - 1)
        eigs = scipy.linalg.eigh(L, eigvals_only=True, subset_by_index=[0, k])
        return cls(params=params, geom=geom, nu=nu,
                   K_matrix=np.diag(nub) - L, L_matrix=L,
                   null_basis=V, raw_basis=E, raw_gram=gram,
                   delta=delta, raw_asymmetry=asym, eigenvalues=eigs,
                   ball_map=ball_map, ball_idx=idx)

    # -- vector plumbing -------------------------------------------------
    def to_ball(self, f):
        return np.asarray(f, dtype=float).reshape(-1)[self.ball_idx]

    def from_ball(self, fb):
        out = np.zeros(self.geom.grid.size)
        out[self.ball_idx] = fb
        return out.reshape(self.geom.grid.shape)

    def apply_L(self, f):
        """L f for a lattice profile (spatial slices handled by the caller)."""
        return self.from_ball(self.L_matrix @ self.to_ball(f))

    def apply_K(self, f):
        return self.from_ball(self.K_matrix @ self.to_ball(f))

    def project_P(self, f):
        """Orthogonal projection onto span{M^{1/2}, v M^{1/2}, |v|^2 M^{1/2}}."""
        fb = self.to_ball(f)
        coef = self.geom.grid.cell_volume * (self.null_basis.T @ fb)
        return self.from_ball(self.null_basis @ coef)

    def coefficients_abc(self, f):
        """Hydrodynamic coefficients (a, b, c) with P f = (a + b.v + c|v|^2) M^{1/2}."""
        fb = self.to_ball(f)
        rhs = self.geom.grid.cell_volume * (self.raw_basis.T @ fb)
        coef = np.linalg.solve(self.raw_gram, rhs)
        return float(coef[0]), coef[1:4].copy(), float(coef[4])

    def inner(self, f, g):
        grid = self.geom.grid
        return float(grid.cell_volume * np.sum(
            (np.asarray(f) * grid.ball) * (np.asarray(g) * grid.ball)))

    def nu_norm(self, f):
        return nu_norm(f, self.nu, self.geom.grid)

    def l2_norm(self, f):
        return l2_norm(f, self.geom.grid)


def coercivity_gap(op):
    """The assembled operator's gap delta (> 0 on a resolved lattice)."""
    if op.delta <= 0:
        raise ArithmeticError(
            f"nonpositive coercivity gap {op.delta:.3e}: lattice too coarse")
    return op.delta


def _weighted_fields(f_list, params, grid):
    MS = grid.sample(lambda v: mcal_sqrt(v, params))
    return [MS * np.asarray(f, dtype=float) * grid.ball for f in f_list]


def apply_Gamma(f1, f2, f3, params, geom):
    """Cubic/quadratic collision remainder Gamma[f1, f2; f3].

    Composed of the symmetrized bilinear and trilinear products with the
    mu-samples interpolated like any other field (the collision-consistent
    convention), then weighted by M^{-1/2}.
    """
    grid = geom.grid
    g1, g2, g3 = _weighted_fields([f1, f2, f3], params, grid)
    MU = grid.sample(lambda v: mu(v, params)) * grid.ball
    th = params.theta
    total = qsym_pair(g1, g2, geom)
    if th != 0:
        total = total + th * (qsym_triple(g1, g2, MU, geom)
                              + qsym_triple(g1, MU, g3, geom)
                              + qsym_triple(MU, g2, g3, geom)
                              + qsym_triple(g1, g2, g3, geom))
    MS = grid.sample(lambda v: mcal_sqrt(v, params))
    return (total / MS) * grid.ball


def apply_Gamma_diag(f, params, geom):
    """Gamma[f, f; f] through the fused kernel (solver hot path)."""
    grid = geom.grid
    (g,) = _weighted_fields([f], params, grid)
    MU = grid.sample(lambda v: mu(v, params)) * grid.ball
    p = _prep(geom)
    raw = _K.gamma_weighted(
        _K.pad_field(g, grid.nv), _K.pad_field(MU, grid.nv),
        grid.nv, grid.spacing, float(params.theta),
        p["half"], p["nodes_half"], p["cw_half"], p["zlo"], p["zhi"])
    MS = grid.sample(lambda v: mcal_sqrt(v, params))
    return (raw.reshape(grid.shape) / MS) * grid.ball


def apply_L_collision_consistent(f, params, geom):
    """The linearization of the discrete collide around mu, with mu
    interpolated from its lattice samples exactly as collide does, so the
    Taylor identity against collide holds to rounding."""
    grid = geom.grid
    (g,) = _weighted_fields([f], params, grid)
    MU = grid.sample(lambda v: mu(v, params)) * grid.ball
    th = params.theta
    lin = 2.0 * qsym_pair(MU, g, geom)
    if th != 0:
        lin = lin + th * (2.0 * qsym_triple(MU, g, MU, geom)
                          + qsym_triple(MU, MU, g, geom))
    MS = grid.sample(lambda v: mcal_sqrt(v, params))
    return (-lin / MS) * grid.ball
