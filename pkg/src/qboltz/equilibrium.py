"""Quantum Maxwellians, moments, and equilibrium fitting.

The equilibrium family is

    mu(v) = 1 / (exp(-(a + b.v + c|v|^2)) - theta),    c < 0,

with theta = -1 (fermions), 0 (classical), +1 (bosons).  The linearization
weight is M(v) = mu (1 + theta mu).  For the isotropic default b = 0, c = -1
we write rho = e^{-a}; the uniform admissibility requirement is rho > 1
(equivalently a < 0), which keeps the boson denominator away from zero.

The normalization integral of mu has no usable closed form, so every
mu-moment here is numerical; tests check them against an independent 1D
adaptive radial quadrature.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class QuantumMaxwellianParams:
    """Statistics flag and equilibrium coefficients (a, b, c)."""

    theta: int
    a: float = -1.0
    b: tuple = (0.0, 0.0, 0.0)
    c: float = -1.0

    def __post_init__(self):
        if self.theta not in (-1, 0, 1):
            raise ValueError("theta must be -1, 0, or +1")
        if not self.c < 0:
            raise ValueError("equilibrium requires c < 0")
        if self.theta == 1 and not self.a < 0:
            raise ValueError("bosons require a < 0 (rho = e^{-a} > 1)")
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))

    @classmethod
    def isotropic(cls, theta, rho):
        """Build mu(v) = 1 / (rho e^{|v|^2} - theta) from the fugacity rho."""
        if rho <= 0:
            raise ValueError("rho must be positive")
        if theta == 1 and rho <= 1:
            raise ValueError("bosons require rho > 1 (denominator can vanish)")
        return cls(theta=theta, a=-float(np.log(rho)), b=(0.0, 0.0, 0.0), c=-1.0)

    @property
    def rho(self):
        """Fugacity e^{-a} (primarily meaningful for the isotropic case)."""
        return float(np.exp(-self.a))

    @property
    def is_isotropic(self):
        return self.b == (0.0, 0.0, 0.0) and self.c == -1.0

    def exponent(self, v):
        """a + b.v + c|v|^2 for v of shape (..., 3)."""
        v = np.asarray(v, dtype=float)
        b = np.asarray(self.b)
        return self.a + v @ b + self.c * np.sum(v * v, axis=-1)


@dataclass(frozen=True)
class MomentTriple:
    """Mass, momentum, and second moment (energy) of a velocity profile."""

    mass: float
    momentum: np.ndarray
    energy: float

    def __post_init__(self):
        object.__setattr__(self, "momentum", np.asarray(self.momentum, dtype=float))

    def as_vector(self):
        return np.array([self.mass, *self.momentum, self.energy])


def mu(v, params):
    """Quantum Maxwellian mu(v) = 1 / (e^{-(a + b.v + c|v|^2)} - theta).

    Evaluated as e^{w} / (1 - theta e^{w}) with w = a + b.v + c|v|^2, which is
    algebraically identical and free of overflow at large |v|.
    """
    w = params.exponent(v)
    ew = np.exp(w)
    return ew / (1.0 - params.theta * ew)


def mcal(v, params):
    """Linearization weight M(v) = mu (1 + theta mu).

    Algebraically M = e^{-w} / (e^{-w} - theta)^2 with w the Maxwellian
    exponent; for the isotropic case this is rho e^{|v|^2}/(rho e^{|v|^2}-theta)^2.
    Evaluated in the bounded form to avoid overflow at large |v|.
    """
    w = params.exponent(v)
    ew = np.exp(w)  # e^{w} = 1/(rho e^{|v|^2}) decays at large |v|
    return ew / (1.0 - params.theta * ew) ** 2


def mcal_sqrt(v, params):
    """M(v)^{1/2}, the perturbation weight in F = mu + M^{1/2} f."""
    w = params.exponent(v)
    ew2 = np.exp(0.5 * w)
    return ew2 / (1.0 - params.theta * np.exp(w))


def gaussian_bounds_check(params, grid):
    """Tightest (c_low, c_high) with c_low e^{-|v|^2} <= mu <= c_high e^{-|v|^2}.

    Scans mu(v) e^{|v|^2} = 1/(rho - theta e^{-|v|^2}) over the lattice
    (isotropic parameters only).
    """
    if not params.is_isotropic:
        raise ValueError("gaussian bounds are defined for isotropic parameters")
    v2 = grid.squared_speed()
    ratio = 1.0 / (params.rho - params.theta * np.exp(-v2))
    return float(ratio.min()), float(ratio.max())


def moments(values, grid):
    """Midpoint-rule moments of a lattice profile against {1, v, |v|^2}.

    Parameters
    ----------
    values : ndarray, shape grid.shape
    grid : VelocityGrid
    """
    values = np.asarray(values, dtype=float)
    if np.any(~np.isfinite(values)):
        raise FloatingPointError("non-finite value in moment data")
    flat = values.reshape(-1)
    w = grid.cell_volume
    mass = w * flat.sum()
    momentum = w * (flat @ grid.points)
    energy = w * (flat @ np.sum(grid.points * grid.points, axis=1))
    return MomentTriple(mass=float(mass), momentum=momentum, energy=float(energy))


class EquilibriumFitError(RuntimeError):
    """Newton iteration on the moment map failed to converge."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class BosonInfeasibleError(ValueError):
    """Fitted boson parameters violate a < 0: data near the condensation regime."""


def _classical_guess(m):
    """Closed-form (a, b, c) matching the moments for theta = 0."""
    vbar = m.momentum / m.mass
    var = m.energy / m.mass - float(vbar @ vbar)
    if var <= 0:
        raise ValueError("moments not realizable: energy too small for momentum")
    c = -1.5 / var
    b = -2.0 * c * vbar
    a = np.log(m.mass * (-c / np.pi) ** 1.5) + float(b @ b) / (4.0 * c)
    return np.array([a, b[0], b[1], b[2], c])


def fit_equilibrium(m, theta, grid, tol=1e-12, max_iter=80):
    """Solve for the quantum Maxwellian with prescribed conserved moments.

    Damped Newton on the 5-dimensional map (a, b, c) -> moments(mu), using
    the analytic Jacobian d mu / d(a, b_i, c) = (1, v_i, |v|^2) M(v) and the
    classical closed-form inversion as initial guess.  The returned parameters
    reproduce ``m`` through :func:`moments` on the same grid.

    Raises
    ------
    EquilibriumFitError
        Newton did not reach tolerance within ``max_iter`` iterations.
    BosonInfeasibleError
        theta = +1 and the data demand a >= 0 (proximity to condensation).
    """
    if m.mass <= 0 or m.energy <= 0:
        raise ValueError("realizable moments need mass > 0 and energy > 0")
    target = m.as_vector()
    scale = np.array([m.mass, m.mass, m.mass, m.mass, m.energy])
    x = _classical_guess(m)
    if theta == 1:
        x[0] = min(x[0], -1e-2)  # keep the boson denominator away from zero

    def params_of(x):
        # During iteration boson feasibility may be violated transiently;
        # build the object unchecked and validate at the end.
        p = object.__new__(QuantumMaxwellianParams)
        object.__setattr__(p, "theta", theta)
        object.__setattr__(p, "a", float(x[0]))
        object.__setattr__(p, "b", (float(x[1]), float(x[2]), float(x[3])))
        object.__setattr__(p, "c", float(x[4]))
        return p

    def residual(x):
        p = params_of(x)
        return moments(grid.sample(lambda v: mu(v, p)), grid).as_vector() - target

    def jacobian(x):
        p = params_of(x)
        w = grid.cell_volume
        mc = grid.sample(lambda v: mcal(v, p)).reshape(-1)
        pts = grid.points
        basis = np.column_stack(
            [np.ones(len(pts)), pts[:, 0], pts[:, 1], pts[:, 2], np.sum(pts * pts, axis=1)]
        )
        return w * (basis * mc[:, None]).T @ basis

    r = residual(x)
    boson_blocked = False
    for _ in range(max_iter):
        if np.max(np.abs(r) / scale) < tol:
            break
        step = np.linalg.solve(jacobian(x), r)
        if theta == 1 and x[0] - step[0] >= 0:
            boson_blocked = True
        lam, accepted = 1.0, False
        for _ in range(30):
            x_new = x.copy()
            x_new -= lam * step
            feasible = x_new[4] < 0 and (theta != 1 or x_new[0] < 0)
            if feasible:
                r_new = residual(x_new)
                if np.max(np.abs(r_new)) < np.max(np.abs(r)) or lam < 2 ** -29:
                    x, r, accepted = x_new, r_new, True
                    break
            lam *= 0.5
        if not accepted:
            break
    res_norm = float(np.max(np.abs(r) / scale))
    if res_norm >= tol * 10:
        if theta == 1 and (boson_blocked or x[0] > -1e-3):
            raise BosonInfeasibleError(
                f"fit stalls against a < 0 at relative residual {res_norm:.3e}: "
                "boson moments lie near the condensation regime"
            )
        raise EquilibriumFitError(
            f"equilibrium fit stalled at relative residual {res_norm:.3e}", res_norm
        )
    if theta == 1 and x[0] > -1e-4:
        # on the lattice the v = 0 site absorbs unbounded mass as a -> 0-, so
        # proximity to the boundary is the usable condensation flag
        raise BosonInfeasibleError(
            f"fitted a = {x[0]:.3e} is at the condensation boundary a -> 0-"
        )
    return QuantumMaxwellianParams(theta=theta, a=float(x[0]), b=tuple(x[1:4]), c=float(x[4]))
