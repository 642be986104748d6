"""Lattices, sphere quadrature, collision kinematics, interpolation."""

import numpy as np
import pytest

from qboltz.geometry import (
    SpatialGrid, SphereQuadrature, VelocityGrid,
    interpolate, kernel_q, post_collision, sphere_quadrature_build)
from qboltz.equilibrium import QuantumMaxwellianParams, mu


def test_post_collision_examples():
    u = np.zeros(3)
    v = np.array([1.0, 0, 0])
    # grazing: omega perpendicular to v - u leaves velocities unchanged
    up, vp = post_collision(u, v, np.array([0, 1.0, 0]))
    assert np.allclose(up, u) and np.allclose(vp, v)
    # head-on swap
    up, vp = post_collision(u, v, np.array([1.0, 0, 0]))
    assert np.allclose(up, v) and np.allclose(vp, u)
    # 45 degrees
    w = np.array([1.0, 1.0, 0]) / np.sqrt(2)
    up, vp = post_collision(u, v, w)
    assert np.allclose(up, [0.5, 0.5, 0])
    assert np.allclose(vp, [0.5, -0.5, 0])
    assert abs(up @ up + vp @ vp - 1.0) < 1e-15


def test_post_collision_invariants_random():
    rng = np.random.default_rng(0)
    n = 20000
    u = rng.normal(size=(n, 3)) * 2
    v = rng.normal(size=(n, 3)) * 2
    om = rng.normal(size=(n, 3))
    om /= np.linalg.norm(om, axis=1)[:, None]
    up, vp = post_collision(u, v, om)
    scale = np.abs(u).max() + np.abs(v).max()
    # momentum and energy
    assert np.abs((up + vp) - (u + v)).max() <= 1e-12 * scale
    e0 = np.sum(u * u + v * v, axis=1)
    e1 = np.sum(up * up + vp * vp, axis=1)
    assert np.abs(e1 - e0).max() <= 1e-12 * e0.max()
    # involution
    u2, v2 = post_collision(up, vp, om)
    assert np.abs(u2 - u).max() <= 1e-12 * scale
    assert np.abs(v2 - v).max() <= 1e-12 * scale
    # swapping the pair swaps the outputs
    up_s, vp_s = post_collision(v, u, om)
    assert np.abs(up_s - vp).max() <= 1e-12 * scale
    assert np.abs(vp_s - up).max() <= 1e-12 * scale


def test_post_collision_rejects_non_unit_omega():
    with pytest.raises(ValueError):
        post_collision(np.zeros(3), np.ones(3), np.array([1.0, 1.0, 0.0]))


def test_kernel_q():
    e1 = np.array([1.0, 0, 0])
    assert kernel_q(e1, e1) == 1.0
    assert kernel_q(np.array([0, 1.0, 0]), e1) == 0.0
    w = np.array([1.0, 1.0, 0]) / np.sqrt(2)
    assert abs(kernel_q(w, e1) - 1 / np.sqrt(2)) < 1e-15
    with pytest.raises(ValueError):
        kernel_q(np.array([2.0, 0, 0]), e1)


def test_velocity_grid_structure():
    g = VelocityGrid(points_per_axis=9, truncation_radius=5.0)
    assert g.spacing == pytest.approx(10 / 8)
    assert np.abs(g.axis + g.axis[::-1]).max() == 0.0  # symmetric under v -> -v
    assert np.abs(g.points).max() <= 5.0
    # point set maps to itself under negation
    pts = set(map(tuple, np.round(g.points, 12)))
    neg = set(map(tuple, np.round(-g.points, 12)))
    assert pts == neg
    with pytest.raises(ValueError):
        VelocityGrid(points_per_axis=1, truncation_radius=5.0)
    with pytest.raises(ValueError):
        VelocityGrid(points_per_axis=9, truncation_radius=-1.0)


def test_sphere_quadrature_invariants():
    q = sphere_quadrature_build(8, 16)
    assert len(q) == 128
    assert np.abs(np.linalg.norm(q.nodes, axis=1) - 1).max() <= 1e-14
    assert abs(q.weights.sum() - 4 * np.pi) <= 1e-12
    # antipodal symmetry of the node set
    nodes = set(map(tuple, np.round(q.nodes, 12)))
    negs = set(map(tuple, np.round(-q.nodes, 12)))
    assert nodes == negs
    half_nodes, half_w = q.antipodal_half()
    assert len(half_nodes) == 64
    assert abs(half_w.sum() - 4 * np.pi) <= 1e-12


def test_sphere_quadrature_integrates():
    q = sphere_quadrature_build(8, 16)
    assert abs(q.integrate(lambda om: np.ones(len(om))) - 4 * np.pi) <= 1e-12
    assert abs(q.integrate(lambda om: om[:, 0] ** 2) - 4 * np.pi / 3) <= 1e-10
    # |omega . e1| integrates to 2*pi; the azimuthal kink limits the rate
    val = q.integrate(lambda om: np.abs(om[:, 0]))
    assert abs(val - 2 * np.pi) <= 0.1
    # finer rule converges
    q2 = sphere_quadrature_build(24, 48)
    val2 = q2.integrate(lambda om: np.abs(om[:, 0]))
    assert abs(val2 - 2 * np.pi) < abs(val - 2 * np.pi) / 4


def test_sphere_quadrature_guards():
    with pytest.raises(ValueError):
        sphere_quadrature_build(0)
    with pytest.raises(ValueError):
        sphere_quadrature_build(4, 7)  # odd azimuth breaks antipodal pairing
    with pytest.raises(ValueError):
        SphereQuadrature(nodes=np.array([[2.0, 0, 0]]), weights=np.array([4 * np.pi]))


def test_spatial_grid():
    g = SpatialGrid(dimension=1, points_per_axis=16)
    assert g.n_cells == 16
    assert g.wrap(np.array([-1, 16, 5])).tolist() == [15, 0, 5]
    assert SpatialGrid().n_cells == 1
    with pytest.raises(ValueError):
        SpatialGrid(dimension=2, points_per_axis=4)


def test_interpolate_constants_and_linear():
    g = VelocityGrid(points_per_axis=9, truncation_radius=5.0)
    ones = np.ones(g.shape)
    pt = np.array([0.3, -0.7, 1.1])
    assert interpolate(ones, g, pt) == pytest.approx(1.0, abs=1e-14)
    # exact on multilinear functions
    lin = g.sample(lambda v: v[:, 0])
    h = g.spacing
    assert interpolate(lin, g, np.array([0.3 * h, 0, 0])) == pytest.approx(0.3 * h, abs=1e-13)
    # zero strictly outside the hull
    assert interpolate(ones, g, np.array([5.1, 0, 0])) == 0.0
    # monotone: never negative from nonnegative data
    rng = np.random.default_rng(1)
    F = rng.random(g.shape)
    pts = rng.uniform(-5, 5, size=(500, 3))
    assert interpolate(F, g, pts).min() >= 0.0
    with pytest.raises(FloatingPointError):
        interpolate(np.full(g.shape, np.nan), g, pt)


def test_interpolate_second_order_on_maxwellian():
    p = QuantumMaxwellianParams.isotropic(-1, np.e)
    rng = np.random.default_rng(4)
    pts = rng.uniform(-2, 2, size=(200, 3))
    errs = []
    for nv in (21, 41):
        g = VelocityGrid(points_per_axis=nv, truncation_radius=5.0)
        F = g.sample(lambda v: mu(v, p))
        exact = mu(pts, p)
        errs.append(np.abs(interpolate(F, g, pts) - exact).mean())
    order = np.log(errs[0] / errs[1]) / np.log(2)
    assert order >= 1.8
