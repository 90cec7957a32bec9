import math

import numpy as np
import pytest

from jetlagrange.errors import ConfigurationError
from jetlagrange.jetgeometry import (
    FieldJets,
    JetPoint,
    cartan_connection,
    curvature_d,
    lagrangian_at,
    nonlinear_connection,
    nonlinear_from_spray_check,
    potential_curl,
    spray,
    torsion,
    vertical_metric,
)
from jetlagrange.modelspec import evaluate_float
from jetlagrange.semigeom import curvature

from builders import (
    flat_model,
    lorentz_model,
    lorentz_t_model,
    make_model,
    polar_time_model,
    random_points,
    random_polynomial_model,
    sphere_model,
)


def euler_lagrange_acceleration(model, t, x, v, step=1e-4):
    """Acceleration of an extremal of the weighted action with Lagrangian sqrt|h| L, p = 1.

    Solves d/dt(dw/dv) = dw/dx for x'' with every derivative of w taken by central
    differences, so it shares nothing with the closed-form spray.
    """
    n = model.n

    def w(tt, xx, vv):
        h = evaluate_float(model.h[0][0], {"t1": tt})
        return math.sqrt(abs(h)) * float(lagrangian_at(model, JetPoint.of(model, [tt], xx, vv)))

    def dw_dv(tt, xx, vv):
        out = np.empty(n)
        for i in range(n):
            e = np.eye(n)[i] * step
            out[i] = (w(tt, xx, vv + e) - w(tt, xx, vv - e)) / (2 * step)
        return out

    def dw_dx(tt, xx, vv):
        out = np.empty(n)
        for i in range(n):
            e = np.eye(n)[i] * step
            out[i] = (w(tt, xx + e, vv) - w(tt, xx - e, vv)) / (2 * step)
        return out

    hess_vv = np.column_stack([(dw_dv(t, x, v + np.eye(n)[j] * step) - dw_dv(t, x, v - np.eye(n)[j] * step))
                               / (2 * step) for j in range(n)])
    mixed_vx = np.column_stack([(dw_dv(t, x + np.eye(n)[j] * step, v) - dw_dv(t, x - np.eye(n)[j] * step, v))
                                / (2 * step) for j in range(n)])
    mixed_vt = (dw_dv(t + step, x, v) - dw_dv(t - step, x, v)) / (2 * step)
    rhs = dw_dx(t, x, v) - mixed_vx @ v - mixed_vt
    return np.linalg.solve(hess_vv, rhs)


def acceleration(model, t, x, v):
    s = spray(model, JetPoint.of(model, [t], x, v))
    return -2.0 * (s.H[..., 0, 0] + s.G[..., 0, 0])


class TestLagrangian:
    def test_flat_unit_velocity(self):
        m = flat_model()
        assert lagrangian_at(m, JetPoint.of(m, [0.0], [0.3, 0.4], [1.0, 0.0])) == 1.0

    def test_lorentz_potential_term(self):
        m = lorentz_model()
        # 3^2 + 4^2 + x2 v1 - x1 v2 = 25 + 6 - 4
        assert lagrangian_at(m, JetPoint.of(m, [0.0], [1.0, 2.0], [3.0, 4.0])) == 27.0

    def test_inverse_temporal_metric_and_scalar(self):
        m = make_model(1, 1, {(1, 1): "2"}, {(1, 1): "3"}, F="5")
        assert lagrangian_at(m, JetPoint.of(m, [0.0], [0.0], [2.0])) == pytest.approx(0.5 * 3 * 4 + 5)

    def test_batched(self):
        m = sphere_model()
        pts = random_points(m, 7, seed=1)
        assert lagrangian_at(m, pts).shape == (7,)

    def test_dimension_mismatch(self):
        m = flat_model()
        with pytest.raises(ConfigurationError):
            JetPoint.of(m, [0.0], [0.3, 0.4, 0.5], [1.0, 0.0, 0.0])


class TestVerticalMetric:
    def test_flat_block_is_identity(self):
        m = flat_model()
        vm = vertical_metric(m, JetPoint.of(m, [0.0], [0.0, 0.0], [0.2, 0.9]))
        np.testing.assert_array_equal(vm.block[0, 0], np.eye(2))

    @pytest.mark.parametrize("seed", [0, 1])
    def test_half_hessian_of_lagrangian(self, seed):
        m = random_polynomial_model(seed)
        vm = vertical_metric(m, random_points(m, 10, seed))
        assert vm.discrepancy.max() < 1e-12

    def test_temporal_factor(self):
        vm = vertical_metric(polar_time_model(), JetPoint(np.array([2.0, 0.0]), np.zeros(2), np.ones((2, 2))))
        assert vm.block[1, 1, 0, 0] == pytest.approx(0.25)
        assert vm.block[0, 1].max() == 0.0


class TestPotentialCurl:
    def test_lorentz(self):
        pc = potential_curl(lorentz_model(), ([0.0], [0.4, -0.3]))
        np.testing.assert_array_equal(pc.values[0], [[0.0, 2.0], [-2.0, 0.0]])
        np.testing.assert_array_equal(pc.dt, 0.0)

    def test_time_dependent(self):
        pc = potential_curl(lorentz_t_model(), ([1.5], [0.4, -0.3]))
        assert pc.values[0, 0, 1] == pytest.approx(3.0)
        assert pc.dt[0, 0, 1, 0] == pytest.approx(2.0)

    def test_zero_potential(self):
        pc = potential_curl(sphere_model(), ([0.0], [1.0, 0.2]))
        assert np.all(pc.values == 0.0) and np.all(pc.cov == 0.0)

    def test_antisymmetry(self):
        m = random_polynomial_model(4)
        pts = random_points(m, 5, 4)
        pc = potential_curl(m, pts.base)
        np.testing.assert_allclose(pc.values, -np.swapaxes(pc.values, -2, -1), atol=1e-15)
        np.testing.assert_allclose(pc.cov, -np.swapaxes(pc.cov, -3, -2), atol=1e-13)


class TestSpray:
    def test_lorentz_values(self):
        m = lorentz_model()
        s = spray(m, JetPoint.of(m, [0.0], [0.5, -1.0], [0.3, 0.7]))
        np.testing.assert_allclose(s.G[:, 0, 0], [0.35, -0.15], atol=1e-15)
        assert np.all(s.H == 0.0)

    @pytest.mark.parametrize("builder", [lorentz_model, lorentz_t_model, sphere_model])
    def test_euler_lagrange_oracle(self, builder):
        m = builder()
        rng = np.random.default_rng(11)
        for _ in range(3):
            t = rng.uniform(-1, 1)
            x = np.array([rng.uniform(0.5, 2.5), rng.uniform(-1, 1)])
            v = rng.uniform(-1, 1, 2)
            np.testing.assert_allclose(acceleration(m, t, x, v), euler_lagrange_acceleration(m, t, x, v),
                                       atol=1e-5)

    def test_euler_lagrange_oracle_with_time_dependent_metric_and_scalar(self):
        m = make_model(1, 2, {(1, 1): "1 + 0.5*t1^2"}, {(1, 1): "2 + x2^2", (1, 2): "0.3*x1", (2, 2): "1 + x1^2"},
                       U={(1, 1): "t1*x2^2", (1, 2): "cos(x1) + t1"}, F="x1*x2 - t1*x2")
        t, x, v = 0.7, np.array([0.4, -0.6]), np.array([0.9, -0.2])
        np.testing.assert_allclose(acceleration(m, t, x, v), euler_lagrange_acceleration(m, t, x, v), atol=1e-5)

    def test_time_symmetry(self):
        m = random_polynomial_model(2)
        s = spray(m, random_points(m, 10, 2))
        np.testing.assert_allclose(s.G, np.swapaxes(s.G, -2, -1), atol=1e-14)
        np.testing.assert_allclose(s.H, np.swapaxes(s.H, -2, -1), atol=1e-14)

    def test_contracted_spray(self):
        m = polar_time_model()
        pt = random_points(m, 4, 3)
        s = spray(m, pt)
        hinv = np.linalg.inv(FieldJets(m, pt.t, pt.x, 1).h)
        np.testing.assert_allclose(s.G_script, np.einsum("...ab,...iab->...i", hinv, s.G), atol=1e-14)


class TestNonlinearConnection:
    def test_lorentz_values(self):
        m = lorentz_model()
        nc = nonlinear_connection(m, JetPoint.of(m, [0.0], [0.5, -1.0], [0.3, 0.7]))
        np.testing.assert_allclose(nc.N[:, 0, :], [[0.0, 0.5], [-0.5, 0.0]], atol=1e-15)

    def test_sphere_is_christoffel_contraction(self):
        m = sphere_model()
        x1 = 1.1
        nc = nonlinear_connection(m, JetPoint.of(m, [0.0], [x1, 0.2], [0.4, 0.8]))
        # N^1_2 = gamma^1_22 v^2, N^2_1 = gamma^2_12 v^2, N^2_2 = gamma^2_21 v^1
        assert nc.N[0, 0, 1] == pytest.approx(-math.sin(x1) * math.cos(x1) * 0.8)
        assert nc.N[1, 0, 0] == pytest.approx(0.8 / math.tan(x1))
        assert nc.N[1, 0, 1] == pytest.approx(0.4 / math.tan(x1))

    def test_M_is_twice_H(self):
        m = polar_time_model()
        pt = random_points(m, 6, 5)
        np.testing.assert_allclose(nonlinear_connection(m, pt).M, 2 * spray(m, pt).H, atol=1e-15)
        assert np.abs(nonlinear_connection(m, pt).M).max() > 0.1

    @pytest.mark.parametrize("builder, tol", [(lorentz_model, 1e-8), (sphere_model, 1e-6),
                                              (polar_time_model, 1e-6)])
    def test_from_spray(self, builder, tol):
        m = builder()
        assert nonlinear_from_spray_check(m, random_points(m, 25, 0)).max() < tol

    def test_from_spray_random_model(self):
        m = random_polynomial_model(6, p=2, n=3)
        assert nonlinear_from_spray_check(m, random_points(m, 25, 6)).max() < 1e-6


class TestCartanTorsionCurvature:
    def test_cartan_components(self):
        m = sphere_model()
        cc = cartan_connection(m, ([0.0], [1.0, 0.0]))
        assert cc.L[0, 1, 1] == pytest.approx(-0.5 * math.sin(2.0))
        assert np.all(cc.G == 0.0) and np.all(cc.C == 0.0) and np.all(cc.H == 0.0)

    def test_time_dependent_potential_torsion(self):
        m = lorentz_t_model()
        tor = torsion(m, JetPoint.of(m, [0.8], [0.3, 0.1], [0.5, -0.5]))
        assert tor.R_tx[0, 0, 0, 1] == pytest.approx(-0.5)
        assert tor.R_tx[1, 0, 0, 0] == pytest.approx(0.5)
        assert np.all(tor.R_tt == 0.0)

    def test_flat_static_torsion_vanishes(self):
        m = lorentz_model()
        tor = torsion(m, JetPoint.of(m, [0.0], [0.3, 0.1], [0.5, -0.5]))
        for block in (tor.R_tt, tor.R_tx, tor.R_xx):
            np.testing.assert_allclose(block, 0.0, atol=1e-15)

    def test_sphere_spatial_torsion_is_curvature_times_velocity(self):
        m = sphere_model()
        x, v = np.array([1.2, 0.1]), np.array([0.3, -0.6])
        tor = torsion(m, JetPoint.of(m, [0.0], x, v))
        riem = curvature(m.g, x).riemann
        np.testing.assert_allclose(tor.R_xx[:, 0], np.einsum("mijk,k->mij", riem, v), atol=1e-13)

    def test_temporal_torsion_antisymmetric(self):
        m = random_polynomial_model(8)
        tor = torsion(m, random_points(m, 5, 8))
        np.testing.assert_allclose(tor.R_tt, -np.swapaxes(tor.R_tt, -2, -1), atol=1e-13)

    def test_curvature_d_blocks(self):
        m = sphere_model()
        ch, cg = curvature_d(m, ([0.0], [0.9, 0.0]))
        assert np.all(ch.riemann == 0.0)
        assert cg.scalar == pytest.approx(2.0, abs=1e-12)
