import numpy as np
import pytest

from sonolens.grid import FORM_CLEAR, WATER, GridSpec, SourceSpec
from sonolens.lensmap import BetaSchedule, DesignField
from sonolens.medium import make_homogeneous
from sonolens.optim import (
    Adam,
    LossReport,
    OptimConfig,
    TargetSpec,
    gradcheck,
    loss_acc,
    loss_and_gradient,
    loss_balance,
    loss_energy,
    optimize_lens_geometry,
)
from sonolens.solver import SolverConfig


def make_grid(nx=16, ny=16, nz=24, d=125e-6):
    return GridSpec(nx, ny, nz, d, d, d, 2e6, 1500.0)


def target_from_array(a):
    centers = [tuple(int(v) for v in np.argwhere(a == 1.0)[0])]
    return TargetSpec(a, centers)


class TestLossAcc:
    def test_proportional_is_zero(self):
        a = np.zeros((4, 4, 4))
        a[1, 1, 1] = 1.0
        a[2, 2, 2] = 1.0
        p = 3.0 * a  # |P|^2 proportional to a^2
        assert loss_acc(p, target_from_array(a)) == pytest.approx(0.0, abs=1e-12)

    def test_off_target_support_is_one(self):
        a = np.zeros((4, 4, 4))
        a[0, 0, 0] = 1.0
        p = np.zeros((4, 4, 4), dtype=complex)
        p[3, 3, 3] = 5.0
        assert loss_acc(p, target_from_array(a)) == pytest.approx(1.0)

    def test_two_voxel_hand_value(self):
        # A^2 = (1, 0), |P|^2 = (1, 1) -> 1 - 1/sqrt(2) = 0.2929
        a = np.zeros((2, 1, 1))
        a[0, 0, 0] = 1.0
        p = np.ones((2, 1, 1), dtype=complex)
        assert loss_acc(p, target_from_array(a)) == pytest.approx(
            1.0 - 1.0 / np.sqrt(2.0), abs=1e-6
        )
        assert loss_acc(p, target_from_array(a)) == pytest.approx(0.2929, abs=1e-4)

    def test_zero_field_defined_as_one(self):
        a = np.zeros((2, 2, 2))
        a[0, 0, 0] = 1.0
        assert loss_acc(np.zeros((2, 2, 2), dtype=complex),
                        target_from_array(a)) == 1.0

    def test_scale_invariance_exact(self):
        rng = np.random.default_rng(0)
        a = (rng.random((4, 4, 4)) > 0.7).astype(float)
        a[0, 0, 0] = 1.0
        p = rng.normal(size=(4, 4, 4)) + 1j * rng.normal(size=(4, 4, 4))
        t = target_from_array(a)
        assert loss_acc(p, t) == loss_acc(7.0 * p, t)


class TestLossEnergy:
    def test_unit_amplitude(self):
        a = np.zeros((3, 3, 3))
        a[1, 1, 1] = a[2, 2, 2] = 1.0
        p = np.ones((3, 3, 3), dtype=complex)
        assert loss_energy(p, target_from_array(a)) == pytest.approx(-1.0)

    def test_zero_field(self):
        a = np.zeros((3, 3, 3))
        a[1, 1, 1] = 1.0
        assert loss_energy(np.zeros((3, 3, 3), dtype=complex),
                           target_from_array(a)) == 0.0

    def test_two_voxel_mean(self):
        # |P| = (2, 4) on the two target voxels -> -3
        a = np.zeros((2, 1, 1))
        a[:, 0, 0] = 1.0
        p = np.array([2.0, 4.0]).reshape(2, 1, 1).astype(complex)
        assert loss_energy(p, target_from_array(a)) == pytest.approx(-3.0, abs=1e-6)


class TestLossBalance:
    def test_uniform_is_zero(self):
        a = np.zeros((3, 3, 3))
        a[0, 0, 0] = a[1, 1, 1] = 1.0
        p = np.full((3, 3, 3), 2.0, dtype=complex)
        assert loss_balance(p, target_from_array(a)) == 0.0

    def test_two_point_std(self):
        # intensities (1, 3) -> population std = 1
        a = np.zeros((2, 1, 1))
        a[:, 0, 0] = 1.0
        p = np.sqrt(np.array([1.0, 3.0])).reshape(2, 1, 1).astype(complex)
        assert loss_balance(p, target_from_array(a)) == pytest.approx(1.0, abs=1e-6)

    def test_single_voxel_degenerate(self):
        a = np.zeros((3, 3, 3))
        a[1, 1, 1] = 1.0
        rng = np.random.default_rng(1)
        p = rng.normal(size=(3, 3, 3)).astype(complex)
        assert loss_balance(p, target_from_array(a)) == 0.0

    def test_permutation_invariance(self):
        rng = np.random.default_rng(2)
        a = np.zeros((4, 4, 4))
        a[rng.random((4, 4, 4)) > 0.5] = 1.0
        a[0, 0, 0] = 1.0
        p = rng.normal(size=(4, 4, 4)).astype(complex)
        t = target_from_array(a)
        q = p.copy()
        q[a == 0] = rng.normal(size=int((a == 0).sum()))
        # changing off-target voxels leaves the balance term unchanged
        assert loss_balance(p, t) == loss_balance(q, t)


class TestLossGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        a = np.zeros((5, 5, 5))
        a[2, 2, 2] = a[1, 3, 4] = 1.0
        t = target_from_array(a)
        values = rng.normal(size=(5, 5, 5)) + 1j * rng.normal(size=(5, 5, 5))
        le, lb = 0.2, 0.5
        _, _, _, upstream = loss_and_gradient(values, t, le, lb)

        def total(v):
            return (loss_acc(v, t) + le * loss_energy(v, t)
                    + lb * loss_balance(v, t))

        eps = 1e-6
        rng2 = np.random.default_rng(4)
        for _ in range(8):
            idx = tuple(rng2.integers(0, 5, size=3))
            for direction in (1.0, 1j):
                vp = values.copy(); vp[idx] += eps * direction
                vm = values.copy(); vm[idx] -= eps * direction
                fd = (total(vp) - total(vm)) / (2 * eps)
                # pairing dL = Re(g * dP)
                analytic = np.real(upstream[idx] * direction)
                assert fd == pytest.approx(analytic, rel=1e-5, abs=1e-9)

    def test_report_recombines_exactly(self):
        report = LossReport(0.2, 0.5)
        total = report.append(0.3, -1.0, 0.25)
        assert total == 0.3 + 0.2 * (-1.0) + 0.5 * 0.25
        assert report.total[0] == total


class TestTargetSpec:
    def test_requires_active_voxel(self):
        with pytest.raises(ValueError, match="active"):
            TargetSpec(np.full((2, 2, 2), 0.5), [(0, 0, 0)])

    def test_amplitude_bounds(self):
        bad = np.zeros((2, 2, 2))
        bad[0, 0, 0] = 1.5
        with pytest.raises(ValueError):
            TargetSpec(bad, [(0, 0, 0)])

    def test_labels_partition_omega(self):
        a = np.zeros((8, 8, 8))
        a[1:3, 1:3, 1:3] = 1.0
        a[5:7, 5:7, 5:7] = 1.0
        t = TargetSpec(a, [(2, 2, 2), (6, 6, 6)])
        assert set(np.unique(t.focus_labels[t.omega])) == {1, 2}
        assert np.all(t.focus_labels[~t.omega] == 0)

    def test_from_spheres(self):
        g = make_grid()
        t = TargetSpec.from_spheres(g, [(8 * g.dx, 8 * g.dy, 12 * g.dz)],
                                    1.6 * g.dx)
        assert t.a_target[8, 8, 12] == 1.0
        assert t.focus_centers == [(8, 8, 12)]


class TestAdam:
    def test_zero_gradient_fixed_point(self):
        adam = Adam()
        theta = np.ones((4, 4))
        out = adam.step(theta, np.zeros((4, 4)))
        assert np.array_equal(out, theta)

    def test_step_direction(self):
        adam = Adam(lr=0.1)
        theta = np.zeros((2, 2))
        grad = np.array([[1.0, -1.0], [2.0, -2.0]])
        out = adam.step(theta, grad)
        assert np.all(np.sign(out) == -np.sign(grad))


class TestGradcheck:
    def test_quadratic_toy(self):
        A = np.diag([1.0, 2.0, 3.0, 4.0])

        def fn(x):
            return 0.5 * x @ A @ x, A @ x

        err = gradcheck(fn, np.array([1.0, -2.0, 0.5, 3.0]), step=1e-5,
                        n_coords=4)
        assert err < 1e-10

    def test_zero_step_rejected(self):
        with pytest.raises(ValueError):
            gradcheck(lambda x: (0.0, x), np.ones(3), step=0.0)

    def test_full_chain_small(self):
        # DHLA -> embed -> propagate -> loss on 16x16x24, reflection order 0
        g = make_grid()
        med = make_homogeneous(g, WATER)
        src = SourceSpec.full_plane(g)
        cfg = SolverConfig(reflection_order=0)
        t = TargetSpec.from_spheres(g, [(8 * g.dx, 8 * g.dy, 18 * g.dz)],
                                    1.5 * g.dx)

        from sonolens import lensmap
        from sonolens.solver import propagate_adjoint, propagate_with_lens
        from sonolens.optim import loss_and_gradient

        def chain(theta):
            d = DesignField(theta, v_max=6.0)
            lens = lensmap.forward(d, 5.0, 6)
            p, cache = propagate_with_lens(src, med, lens.occupancy,
                                           FORM_CLEAR, 0, cfg)
            la, le_, lb, upstream = loss_and_gradient(p.values, t, 0.2, 0.5)
            adj = propagate_adjoint(cache, upstream)
            grad = lensmap.backward(d, 5.0, adj.occupancy)
            return la + 0.2 * le_ + 0.5 * lb, grad

        theta0 = np.random.default_rng(0).uniform(-1, 1, size=(16, 16))
        assert gradcheck(chain, theta0, step=1e-4, n_coords=16) < 1e-5


class TestOptimizeLensGeometry:
    def test_zero_iterations_returns_initial(self):
        g = make_grid()
        med = make_homogeneous(g, WATER)
        src = SourceSpec.full_plane(g)
        t = TargetSpec.from_spheres(g, [(8 * g.dx, 8 * g.dy, 18 * g.dz)],
                                    1.5 * g.dx)
        design = DesignField.random(16, 16, v_max=6.0, seed=3)
        cfg = OptimConfig(iterations=0, solver=SolverConfig(reflection_order=0))
        result = optimize_lens_geometry(src, med, t, design, cfg, FORM_CLEAR)
        assert np.array_equal(result.design.theta, design.theta)
        assert result.report.total == []

    def test_loss_decreases_on_small_problem(self):
        g = make_grid(24, 24, 32)
        med = make_homogeneous(g, WATER)
        src = SourceSpec.full_plane(g)
        t = TargetSpec.from_spheres(g, [(12 * g.dx, 12 * g.dy, 24 * g.dz)],
                                    1.6 * g.dx)
        design = DesignField.random(24, 24, v_max=8.0, seed=0)
        cfg = OptimConfig(
            iterations=25,
            beta_schedule=BetaSchedule(1.0, 20.0, 25),
            solver=SolverConfig(reflection_order=0),
        )
        result = optimize_lens_geometry(src, med, t, design, cfg, FORM_CLEAR)
        assert result.report.total[-1] < result.report.total[0]
        assert result.lens.occupancy.shape[:2] == (24, 24)
        # final lens is hard-binarized
        assert set(np.unique(result.lens.occupancy)) <= {0.0, 1.0}

    def test_config_validation(self):
        with pytest.raises(ValueError):
            OptimConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            OptimConfig(lambda_energy=-0.1)
