import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nodelab.analysis import (AffineMap, FunctionalPair, GaugeSpec, UnsupportedGaugeError, anode_multifunc_fit,
                              compute_G, crossing_check, damped_acceleration, damped_pair, gauge_transform,
                              homeo_counterexample, initial_condition_matrix, interpretability_metrics, jacobians,
                              linear_family_identifiable, multifunc_series, planted_two_d_sonode)
from nodelab.datasets import damped_osc_closed_form, gen_2d_ode
from nodelab.models import make_anode, make_node, make_sonode
from nodelab.solvers import SolverConfig, Trajectory

OMEGA, GAMMA, C = 1.0, 0.1667, 1.2


class TestComputeG:
    def test_identity_coupling_returns_acceleration(self, rng):
        f_acc = damped_acceleration(OMEGA, GAMMA)
        F = AffineMap.identity_coupling(1)
        for x, a, t in rng.uniform(-2, 2, (20, 3)):
            assert compute_G(F, f_acc, [x], [a], t, ridge=0.0)[0] == f_acc([x], [a])[0]

    def test_identity_coupling_nonlinear_2d(self, rng):
        def f_acc(x, v, t=0.0):
            return np.array([np.sin(x[1]) * v[0], x[0] ** 2 - v[1] * t])

        F = AffineMap.identity_coupling(2)
        x, a = rng.normal(size=2), rng.normal(size=2)
        assert np.array_equal(compute_G(F, f_acc, x, a, 0.4, ridge=0.0), f_acc(x, a, 0.4))

    def test_recovers_closed_form_coupling(self, rng):
        pair = damped_pair(C, OMEGA, GAMMA)
        f_acc = damped_acceleration(OMEGA, GAMMA)
        for x, a, t in rng.uniform([-2, -2, 0], [2, 2, 10], (100, 3)):
            assert abs(compute_G(pair.F, f_acc, [x], [a], t)[0] - pair.G(x, a, t)[0]) <= 1e-6

    def test_frozen_value(self):
        assert damped_pair().G(0.3, 0.2)[0] == pytest.approx(0.36107666666666667, rel=1e-12)

    def test_finite_difference_jacobians_of_nonlinear_map(self):
        def F(x, a, t=0.0):
            return np.array([x[0] * a[0] + np.sin(t), a[0] ** 2])

        Fx, Fa, Ft = jacobians(F, np.array([0.5]), np.array([2.0]), 0.3)
        assert np.allclose(Fx, [[2.0], [0.0]], atol=1e-8)
        assert np.allclose(Fa, [[0.5], [4.0]], atol=1e-8)
        assert np.allclose(Ft, [np.cos(0.3), 0.0], atol=1e-8)

    def test_minimal_augmentation_is_least_squares(self, rng):
        # two real coordinates driven through a single augmented one
        Aa = np.array([[1.0], [2.0]])
        F = AffineMap.build(np.zeros((2, 2)), Aa)
        target = rng.normal(size=2)
        G = compute_G(F, lambda x, v, t=0.0: target, np.zeros(2), np.zeros(1), ridge=0.0)
        assert np.allclose(G, np.linalg.lstsq(Aa, target, rcond=None)[0], atol=1e-12)


class TestFunctionalPair:
    @pytest.mark.parametrize("x0,expected", [(0.0, np.sin), (1.0, np.cos)])
    def test_closed_form_trajectories(self, x0, expected):
        times = np.linspace(0.0, 10.0, 201)
        traj = damped_pair(C, OMEGA, GAMMA).integrate([x0], [0.0], times)
        assert np.max(np.abs(traj.states[:, 0] - np.exp(-GAMMA * times) * expected(OMEGA * times))) <= 1e-8

    def test_from_acceleration_identity(self):
        f_acc = damped_acceleration(OMEGA, GAMMA)
        pair = FunctionalPair.from_acceleration(AffineMap.identity_coupling(1), f_acc, 1, 1, ridge=0.0)
        traj = pair.integrate([0.0], [1.0], np.linspace(0.0, 5.0, 11))
        assert np.allclose(traj.states[:, 0], np.exp(-GAMMA * traj.times) * np.sin(traj.times), atol=1e-8)


class TestGauge:
    @settings(max_examples=10, deadline=None)
    @given(st.floats(-1.0, 1.0).filter(lambda a: abs(a) > 0.05))
    def test_real_trajectory_invariant(self, alpha):
        times = np.linspace(0.0, 10.0, 101)
        pair = damped_pair(C, OMEGA, GAMMA)
        f_acc = damped_acceleration(OMEGA, GAMMA)
        base = pair.integrate([0.0], [0.0], times)
        moved = gauge_transform(pair, GaugeSpec.build(alpha, [0.0]), f_acc).integrate([0.0], [0.0], times)
        assert np.max(np.abs(moved.states[:, 0] - base.states[:, 0])) <= 1e-6
        assert np.max(np.abs(moved.states[:, 1] - base.states[:, 1])) >= 1e-3

    def test_correction_matches_closed_form(self, rng):
        # for the damped oscillator pair the correction is -((alpha - w + g) phi + alpha F) / C
        pair = damped_pair(C, OMEGA, GAMMA)
        alpha, x0 = 0.4, 0.3
        moved = gauge_transform(pair, GaugeSpec.build(alpha, [x0]), damped_acceleration(OMEGA, GAMMA))
        for x, a in rng.uniform(-1, 1, (10, 2)):
            phi = alpha * (x - x0)
            expected = pair.G(x, a)[0] - ((alpha - OMEGA + GAMMA) * phi + alpha * pair.F([x], [a])[0]) / C
            assert moved.G([x], [a])[0] == pytest.approx(expected, abs=1e-8)

    def test_zero_gauge_is_identity(self):
        pair = damped_pair()
        assert gauge_transform(pair, GaugeSpec.build(0.0, [0.0]), damped_acceleration(OMEGA, GAMMA)) is pair

    def test_phi_vanishes_at_start(self):
        g = GaugeSpec.build(0.7, [1.5])
        assert g([1.5])[0] == 0.0

    def test_nonaffine_velocity_rejected(self):
        moved = gauge_transform(damped_pair(), GaugeSpec.build(0.5, [0.0]), lambda x, v, t=0.0: -x - v ** 3)
        with pytest.raises(UnsupportedGaugeError):
            moved.G([0.1], [0.2])

    def test_dimension_checked(self):
        with pytest.raises(UnsupportedGaugeError):
            gauge_transform(damped_pair(), GaugeSpec.build(0.5, [0.0, 0.0]), damped_acceleration(OMEGA, GAMMA))


class TestCrossings:
    def line(self, t, y):
        return Trajectory(t, np.asarray(y)[:, None])

    def test_parity_trajectories_cross_in_real_space(self):
        t = np.linspace(0.0, 1.0, 21)
        hits = crossing_check(self.line(t, 1 - 2 * t), self.line(t, -1 + 2 * t), "real", d=1)
        assert len(hits) == 1
        assert hits[0].point == pytest.approx((0.5, 0.0), abs=1e-12)
        assert hits[0].angle_deg > 5.0

    def test_parallel_curves_do_not_cross(self):
        t = np.linspace(0.0, 1.0, 11)
        assert crossing_check(self.line(t, t), self.line(t, t + 0.5), "real", d=1) == []

    def test_tangency_is_not_transversal(self):
        t = np.linspace(-1.0, 1.0, 401)
        a = Trajectory(t, np.column_stack([t, 0.1 * t ** 2]))
        b = Trajectory(t, np.column_stack([t, -0.1 * t ** 2]))
        assert crossing_check(a, b) == []

    def test_phase_portraits_of_oscillator_never_cross(self, rng):
        times = np.linspace(0.0, 10.0, 201)
        for _ in range(5):
            (x1, v1), (x2, v2) = rng.uniform(-1, 1, (2, 2))
            xa, va = damped_osc_closed_form(OMEGA, 0.1, x1, v1, times)
            xb, vb = damped_osc_closed_form(OMEGA, 0.1, x2, v2, times)
            assert crossing_check(Trajectory(times, np.column_stack([xa, va])),
                                  Trajectory(times, np.column_stack([xb, vb]))) == []

    def test_time_dependent_rule_needs_overlap(self):
        ta = np.linspace(0.0, 1.0, 11)
        tb = np.linspace(2.0, 3.0, 11)
        a = Trajectory(ta, np.column_stack([np.linspace(-1, 1, 11), np.zeros(11)]))
        b = Trajectory(tb, np.column_stack([np.zeros(11), np.linspace(-1, 1, 11)]))
        assert len(crossing_check(a, b)) == 1
        assert crossing_check(a, b, time_dependent=True) == []

    def test_unknown_space(self):
        t = np.linspace(0.0, 1.0, 3)
        with pytest.raises(ValueError):
            crossing_check(self.line(t, t), self.line(t, t), "augmented")


class TestCounterexample:
    def test_two_inputs_one_output(self):
        rec = homeo_counterexample()
        assert rec["injectivity_violated"]
        assert np.allclose(rec["outputs"], [2.0, 2.0], atol=1e-8)

    def test_zero_velocity_control(self):
        rec = homeo_counterexample(v0=0.0)
        assert not rec["injectivity_violated"] and rec["outputs"] == [0.0, 1.0]


class TestInterpretability:
    def test_planted_model_scores_zero(self):
        m = interpretability_metrics(planted_two_d_sonode(), gen_2d_ode(np.linspace(0.0, 10.0, 51)))
        assert m["init_velocity_rel_err"] <= 1e-12
        assert m["aug_vs_velocity_rmse"] <= 1e-8
        assert m["force_field_rmse"] <= 1e-12

    def test_untrained_models_score_worse(self, rng):
        truth = gen_2d_ode(np.linspace(0.0, 10.0, 51))
        for model in (make_sonode(2, rng), make_anode(2, 2, rng)):
            m = interpretability_metrics(model, truth, SolverConfig.rk4(0.1))
            assert m["init_velocity_rel_err"] > 0.1 and m["force_field_rmse"] > 0.1

    def test_rejects_node(self, rng):
        with pytest.raises(ValueError):
            interpretability_metrics(make_node(2, rng), gen_2d_ode(np.linspace(0.0, 1.0, 3)))


class TestMultiFunction:
    def test_series_shapes(self):
        assert multifunc_series(2).values.shape == (51, 2, 1)
        assert multifunc_series(3).values.shape == (51, 3, 1)

    def test_initial_condition_matrix(self):
        assert abs(np.linalg.det(initial_condition_matrix(multifunc_series(2)))) == pytest.approx(1.0)
        assert abs(np.linalg.det(initial_condition_matrix(multifunc_series(degenerate=True)))) == 0.0

    def test_degenerate_flagged(self):
        rec = anode_multifunc_fit(iters=2, degenerate=True)
        assert rec["degenerate"] and rec["n_funcs"] == 2 and len(rec["mse"]) == 2
        assert not anode_multifunc_fit(iters=2)["degenerate"]

    def test_bad_count(self):
        with pytest.raises(ValueError):
            multifunc_series(4)


class TestIdentifiability:
    def test_same_coefficients(self):
        rec = linear_family_identifiable((-1.01, -0.2), (-1.01, -0.2), np.linspace(0.0, 10.0, 11))
        assert rec == {"trajectories_agree": True, "acceleration_gap": 0.0}

    def test_different_coefficients(self):
        rec = linear_family_identifiable((-1.01, -0.2), (-1.0, -0.2), np.linspace(0.0, 10.0, 11))
        assert not rec["trajectories_agree"]
        assert rec["acceleration_gap"] == pytest.approx(0.01, rel=1e-9)
