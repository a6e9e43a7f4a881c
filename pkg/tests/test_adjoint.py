import csv

import numpy as np
import pytest

from nodelab.adjoint import (REPORT_COLUMNS, Counters, GradResult, MemoryCapError, count_ops, grad_backprop_solver,
                             grad_check_rows, grad_coupled, grad_finite_diff, grad_second_order, loss_value, rel_err,
                             write_grad_check_csv)
from nodelab.models import ClosedForm, MlpParams, ModelSpec, make_anode, make_kth_order, make_node, make_sonode
from nodelab.solvers import SolverConfig
from nodelab.training import MseLoss


def endpoint_square(states):
    cot = np.zeros_like(states)
    cot[-1] = 2 * states[-1]
    return float(np.sum(states[-1] ** 2)), cot


def random_problem(model, rng, n=2, n_times=3):
    X0 = rng.uniform(-1, 1, (n, model.d))
    times = np.linspace(0.0, 0.8, n_times)
    return X0, times, MseLoss(rng.normal(size=(n_times, n, model.phase_dim)))


class TestClosedFormOracle:
    """``x' = th x + b`` with loss ``x(T)^2`` has closed-form sensitivities."""

    th, b, T, x0 = 0.3, 0.0, 1.5, 0.7

    def model(self):
        return ModelSpec("node", 1, MlpParams.affine([[self.th]], [self.b]))

    def test_gradient(self):
        g = grad_coupled(self.model(), [[self.x0]], [0.0, self.T], endpoint_square)
        xT = self.x0 * np.exp(self.th * self.T)
        assert g.d_theta_f[0] == pytest.approx(2 * self.T * xT * xT, rel=1e-8)
        assert g.d_theta_f[1] == pytest.approx(2 * xT * np.expm1(self.th * self.T) / self.th, rel=1e-8)
        # frozen from the closed form above
        assert g.d_theta_f[0] == pytest.approx(3.615616573400715, rel=1e-8)

    def test_adjoint_at_start(self):
        g = grad_coupled(self.model(), [[self.x0]], [0.0, self.T], endpoint_square)
        assert g.adjoint_samples[0][0, 0] == pytest.approx(2 * self.x0 * np.exp(2 * self.th * self.T), rel=1e-8)

    def test_loss_reported(self):
        g = grad_coupled(self.model(), [[self.x0]], [0.0, self.T], endpoint_square)
        assert g.loss == pytest.approx((self.x0 * np.exp(self.th * self.T)) ** 2, rel=1e-9)


class TestCoupledAgainstFiniteDifference:
    # central differences with h=1e-4 carry a truncation floor near 1e-5 on ELU networks
    @pytest.mark.parametrize("builder", [
        lambda r: make_node(2, r, time_input=True),
        lambda r: make_anode(1, 2, r),
        lambda r: make_anode(1, 1, r, learn_aug_init=True),
        lambda r: make_sonode(2, r),
        lambda r: make_kth_order(1, 3, r),
    ], ids=["node", "anode", "anode_learned_init", "sonode", "kth_order"])
    def test_all_kinds(self, rng, builder):
        model = builder(rng)
        X0, times, loss = random_problem(model, rng)
        g = grad_coupled(model, X0, times, loss)
        fd = grad_finite_diff(model, X0, times, loss)
        assert rel_err(g.flat(), fd.flat()) <= 1e-4

    def test_state_network_gradient(self, rng):
        model = ModelSpec("sonode", 1, MlpParams.init([2, 6, 1], rng), MlpParams.init([1, 6, 1], rng, "tanh"),
                          MlpParams.init([1, 1], rng, "tanh"), order=2)
        X0, times, loss = random_problem(model, rng)
        g = grad_coupled(model, X0, times, loss)
        fd = grad_finite_diff(model, X0, times, loss)
        assert rel_err(g.d_theta_s, fd.d_theta_s) <= 1e-4
        assert rel_err(g.d_theta_g, fd.d_theta_g) <= 1e-4

    def test_matches_fine_backprop(self, rng):
        model = make_node(2, rng, time_input=True)
        X0, times, loss = random_problem(model, rng)
        ref = grad_backprop_solver(model, X0, times, loss, 200)
        assert rel_err(grad_coupled(model, X0, times, loss).flat(), ref.flat()) <= 1e-6


class TestSecondOrder:
    def test_matches_coupled(self, rng):
        model = make_sonode(2, rng, time_input=True)
        X0, times, loss = random_problem(model, rng, n_times=4)
        a = grad_coupled(model, X0, times, loss)
        b = grad_second_order(model, X0, times, loss)
        for grp in ("theta_f", "theta_g"):
            assert rel_err(a.group(grp), b.group(grp)) <= 1e-5

    def test_velocity_adjoint_equals_phase_adjoint_block(self, rng):
        model = make_sonode(1, rng)
        X0, times, loss = random_problem(model, rng)
        a = grad_coupled(model, X0, times, loss)
        b = grad_second_order(model, X0, times, loss)
        for i in range(len(times)):
            assert np.allclose(b.adjoint_samples[i], a.adjoint_samples[i][:, 1:], atol=1e-6)

    def test_closed_form_field(self):
        model = ModelSpec("sonode", 1, ClosedForm("linear_osc", {"k": -1.0, "c": -0.3}),
                          MlpParams.affine([[0.5]], [0.1]), order=2)
        X0 = np.array([[0.4], [-0.8]])
        times = np.array([0.0, 0.5, 2.0])
        loss = MseLoss(np.ones((3, 2, 2)))
        a = grad_coupled(model, X0, times, loss)
        b = grad_second_order(model, X0, times, loss)
        assert rel_err(a.flat(), b.flat()) <= 1e-7

    def test_rejects_first_order_models(self, rng):
        model = make_node(1, rng)
        with pytest.raises(ValueError):
            grad_second_order(model, [[0.0]], [0.0, 1.0], endpoint_square)

    def test_uses_more_vjps_than_coupled(self, rng):
        model = make_sonode(1, rng)
        X0, times, loss = random_problem(model, rng)
        assert count_ops("second_order", model, X0, times, loss).vjp_calls \
            >= count_ops("coupled", model, X0, times, loss).vjp_calls


class TestBackprop:
    def test_exact_gradient_of_discrete_loss(self, rng):
        model = make_sonode(1, rng)
        X0, times, loss = random_problem(model, rng)
        n_steps = 4
        g = grad_backprop_solver(model, X0, times, loss, n_steps)
        cfg = SolverConfig.rk4((times[1] - times[0]) / n_steps)
        fd = grad_finite_diff(model, X0, times, loss, h=1e-5, cfg=cfg)
        assert rel_err(g.flat(), fd.flat()) <= 1e-7
        assert g.loss == pytest.approx(loss_value(model, X0, times, loss, cfg), rel=1e-12)

    def test_converges_to_continuous_gradient(self, rng):
        model = make_anode(1, 1, rng)
        X0, times, loss = random_problem(model, rng)
        ref = grad_coupled(model, X0, times, loss)
        assert rel_err(grad_backprop_solver(model, X0, times, loss, 50).flat(), ref.flat()) <= 1e-6

    def test_counts_four_vjps_per_step(self, rng):
        model = make_node(1, rng)
        g = grad_backprop_solver(model, [[0.1]], [0.0, 0.5, 1.0], endpoint_square, n_steps=3)
        assert g.counters.vjp_calls == 4 * 3 * 2 and g.forward_nfe == 24

    def test_memory_cap(self, rng):
        with pytest.raises(MemoryCapError):
            grad_backprop_solver(make_node(1, rng), [[0.1]], [0.0, 1.0], endpoint_square, 1000, max_floats=100)


class TestInstrumentation:
    def test_disabled_counters_stay_zero(self, rng):
        model = make_sonode(1, rng)
        X0, times, loss = random_problem(model, rng)
        g = grad_coupled(model, X0, times, loss, instrument=False)
        assert (g.counters.vjp_calls, g.counters.field_evals) == (0, 0)

    def test_gradient_independent_of_instrumentation(self, rng):
        model = make_sonode(1, rng)
        X0, times, loss = random_problem(model, rng)
        a = grad_second_order(model, X0, times, loss, instrument=True)
        b = grad_second_order(model, X0, times, loss, instrument=False)
        assert np.array_equal(a.flat(), b.flat())


class TestReport:
    def test_rel_err(self):
        assert rel_err([0.0, 0.0], [0.0, 0.0]) == 0.0
        assert rel_err([3.0, 4.0], [3.0, 4.0]) == 0.0
        assert rel_err([1.0, 0.0], [0.0, 0.0]) == 1.0
        assert rel_err([3.0, 4.0], [0.0, 4.0]) == pytest.approx(0.6)

    def test_rows_and_csv(self, tmp_path):
        res = {name: GradResult(np.ones(2) * k, np.zeros(0), np.zeros(0), counters=Counters(vjp_calls=k))
               for k, name in enumerate(["coupled", "second_order", "backprop"], start=1)}
        rows = grad_check_rows(res)
        assert len(rows) == 3 * 3
        assert {(r["engine_a"], r["engine_b"]) for r in rows} == {
            ("coupled", "second_order"), ("coupled", "backprop"), ("second_order", "backprop")}
        write_grad_check_csv(rows, tmp_path / "g.csv")
        with open(tmp_path / "g.csv") as fh:
            read = list(csv.DictReader(fh))
        assert list(read[0]) == REPORT_COLUMNS
        assert float(read[0]["rel_err"]) == pytest.approx(0.5)

    def test_unsorted_times_rejected(self, rng):
        with pytest.raises(ValueError):
            grad_coupled(make_node(1, rng), [[0.0]], [0.0, 1.0, 0.5], endpoint_square)

    def test_fd_step_validated(self, rng):
        with pytest.raises(ValueError):
            grad_finite_diff(make_node(1, rng), [[0.0]], [0.0, 1.0], endpoint_square, h=0.0)
