import numpy as np
import pytest

from stdp_lab import gradlink
from stdp_lab.gradlink import (
    LayeredNetwork,
    Objective,
    analytic_ds_dw,
    check_gradient,
    random_network,
    sgd_equivalence_run,
    step_activation,
)
from stdp_lab.rates import ActivationParams, rho


@pytest.fixture
def instance():
    rng = np.random.default_rng(2024)
    return random_network(rng, 3, 4), rng.normal(size=4)


def test_zero_coupling():
    net = LayeredNetwork(0.7, 0.0, np.ones((2, 3)))
    assert np.all(step_activation(net, np.zeros(3)) == 0.7)
    assert np.all(analytic_ds_dw(net, np.zeros(3)) == 0.0)


def test_single_product():
    net = LayeredNetwork(0.0, 2.0, [[0.5]], ActivationParams(max_prob=1.0))
    assert step_activation(net, [0.0])[0] == 0.5


def test_matches_explicit_loops(instance):
    net, s_prev = instance
    expected = []
    for i in range(3):
        total = 0.0
        for j in range(4):
            total += net.weights[i, j] * rho(s_prev[j], net.act)
        expected.append(net.alpha + net.beta * total)
    assert np.allclose(step_activation(net, s_prev), expected, rtol=1e-14, atol=0)


def test_dimension_mismatch(instance):
    net, _ = instance
    with pytest.raises(ValueError):
        step_activation(net, np.zeros(3))
    with pytest.raises(ValueError):
        analytic_ds_dw(net, np.zeros(5))


def test_sensitivity_rows_identical(instance):
    net, s_prev = instance
    sens = analytic_ds_dw(net, s_prev)
    assert sens.shape == (3, 4)
    assert np.all(sens == sens[0])


def test_gradcheck_logistic(instance):
    net, s_prev = instance
    report = check_gradient(net, s_prev, 1e-4)
    assert report.finite and report.max_rel_error <= 1e-6


def test_gradcheck_linear_stub_is_exact(instance, monkeypatch):
    monkeypatch.setattr(gradlink, "rho", lambda s, act: np.asarray(s, dtype=float))
    net, s_prev = instance
    report = check_gradient(net, s_prev, 1e-3)
    assert report.max_rel_error < 1e-11


def test_gradcheck_error_has_no_truncation_term(instance):
    # s is linear in W, so central differences carry no O(h^2) error; only rounding
    # (growing like 1/h) remains across h = 1e-2 .. 1e-4.
    net, s_prev = instance
    errors = [check_gradient(net, s_prev, h).max_rel_error for h in (1e-2, 1e-3, 1e-4)]
    assert max(errors) < 1e-9


def test_gradcheck_rejects_bad_step(instance):
    with pytest.raises(ValueError):
        check_gradient(*instance, h=0.0)


def test_gradcheck_flags_non_finite(instance):
    net, s_prev = instance
    huge = net.with_weights(np.full((3, 4), 1e308))
    report = check_gradient(huge, s_prev, 1e308)
    assert not report.finite and not report.passed(1e-6)


def test_equivalence_random_instance(instance):
    net, s_prev = instance
    obj = Objective(np.random.default_rng(7).normal(size=3))
    report = sgd_equivalence_run(net, obj, s_prev, relax_steps=50, eps=1e-2)
    assert len(report.fd_rel_dev) == 50
    assert report.max_chain_rel_dev < 1e-13
    assert report.max_fd_rel_dev <= 1e-5
    assert report.monotone


def test_equivalence_fixed_point(instance):
    net, s_prev = instance
    obj = Objective(step_activation(net, s_prev))
    report = sgd_equivalence_run(net, obj, s_prev, relax_steps=5)
    assert np.all(report.rule_updates == 0)
    assert np.max(np.abs(report.fd_steps)) <= 1e-8  # h^2
    assert np.all(report.objective == 0)


def test_equivalence_sign_chain():
    net = LayeredNetwork(0.0, 1.5, [[0.8]])
    s_prev = np.array([0.3])
    s_out = step_activation(net, s_prev)
    obj = Objective(s_out + 0.5)
    report = sgd_equivalence_run(net, obj, s_prev, relax_steps=20)
    s = s_out.copy()
    for k in range(20):
        expected_sign = np.sign((obj.target - s)[0] * rho(0.3, net.act))
        assert np.sign(report.rule_updates[k][0, 0]) == expected_sign
        s = s - 1e-2 * obj.grad(s)


def test_equivalence_errors(instance):
    net, s_prev = instance
    obj = Objective(np.zeros(3))
    with pytest.raises(ValueError):
        sgd_equivalence_run(LayeredNetwork(0.0, 0.0, net.weights), obj, s_prev)
    with pytest.raises(ValueError):
        sgd_equivalence_run(net, obj, s_prev, eps=0.0)
    with pytest.raises(gradlink.DivergenceError):
        sgd_equivalence_run(net, obj, s_prev, eps=5.0, relax_steps=200)
