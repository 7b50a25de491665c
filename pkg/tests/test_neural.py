import math

import numpy as np
import pytest

from core import ConfigError, DimensionError
from core.autodiff import grad_check, sum_all
from control.neural import (
    IcnnNet,
    LyapunovNet,
    PolicyNet,
    QuadraticLyapunov,
    icnn_forward,
    init_params,
    lyapunov_forward,
    lyapunov_values,
    policy_first_action,
    policy_forward,
)
from conftest import jensen_gap, zero_policy


def test_zero_policy_outputs_zero():
    policy = zero_policy()
    np.testing.assert_array_equal(policy_forward(policy, [3.0, -1.0]), np.zeros((1, 1)))


def test_policy_output_shapes():
    di = PolicyNet([2, 20, 20, 20, 1], horizon=1, n_u=1)
    assert policy_forward(di, [1.0, 2.0]).shape == (1, 1)
    pvtol = PolicyNet([6, 20, 20, 20, 20], horizon=10, n_u=2)
    U = policy_forward(pvtol, np.ones(6))
    assert U.shape == (10, 2)
    np.testing.assert_array_equal(policy_first_action(pvtol, np.ones(6)), U[0])


def test_policy_rejects_bad_shapes():
    with pytest.raises(ConfigError):
        PolicyNet([2, 4, 3], horizon=1, n_u=1)
    with pytest.raises(ConfigError):
        PolicyNet([2, 4, 1], horizon=1, n_u=1, activation="tanh")
    with pytest.raises(DimensionError):
        policy_forward(PolicyNet([2, 4, 1], horizon=1, n_u=1), [1.0, 2.0, 3.0])


def test_init_is_seeded_and_bounded():
    widths = [2, 20, 20, 1]
    a, b = init_params(widths, seed=1), init_params(widths, seed=1)
    c = init_params(widths, seed=2)
    for name in a:
        np.testing.assert_array_equal(a[name], b[name])
    assert any(not np.array_equal(a[name], c[name]) for name in a if name.startswith("W"))
    for layer, fan_in in enumerate(widths[:-1]):
        assert np.abs(a[f"W{layer}"]).max() <= math.sqrt(6.0 / fan_in)
        assert not a[f"b{layer}"].any()


def test_icnn_is_convex_along_random_segments():
    icnn = IcnnNet([2, 16, 16, 16, 1], beta=5.0, seed=11)
    rng = np.random.default_rng(0)
    count = 5000
    x1 = rng.uniform(-10, 10, size=(2, count))
    x2 = rng.uniform(-10, 10, size=(2, count))
    lam = rng.uniform(0, 1, size=count)
    mid = lam * x1 + (1 - lam) * x2
    g_mid = icnn.evaluate(mid)[0]
    chord = lam * icnn.evaluate(x1)[0] + (1 - lam) * icnn.evaluate(x2)[0]
    assert np.all(g_mid <= chord + 1e-9)


def test_icnn_hidden_weights_nonnegative():
    icnn = IcnnNet([2, 5, 5, 1], seed=0)
    for layer in (1, 2):
        assert np.all(icnn.effective_u(layer) >= 0.0)
    # 原始参数可以为负，但有效权重仍非负
    icnn.params["lyapunov.U1"][...] = -3.0
    assert np.all(icnn.effective_u(1) > 0.0)
    assert isinstance(icnn_forward(icnn, [0.5, 0.5]), float)


def test_lyapunov_zero_at_origin_and_bounded_below():
    V = LyapunovNet.build(2, [10, 10, 10], epsilon=0.01, seed=5)
    assert lyapunov_forward(V, [0.0, 0.0]) == 0.0

    rng = np.random.default_rng(1)
    states = rng.uniform(-10, 10, size=(2000, 2))
    values = lyapunov_values(V, states)
    assert np.all(values - 0.01 * np.sum(states ** 2, axis=1) >= -1e-9)


def test_lyapunov_positive_for_random_parameters():
    rng = np.random.default_rng(2)
    for seed in range(5):
        V = LyapunovNet.build(6, [8, 8], epsilon=0.05, seed=seed)
        for value in V.params.values():
            value += rng.normal(scale=0.5, size=value.shape)
        states = rng.uniform(-5, 5, size=(200, 6))
        assert np.all(lyapunov_values(V, states) >= 0.05 * np.sum(states ** 2, axis=1) - 1e-9)
        assert lyapunov_forward(V, np.zeros(6)) == 0.0


def test_lyapunov_rejects_bad_hyperparameters():
    icnn = IcnnNet([2, 4, 1])
    with pytest.raises(ConfigError):
        LyapunovNet(icnn, epsilon=0.0)
    with pytest.raises(ConfigError):
        IcnnNet([2, 4, 2])


def test_lyapunov_gradient_matches_finite_differences():
    V = LyapunovNet.build(2, [4, 4], seed=9)
    x = np.array([[1.5, -2.0, 0.7], [0.4, 3.0, -1.1]])

    def f(tape, nodes):
        return sum_all(V.forward(tape, tape.constant(x), nodes))

    assert grad_check(f, V.params) <= 1e-4


def test_policy_gradient_matches_finite_differences():
    policy = PolicyNet([2, 5, 5, 3], horizon=3, n_u=1, activation="softplus", seed=2)
    x = np.array([[1.0, -0.5], [2.0, 0.25]])

    def f(tape, nodes):
        return sum_all(policy.forward(tape, tape.constant(x), nodes))

    assert grad_check(f, policy.params) <= 1e-4


def test_clone_is_independent():
    V = LyapunovNet.build(2, [4], seed=0)
    copy = V.clone()
    V.params["lyapunov.W0"][...] = 0.0
    assert copy.params["lyapunov.W0"].any()
    assert copy.params is copy.icnn.params


def test_quadratic_lyapunov():
    V = QuadraticLyapunov(2)
    assert lyapunov_forward(V, [3.0, 4.0]) == 25.0
    assert V.parameter_count() == 0
    weighted = QuadraticLyapunov(2, np.diag([2.0, 1.0]))
    assert lyapunov_forward(weighted, [1.0, 1.0]) == 3.0
    with pytest.raises(DimensionError):
        QuadraticLyapunov(2, np.eye(3))


@pytest.mark.parametrize("draw", range(10))
def test_icnn_jensen_inequality_for_random_draws(draw):
    rng = np.random.default_rng(100 + draw)
    icnn = IcnnNet([2, 16, 16, 1], beta=5.0, seed=draw)
    # 打乱所有原始参数，包括可以为负的 Û
    for value in icnn.params.values():
        value += rng.normal(scale=0.3, size=value.shape)
    assert jensen_gap(icnn, rng).max() <= 1e-9


def test_policy_zero_at_origin():
    policy = PolicyNet([2, 8, 8, 1], horizon=1, n_u=1, seed=4, zero_at_origin=True)
    for name, value in policy.params.items():
        if name.startswith("policy.b"):
            value[...] = 0.7
    assert policy_forward(policy, [0.0, 0.0])[0, 0] == 0.0
    batch = np.array([[0.0, 3.0, -2.0], [0.0, 1.0, 5.0]])
    outputs = policy.evaluate(batch)
    assert abs(outputs[0, 0]) <= 1e-12

    shifted = PolicyNet([2, 8, 8, 1], horizon=1, n_u=1, params=policy.params)
    expected = shifted.evaluate(batch[:, 1:])[0] - shifted.evaluate([0.0, 0.0])[0, 0]
    np.testing.assert_allclose(outputs[0, 1:], expected, rtol=1e-12, atol=1e-12)


def test_zero_at_origin_gradient_matches_finite_differences():
    policy = PolicyNet([2, 5, 2], horizon=2, n_u=1, activation="softplus", seed=6, zero_at_origin=True)
    x = np.array([[1.0, -0.5], [2.0, 0.25]])

    def f(tape, nodes):
        return sum_all(policy.forward(tape, tape.constant(x), nodes))

    assert grad_check(f, policy.params) <= 1e-4
