import numpy as np
import pytest

from core import Box, DimensionError, GridSpec, ProblemSpec
from core.autodiff import backward
from control.dynamics import pvtol
from control.neural import LyapunovNet, PolicyNet, QuadraticLyapunov
from control.rollout import (
    DIVERGENCE_LIMIT,
    build_train_graph,
    check_compatible,
    default_slice_grid,
    divergence_limit,
    evaluate_loss,
    lyapunov_difference_field,
    simulate_batch,
    simulate_closed_loop,
    simulate_many,
    trajectory_summary,
)
from conftest import gain_policy, zero_policy

HAND_GAIN = [[0.9, 1.1]]


def test_train_graph_shapes(di_model, di_spec, small_policy, small_lyapunov):
    X0 = np.random.default_rng(0).uniform(-5, 5, size=(7, 2))
    graph = build_train_graph(small_policy, small_lyapunov, di_model, di_spec, X0)
    assert graph.state_array().shape == (7, 2, 2)
    assert graph.control_array().shape == (7, 1, 1)
    assert np.isfinite(graph.loss_value)
    assert set(graph.policy_params) == set(small_policy.params)
    assert set(graph.lyapunov_params) == set(small_lyapunov.params)


def test_equilibrium_batch_has_no_stage_cost(di_model, di_spec):
    assert evaluate_loss(zero_policy(), QuadraticLyapunov(2), di_model, di_spec, np.zeros((4, 2))) == 0.0


def test_train_graph_gradients_match_finite_differences(di_model, di_spec):
    policy = PolicyNet([2, 5, 1], horizon=1, n_u=1, activation="softplus", seed=1)
    V = LyapunovNet.build(2, [5, 5], seed=2)
    X0 = np.array([[3.0, -2.0], [-4.0, 1.5], [6.0, 5.0]])
    graph = build_train_graph(policy, V, di_model, di_spec, X0)
    grads = backward(graph.tape, graph.loss)

    h = 1e-6
    for net in (policy, V):
        for name, value in net.params.items():
            for index in list(np.ndindex(value.shape))[:4]:
                original = value[index]
                value[index] = original + h
                plus = evaluate_loss(policy, V, di_model, di_spec, X0)
                value[index] = original - h
                minus = evaluate_loss(policy, V, di_model, di_spec, X0)
                value[index] = original
                numeric = (plus - minus) / (2 * h)
                exact = grads[name][index]
                assert abs(exact - numeric) <= 1e-4 * max(1.0, abs(exact), abs(numeric)), name


def test_incompatible_dimensions(di_model, di_spec):
    with pytest.raises(DimensionError):
        check_compatible(PolicyNet([6, 4, 1], horizon=1, n_u=1), QuadraticLyapunov(2), di_model)
    with pytest.raises(DimensionError):
        check_compatible(zero_policy(horizon=2), QuadraticLyapunov(2), di_model, di_spec)
    with pytest.raises(DimensionError):
        build_train_graph(zero_policy(), QuadraticLyapunov(2), di_model, di_spec, np.zeros((3, 3)))


def test_hand_gain_stabilizes_double_integrator(di_model):
    closed = di_model.A - di_model.B @ np.asarray(HAND_GAIN)
    assert np.max(np.abs(np.linalg.eigvals(closed))) < 1.0

    trajectory = simulate_closed_loop(gain_policy(HAND_GAIN), QuadraticLyapunov(2), di_model, [1.0, 0.0], T=50)
    assert not trajectory.diverged
    assert trajectory.steps == 50
    assert np.linalg.norm(trajectory.states[-1]) < 1e-6
    assert trajectory.states.shape == (51, 2)
    assert trajectory.controls.shape == (50, 1)


def test_zero_policy_diverges_within_horizon(di_model):
    trajectory = simulate_closed_loop(zero_policy(), QuadraticLyapunov(2), di_model, [1.0, 0.0], T=50)
    assert trajectory.diverged
    assert trajectory.steps < 50
    assert np.max(np.abs(trajectory.states[-1])) > divergence_limit(di_model.state_box)


def test_divergence_limit():
    assert divergence_limit(Box.symmetric(10.0, 2)) == pytest.approx(1000.0)
    assert divergence_limit(Box.symmetric(1e6, 2)) == DIVERGENCE_LIMIT


def test_origin_stays_at_origin(di_model):
    trajectory = simulate_closed_loop(gain_policy(HAND_GAIN), QuadraticLyapunov(2), di_model, [0.0, 0.0], T=20)
    assert not trajectory.states.any()
    assert not trajectory.lyapunov.any()


def test_simulate_batch_freezes_only_diverged_columns(di_model):
    X0 = np.array([[1.0, 0.0], [0.0, 0.0]])
    first, second = simulate_batch(zero_policy(), QuadraticLyapunov(2), di_model, X0, T=50)
    assert first.diverged and not second.diverged
    assert second.steps == 50


def test_simulation_uses_problem_weights(di_model, di_spec):
    policy = gain_policy(HAND_GAIN)
    plain = simulate_closed_loop(policy, QuadraticLyapunov(2), di_model, [1.0, 0.0], T=3)
    weighted = simulate_closed_loop(policy, QuadraticLyapunov(2), di_model, [1.0, 0.0], T=10, spec=di_spec)
    # x0 = [1, 0]，u0 = −0.9
    assert plain.stage_losses[0] == pytest.approx(1.0 + 0.81)
    assert weighted.stage_losses[0] == pytest.approx(5.0 + 0.5 * 0.81)
    assert weighted.terminal_violation is False
    assert plain.terminal_violation is None


def test_simulate_many_matches_single_batch(di_model, small_policy, small_lyapunov):
    X0 = np.random.default_rng(3).uniform(-3, 3, size=(600, 2))
    many = simulate_many(small_policy, small_lyapunov, di_model, X0, T=5, threads=3)
    assert len(many) == 600
    direct = simulate_batch(small_policy, small_lyapunov, di_model, X0[300:302], T=5)
    np.testing.assert_allclose(many[300].states, direct[0].states, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(many[301].lyapunov, direct[1].lyapunov, rtol=1e-12, atol=1e-12)
    single = simulate_many(small_policy, small_lyapunov, di_model, X0, T=5, threads=1)
    np.testing.assert_array_equal(single[599].states, many[599].states)


def test_difference_field_negative_for_hand_gain(di_model):
    grid = GridSpec(dims=(0, 1), ranges=((-1.0, 1.0), (-1.0, 1.0)), resolution=(3, 3), fixed=np.zeros(2))
    field = lyapunov_difference_field(QuadraticLyapunov(2), gain_policy(HAND_GAIN), di_model, grid)
    assert field.shape == (3, 3)
    assert field[1, 1] == 0.0
    mask = np.ones((3, 3), dtype=bool)
    mask[1, 1] = False
    assert np.all(field[mask] < 0.0)


def test_default_slice_grid():
    grid = default_slice_grid(Box.symmetric(10.0, 2), resolution=21)
    assert grid.dims == (0, 1)
    assert grid.points().shape == (441, 2)
    velocity = default_slice_grid(pvtol().state_box, resolution=5)
    assert velocity.dims == (3, 4)
    assert velocity.points().shape == (25, 6)


def test_trajectory_summary(di_model):
    policy = gain_policy(HAND_GAIN)
    good = simulate_closed_loop(policy, QuadraticLyapunov(2), di_model, [1.0, 0.0], T=50)
    bad = simulate_closed_loop(zero_policy(), QuadraticLyapunov(2), di_model, [1.0, 0.0], T=50)
    summary = trajectory_summary([good, bad])
    assert summary == {"converged": 0.5, "contracted": 0.5, "diverged": 0.5}
    assert trajectory_summary([]) == {"converged": 0.0, "contracted": 0.0, "diverged": 0.0}


def test_closed_loop_replay_is_bit_exact(di_model, small_policy, small_lyapunov, di_spec):
    first = simulate_closed_loop(small_policy, small_lyapunov, di_model, [4.0, -2.5], T=40, spec=di_spec)
    second = simulate_closed_loop(small_policy.clone(), small_lyapunov.clone(), di_model, [4.0, -2.5],
                                  T=40, spec=di_spec)
    for name in ("states", "controls", "lyapunov", "stage_losses"):
        np.testing.assert_array_equal(getattr(first, name), getattr(second, name))
    assert first.diverged == second.diverged


def test_single_step_horizon_matches_training_rollout(di_model, di_spec, small_policy, small_lyapunov):
    # N=1 时闭环每一步都等于训练图里的一步预测
    trajectory = simulate_closed_loop(small_policy, small_lyapunov, di_model, [3.0, 1.5], T=15)
    for k in range(trajectory.steps):
        graph = build_train_graph(small_policy, small_lyapunov, di_model, di_spec, trajectory.states[k][None, :])
        np.testing.assert_allclose(graph.control_array()[0, 0], trajectory.controls[k], rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(graph.state_array()[0, 1], trajectory.states[k + 1], rtol=1e-12, atol=1e-12)


def test_receding_horizon_applies_first_planned_action():
    model = pvtol()
    spec = ProblemSpec(state_box=model.state_box, input_box=model.input_box, horizon=3)
    policy = PolicyNet([6, 8, 6], horizon=3, n_u=2, seed=5)
    V = QuadraticLyapunov(6)
    x0 = np.array([0.5, -0.2, 0.1, 0.0, 0.3, -0.1])
    graph = build_train_graph(policy, V, model, spec, x0[None, :])
    trajectory = simulate_closed_loop(policy, V, model, x0, T=2)
    np.testing.assert_allclose(trajectory.controls[0], graph.control_array()[0, 0], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(trajectory.states[1], graph.state_array()[0, 1], rtol=1e-12, atol=1e-12)
    # 第二步重新规划，而不是沿用开环序列的 u_1
    replanned = build_train_graph(policy, V, model, spec, trajectory.states[1][None, :])
    np.testing.assert_allclose(trajectory.controls[1], replanned.control_array()[0, 0], rtol=1e-12, atol=1e-12)
