import dataclasses
import math

import numpy as np
import pytest

from core import Box, ConfigError, DimensionError, ProblemSpec
from core.autodiff import Tape, backward
from control.neural import QuadraticLyapunov
from control.objective import (
    box_penalty,
    nldpc_loss,
    penalty_input,
    penalty_lyapunov,
    penalty_state,
    penalty_terminal,
    stage_loss,
)
from control.rollout import build_train_graph
from conftest import gain_policy, zero_policy


def _value(node):
    return float(node.value[0, 0])


def test_stage_loss(di_spec):
    tape = Tape()
    assert _value(stage_loss(di_spec, tape.constant([1.0, 1.0]), tape.constant([0.5]))) == pytest.approx(10.125)
    assert _value(stage_loss(di_spec, tape.constant([0.0, 0.0]), tape.constant([0.0]))) == 0.0


def test_state_penalty(di_spec):
    tape = Tape()
    assert _value(penalty_state(di_spec, tape.constant([11.0, 0.0]))) == pytest.approx(1.0)
    assert _value(penalty_state(di_spec, tape.constant([13.0, -14.0]))) == pytest.approx(5.0)
    assert _value(penalty_state(di_spec, tape.constant([3.0, -4.0]))) == 0.0


def test_input_penalty(di_spec):
    tape = Tape()
    assert _value(penalty_input(di_spec, tape.constant([0.0]))) == 0.0
    assert _value(penalty_input(di_spec, tape.constant([1.5]))) == pytest.approx(0.5)
    assert _value(penalty_input(di_spec, tape.constant([-2.0]))) == pytest.approx(1.0)


def test_terminal_penalty(di_spec):
    tape = Tape()
    assert _value(penalty_terminal(di_spec, tape.constant([0.05, -0.05]))) == 0.0
    assert _value(penalty_terminal(di_spec, tape.constant([0.2, 0.0]))) == pytest.approx(0.1)

    open_spec = ProblemSpec(state_box=Box.symmetric(10, 2), input_box=Box.symmetric(1, 1), horizon=1)
    assert not penalty_terminal(open_spec, tape.constant(np.full((2, 4), 50.0))).value.any()


def test_batched_penalty_is_per_sample():
    tape = Tape()
    batch = tape.constant([[11.0, 0.0, 13.0], [0.0, 0.0, -14.0]])
    np.testing.assert_allclose(box_penalty(batch, Box.symmetric(10, 2)).value, [[1.0, 0.0, 5.0]])


def test_lyapunov_penalty():
    V = QuadraticLyapunov(2)
    tape = Tape()
    zero = tape.constant([0.0, 0.0])
    assert _value(penalty_lyapunov(V, zero, zero)) == 0.0
    # V 下降时罚为 0，上升时为上升量
    assert _value(penalty_lyapunov(V, tape.constant([0.5, 0.0]), tape.constant([1.0, 0.0]))) == 0.0
    assert _value(penalty_lyapunov(V, tape.constant([2.0, 0.0]), tape.constant([1.0, 0.0]))) == pytest.approx(3.0)
    with pytest.raises(DimensionError):
        penalty_lyapunov(V, tape.constant([1.0, 0.0]), tape.constant(np.zeros((2, 2))))


def test_nldpc_loss_zero_trajectory(di_spec):
    tape = Tape()
    states = [tape.constant(np.zeros((2, 3))) for _ in range(2)]
    controls = [tape.constant(np.zeros((1, 3)))]
    assert _value(nldpc_loss(di_spec, states, controls, QuadraticLyapunov(2))) == 0.0


def test_nldpc_loss_hand_composition(di_model, di_spec):
    # 零策略：u0 = 0，x1 = A x0 = [2.2, 1]
    graph = build_train_graph(zero_policy(), QuadraticLyapunov(2), di_model, di_spec, np.array([[1.0, 1.0]]))
    stage = 10.0
    lyapunov = 2.0 * ((2.2 ** 2 + 1.0) - 2.0)
    terminal = 1.0 * math.hypot(2.1, 0.9)
    assert graph.loss_value == pytest.approx(stage + lyapunov + terminal)


def test_nldpc_loss_averages_over_batch(di_model, di_spec):
    policy, V = zero_policy(), QuadraticLyapunov(2)
    single = build_train_graph(policy, V, di_model, di_spec, np.array([[1.0, 1.0]])).loss_value
    doubled = build_train_graph(policy, V, di_model, di_spec, np.array([[1.0, 1.0], [1.0, 1.0]])).loss_value
    assert doubled == pytest.approx(single)


def test_nldpc_loss_input_checks(di_spec):
    tape = Tape()
    with pytest.raises(DimensionError):
        nldpc_loss(di_spec, [tape.constant([0.0, 0.0])], [], QuadraticLyapunov(2))
    with pytest.raises(DimensionError):
        stage_loss(di_spec, tape.constant([0.0, 0.0, 0.0]), tape.constant([0.0]))


def test_problem_spec_weights():
    spec = ProblemSpec(state_box=Box.symmetric(1, 2), input_box=Box.symmetric(1, 1), horizon=2,
                       Q_x=[1.0, 2.0], Q_u=3.0)
    np.testing.assert_array_equal(spec.Q_x, np.diag([1.0, 2.0]))
    np.testing.assert_array_equal(spec.Q_u, [[3.0]])
    with pytest.raises(ConfigError):
        ProblemSpec(state_box=Box.symmetric(1, 2), input_box=Box.symmetric(1, 1), horizon=1,
                    Q_x=[[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(ConfigError):
        ProblemSpec(state_box=Box.symmetric(1, 2), input_box=Box.symmetric(1, 1), horizon=0)


@pytest.mark.parametrize("box", [Box.symmetric(10, 2), Box([-1.0, 0.0], [3.0, 0.5])])
def test_box_penalty_zero_inside_and_monotone_outside(box):
    rng = np.random.default_rng(21)
    tape = Tape()
    inside = rng.uniform(box.lower, box.upper, size=(500, 2)).T
    assert not box_penalty(tape.constant(inside), box).value.any()
    assert not box_penalty(tape.constant(np.column_stack([box.lower, box.upper])), box).value.any()

    for _ in range(20):
        direction = rng.normal(size=2)
        start = np.where(direction > 0, box.upper, box.lower)
        t = np.linspace(0.0, 5.0, 26)
        points = start[:, None] + direction[:, None] * t[None, :]
        values = box_penalty(tape.constant(points), box).value[0]
        assert values[0] == 0.0
        assert np.all(np.diff(values) > 0.0)


def test_lyapunov_penalty_grows_with_increase():
    V = QuadraticLyapunov(2)
    tape = Tape()
    x = tape.constant(np.ones((2, 1)))
    radii = np.linspace(0.0, 3.0, 31)
    values = [_value(penalty_lyapunov(V, tape.constant([r, r]), x)) for r in radii]
    assert all(v == 0.0 for r, v in zip(radii, values) if r <= 1.0)
    rising = [v for r, v in zip(radii, values) if r >= 1.0]
    assert np.all(np.diff(rising) > 0.0)


def test_terminal_state_cost_adds_final_state(di_model, di_spec):
    weighted = dataclasses.replace(di_spec, Q_xN=5.0)
    x0 = np.array([[1.0, 1.0]])
    plain = build_train_graph(zero_policy(), QuadraticLyapunov(2), di_model, di_spec, x0).loss_value
    with_terminal = build_train_graph(zero_policy(), QuadraticLyapunov(2), di_model, weighted, x0).loss_value
    # x1 = A x0 = [2.2, 1]
    assert with_terminal == pytest.approx(plain + 5.0 * (2.2 ** 2 + 1.0))


def test_single_step_state_cost_reaches_policy_only_through_final_state(di_model):
    base = ProblemSpec(state_box=Box.symmetric(10, 2), input_box=Box.symmetric(1, 1), horizon=1,
                       Q_x=5.0, Q_u=0.0, Q_V=0.0, Q_h=0.0, Q_g=0.0)
    x0 = np.array([[3.0, -2.0], [-1.0, 4.0]])
    policy = gain_policy([[0.2, 0.3]])

    graph = build_train_graph(policy, QuadraticLyapunov(2), di_model, base, x0)
    assert not backward(graph.tape, graph.loss)["policy.W0"].any()

    terminal = dataclasses.replace(base, Q_xN=5.0)
    graph = build_train_graph(policy, QuadraticLyapunov(2), di_model, terminal, x0)
    assert np.abs(backward(graph.tape, graph.loss)["policy.W0"]).max() > 1.0
