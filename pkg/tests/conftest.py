import json

import numpy as np
import pytest

from core import Box, ProblemSpec
from control.dynamics import double_integrator
from control.neural import LyapunovNet, PolicyNet, QuadraticLyapunov


def zero_policy(n_x=2, n_u=1, horizon=1, hidden=(4,)):
    policy = PolicyNet([n_x, *hidden, horizon * n_u], horizon=horizon, n_u=n_u, seed=0)
    for value in policy.params.values():
        value[...] = 0.0
    return policy


def jensen_gap(icnn, rng, count=10_000, bound=10.0):
    """g(λa + (1−λ)b) − [λg(a) + (1−λ)g(b)]，凸函数应处处 ≤ 0"""
    a = rng.uniform(-bound, bound, size=(icnn.n_x, count))
    b = rng.uniform(-bound, bound, size=(icnn.n_x, count))
    lam = rng.uniform(0, 1, size=count)
    mid = lam * a + (1 - lam) * b
    return icnn.evaluate(mid)[0] - (lam * icnn.evaluate(a)[0] + (1 - lam) * icnn.evaluate(b)[0])


def gain_policy(K):
    """u = −Kx，单层线性策略"""
    K = np.atleast_2d(np.asarray(K, dtype=np.float64))
    n_u, n_x = K.shape
    return PolicyNet([n_x, n_u], horizon=1, n_u=n_u,
                     params={"policy.W0": -K, "policy.b0": np.zeros((n_u, 1))})


@pytest.fixture
def di_model():
    return double_integrator()


@pytest.fixture
def di_spec():
    return ProblemSpec(
        state_box=Box.symmetric(10.0, 2),
        input_box=Box.symmetric(1.0, 1),
        horizon=1,
        Q_x=5.0, Q_u=0.5, Q_V=2.0, Q_h=10.0, Q_g=100.0, Q_Xf=1.0,
        terminal_box=Box.symmetric(0.1, 2),
    )


@pytest.fixture
def small_policy():
    return PolicyNet([2, 8, 8, 1], horizon=1, n_u=1, seed=3)


@pytest.fixture
def small_lyapunov():
    return LyapunovNet.build(2, [8, 8], epsilon=0.01, beta=5.0, smooth_d=0.1, seed=4)


@pytest.fixture
def quadratic():
    return QuadraticLyapunov(2)


@pytest.fixture
def tiny_config_dict():
    """双积分器，小网络、少量样本，几秒内跑完"""
    return {
        "system": {
            "type": "lti",
            "A": [[1.2, 1.0], [0.0, 1.0]],
            "B": [[1.0], [0.5]],
            "state_box": {"lower": [-10.0, -10.0], "upper": [10.0, 10.0]},
            "input_box": {"lower": [-1.0], "upper": [1.0]},
        },
        "policy": {"hidden": [6, 6]},
        "lyapunov": {"kind": "icnn", "hidden": [6, 6]},
        "problem": {
            "N": 1, "Qx": 5.0, "Qu": 0.5, "QV": 2.0, "Qh": 10.0, "Qg": 100.0, "QXf": 1.0,
            "terminal_box": {"lower": [-0.1, -0.1], "upper": [0.1, 0.1]},
        },
        "training": {"epochs": 2, "batch_size": 20, "n_train": 40, "n_val": 20, "n_test": 10},
        "verification": {"samples": 30, "delta": 0.01, "steps": 10},
        "seed": 7,
    }


@pytest.fixture
def tiny_config_path(tmp_path, tiny_config_dict):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_config_dict), encoding="utf-8")
    return path
