"""
离散时间系统模型
作用：
1. LtiSystem：x⁺ = A x + B u
2. double_integrator()：不稳定双积分器（谱半径 1.2）
3. pvtol()：平面垂直起降飞行器，悬停点线性化后用前向欧拉离散（dt = 0.2 s）
4. rollout_open_loop()：给定控制序列的开环展开
"""
from __future__ import annotations

import logging
from typing import Any, Dict, Optional

import numpy as np

from core.all_types import Box, PvtolParams
from core.autodiff import Tape, TapeNode, as_matrix, matmul
from core.exceptions import ConfigError, DimensionError
from core.interfaces import SystemModel

logger = logging.getLogger(__name__)


class LtiSystem(SystemModel):
    """线性时不变系统，step(x, u) = A x + B u（严格成立）"""

    def __init__(self, A, B, state_box: Box, input_box: Box):
        A, B = as_matrix(A), as_matrix(B)
        n_x = A.shape[0]
        if A.shape != (n_x, n_x):
            raise DimensionError(f"A 必须为方阵，收到 {A.shape}")
        if B.shape[0] != n_x:
            raise DimensionError(f"B 的行数应为 {n_x}，收到 {B.shape}")
        super().__init__(n_x, B.shape[1], state_box, input_box)
        self.A = A
        self.B = B

    def step(self, x: TapeNode, u: TapeNode) -> TapeNode:
        self.check_dims(x, u)
        tape = x.tape
        return matmul(tape.constant(self.A), x) + matmul(tape.constant(self.B), u)

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def describe(self) -> Dict[str, Any]:
        return {
            "type": "lti",
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "state_box": self.state_box.to_dict(),
            "input_box": self.input_box.to_dict(),
        }


class PvtolModel(LtiSystem):
    """
    PVTOL 飞行器，状态 (x, y, θ, ẋ, ẏ, θ̇)，输入 (F1, F2) 为相对悬停推力的偏差
    连续模型在 θ=0、F2=mg 处线性化：
        ẍ = −g θ − (c/m) ẋ + F1/m
        ÿ = −(c/m) ẏ + F2/m
        θ̈ = (r/J) F1
    然后 A = I + dt·Ac，B = dt·Bc
    """

    def __init__(self, params: PvtolParams, state_box: Box, input_box: Box):
        self.params = params
        A, B = self.linearize(params)
        super().__init__(A, B, state_box, input_box)

    @staticmethod
    def linearize(params: PvtolParams):
        m, J, r, g, c, dt = (params.mass, params.inertia, params.arm,
                             params.gravity, params.damping, params.dt)
        Ac = np.zeros((6, 6))
        Ac[0, 3] = Ac[1, 4] = Ac[2, 5] = 1.0
        Ac[3, 2] = -g
        Ac[3, 3] = -c / m
        Ac[4, 4] = -c / m
        Bc = np.zeros((6, 2))
        Bc[3, 0] = 1.0 / m
        Bc[4, 1] = 1.0 / m
        Bc[5, 0] = r / J
        return np.eye(6) + dt * Ac, dt * Bc

    def describe(self) -> Dict[str, Any]:
        return {
            "type": "pvtol",
            "params": {
                "mass": self.params.mass,
                "inertia": self.params.inertia,
                "arm": self.params.arm,
                "gravity": self.params.gravity,
                "damping": self.params.damping,
            },
            "dt": self.params.dt,
            "state_box": self.state_box.to_dict(),
            "input_box": self.input_box.to_dict(),
        }


def double_integrator(state_bound: float = 10.0, input_bound: float = 1.0) -> LtiSystem:
    A = [[1.2, 1.0], [0.0, 1.0]]
    B = [[1.0], [0.5]]
    return LtiSystem(A, B, Box.symmetric(state_bound, 2), Box.symmetric(input_bound, 1))


def pvtol(params: Optional[PvtolParams] = None, state_bound: float = 5.0,
          input_bound: float = 5.0) -> PvtolModel:
    return PvtolModel(params or PvtolParams(), Box.symmetric(state_bound, 6), Box.symmetric(input_bound, 2))


def model_from_description(description: Dict[str, Any]) -> SystemModel:
    """按配置文件 system 段构建模型：{type: "lti"|"pvtol", ...}"""
    kind = description.get("type")
    state_box = Box(**description["state_box"])
    input_box = Box(**description["input_box"])
    if kind == "lti":
        return LtiSystem(description["A"], description["B"], state_box, input_box)
    if kind == "pvtol":
        params = dict(description.get("params") or {})
        # 顶层 dt 优先于 params.dt
        dt = description.get("dt", params.pop("dt", 0.2))
        try:
            params = PvtolParams(**params, dt=dt)
        except TypeError as e:
            raise ConfigError(f"PVTOL 参数无效: {e}") from e
        return PvtolModel(params, state_box, input_box)
    raise ConfigError(f"未知的模型类型: {kind}")


def step(model: SystemModel, x: TapeNode, u: TapeNode) -> TapeNode:
    return model.step(x, u)


def rollout_open_loop(model: SystemModel, x0, U) -> np.ndarray:
    """x_{k+1} = f(x_k, u_k)；返回包含 x0 在内的 (N+1, n_x) 轨迹"""
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    U = np.asarray(U, dtype=np.float64).reshape(-1, model.n_u) if np.size(U) else np.zeros((0, model.n_u))
    if x0.size != model.n_x:
        raise DimensionError(f"rollout_open_loop: x0 维度应为 {model.n_x}，收到 {x0.size}")
    tape = Tape(grad_enabled=False)
    x = tape.constant(x0)
    trajectory = [x.value[:, 0]]
    for u_k in U:
        x = model.step(x, tape.constant(u_k))
        trajectory.append(x.value[:, 0])
    return np.vstack(trajectory)
