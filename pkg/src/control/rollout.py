"""
可微闭环展开与闭环仿真
作用：
1. build_train_graph：策略 → N 步动力学展开 → NLDPC 损失，整张图可对 θ、φ 求导
2. simulate_batch / simulate_closed_loop：滚动时域闭环仿真（只取第一个动作），纯数值
3. simulate_many：按固定分块在线程池里并行仿真，按下标顺序拼接
4. lyapunov_difference_field：二维切片上的 V(f(x, π(x))) − V(x)
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from core.all_types import Box, GridSpec, ProblemSpec, SimTrajectory
from core.autodiff import Tape, TapeNode, rows
from core.exceptions import DimensionError
from core.interfaces import SystemModel
from core.settings import CHUNK_SIZE, thread_count
from .neural import ParamNodes, ParameterizedNet, PolicyNet
from .objective import nldpc_loss

logger = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6
# 状态逃出约束盒这么多倍也按发散处理
ESCAPE_FACTOR = 100.0
DEFAULT_STEPS = 50


@dataclass
class TrainRollout:
    """
    一次前向展开的计算图
    states[k] / controls[k] 都是按列排列的批量节点；loss 为标量节点
    """
    tape: Tape
    x0: np.ndarray
    states: List[TapeNode]
    controls: List[TapeNode]
    loss: TapeNode
    policy_params: ParamNodes
    lyapunov_params: ParamNodes

    @property
    def loss_value(self) -> float:
        return float(self.loss.value[0, 0])

    def state_array(self) -> np.ndarray:
        """(m, N+1, n_x)"""
        return np.stack([node.value.T for node in self.states], axis=1)

    def control_array(self) -> np.ndarray:
        """(m, N, n_u)"""
        return np.stack([node.value.T for node in self.controls], axis=1)


def check_compatible(policy: PolicyNet, V: ParameterizedNet, model: SystemModel,
                     spec: Optional[ProblemSpec] = None) -> None:
    """在任何计算之前做维度一致性检查"""
    if policy.n_x != model.n_x or V.n_x != model.n_x:
        raise DimensionError(
            f"状态维度不一致: model n_x={model.n_x}, policy n_x={policy.n_x}, lyapunov n_x={V.n_x}"
        )
    if policy.n_u != model.n_u:
        raise DimensionError(f"输入维度不一致: model n_u={model.n_u}, policy n_u={policy.n_u}")
    if spec is not None:
        if spec.n_x != model.n_x or spec.n_u != model.n_u:
            raise DimensionError(f"ProblemSpec 维度 ({spec.n_x}, {spec.n_u}) 与模型 ({model.n_x}, {model.n_u}) 不一致")
        if spec.horizon != policy.horizon:
            raise DimensionError(f"预测时域不一致: spec N={spec.horizon}, policy N={policy.horizon}")


def _as_batch(X0, n_x: int, who: str) -> np.ndarray:
    X0 = np.atleast_2d(np.asarray(X0, dtype=np.float64))
    if X0.shape[1] != n_x:
        raise DimensionError(f"{who}: 初始状态应为 (m, {n_x})，收到 {X0.shape}")
    if X0.shape[0] < 1:
        raise DimensionError(f"{who}: 批量为空")
    return X0


def build_train_graph(policy: PolicyNet, V: ParameterizedNet, model: SystemModel, spec: ProblemSpec,
                      x0_batch, grad_enabled: bool = True) -> TrainRollout:
    """
    训练图：U = π_θ(x0) 给出整段控制序列，x_{k+1} = f(x_k, u_k) 开环展开 N 步
    grad_enabled=False 时参数按常量处理，用于验证集损失
    """
    check_compatible(policy, V, model, spec)
    X0 = _as_batch(x0_batch, model.n_x, "build_train_graph")

    tape = Tape(grad_enabled=grad_enabled)
    policy_params = policy.bind(tape) if grad_enabled else policy.constants(tape)
    lyapunov_params = V.bind(tape) if grad_enabled else V.constants(tape)

    x = tape.constant(X0.T)
    sequence = policy.forward(tape, x, policy_params)
    n_u = policy.n_u
    states = [x]
    controls = []
    for k in range(policy.horizon):
        u = rows(sequence, k * n_u, (k + 1) * n_u)
        controls.append(u)
        states.append(model.step(states[-1], u))

    loss = nldpc_loss(spec, states, controls, V, lyapunov_params)
    return TrainRollout(tape, X0, states, controls, loss, policy_params, lyapunov_params)


def evaluate_loss(policy: PolicyNet, V: ParameterizedNet, model: SystemModel, spec: ProblemSpec,
                  x0_batch) -> float:
    return build_train_graph(policy, V, model, spec, x0_batch, grad_enabled=False).loss_value


def divergence_limit(state_box: Box) -> float:
    """min(1e6, 100 × 约束盒最大边界)"""
    bound = float(np.max(np.abs(np.concatenate([state_box.lower, state_box.upper]))))
    if bound <= 0.0:
        return DIVERGENCE_LIMIT
    return min(DIVERGENCE_LIMIT, ESCAPE_FACTOR * bound)


def _first_actions(policy: PolicyNet, X: np.ndarray) -> np.ndarray:
    """X 为 (n_x, m)，返回 (n_u, m)"""
    return policy.evaluate(X)[: policy.n_u]


def simulate_batch(policy: PolicyNet, V: ParameterizedNet, model: SystemModel, X0, T: int = DEFAULT_STEPS,
                   spec: Optional[ProblemSpec] = None) -> List[SimTrajectory]:
    """
    滚动时域闭环仿真，一次处理一批初始状态（每列一个）
    ‖x‖∞ 超过 divergence_limit 的列在该步截断并标记 diverged，之后冻结为 0 不再参与计算
    """
    if T < 1:
        raise ValueError(f"仿真步数 T 必须 ≥ 1，收到 {T}")
    check_compatible(policy, V, model)
    X0 = _as_batch(X0, model.n_x, "simulate_batch")
    m = X0.shape[0]
    limit = divergence_limit(model.state_box)

    states = np.zeros((T + 1, model.n_x, m))
    controls = np.zeros((T, model.n_u, m))
    states[0] = X0.T
    length = np.full(m, T)
    diverged = np.zeros(m, dtype=bool)

    for k in range(T):
        active = ~diverged
        if not active.any():
            break
        x = states[k][:, active]
        u = _first_actions(policy, x)
        x_next = model.step_numeric(x, u)
        controls[k][:, active] = u
        states[k + 1][:, active] = x_next

        blown = np.max(np.abs(x_next), axis=0) > limit
        if blown.any():
            indices = np.flatnonzero(active)[blown]
            diverged[indices] = True
            length[indices] = k + 1
            logger.debug("第 %d 步有 %d 条轨迹发散", k + 1, int(blown.sum()))

    Q_x = spec.Q_x if spec is not None else np.eye(model.n_x)
    Q_u = spec.Q_u if spec is not None else np.eye(model.n_u)
    terminal_box = spec.terminal_box if spec is not None else None

    trajectories = []
    for i in range(m):
        steps = int(length[i])
        xs = states[: steps + 1, :, i]
        us = controls[:steps, :, i]
        values = V.evaluate(xs.T)[0]
        stage = np.einsum("ki,ij,kj->k", xs[:steps], Q_x, xs[:steps]) + np.einsum("ki,ij,kj->k", us, Q_u, us)
        trajectories.append(SimTrajectory(
            states=xs.copy(),
            controls=us.copy(),
            lyapunov=values,
            stage_losses=stage,
            state_violations=~model.state_box.contains(xs),
            input_violations=~model.input_box.contains(us),
            lyapunov_increase=np.diff(values) >= 0.0,
            terminal_violation=None if terminal_box is None else bool(not terminal_box.contains(xs[-1])),
            diverged=bool(diverged[i]),
        ))
    return trajectories


def simulate_closed_loop(policy: PolicyNet, V: ParameterizedNet, model: SystemModel, x0,
                         T: int = DEFAULT_STEPS, spec: Optional[ProblemSpec] = None) -> SimTrajectory:
    x0 = np.asarray(x0, dtype=np.float64).reshape(1, -1)
    return simulate_batch(policy, V, model, x0, T, spec)[0]


def simulate_many(policy: PolicyNet, V: ParameterizedNet, model: SystemModel, X0, T: int = DEFAULT_STEPS,
                  spec: Optional[ProblemSpec] = None, threads: Optional[int] = None) -> List[SimTrajectory]:
    """按 CHUNK_SIZE 分块，在线程池中仿真，结果按下标顺序拼接"""
    X0 = _as_batch(X0, model.n_x, "simulate_many")
    chunks = [X0[start:start + CHUNK_SIZE] for start in range(0, X0.shape[0], CHUNK_SIZE)]
    workers = min(threads or thread_count(), len(chunks))
    if workers <= 1:
        results = [simulate_batch(policy, V, model, chunk, T, spec) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda chunk: simulate_batch(policy, V, model, chunk, T, spec), chunks))
    return [trajectory for chunk in results for trajectory in chunk]


def closed_loop_step(policy: PolicyNet, model: SystemModel, X: np.ndarray) -> np.ndarray:
    """X 为 (n_x, m)，返回一步闭环后的 (n_x, m)"""
    return model.step_numeric(X, _first_actions(policy, X))


def lyapunov_difference_field(V: ParameterizedNet, policy: PolicyNet, model: SystemModel,
                              grid: GridSpec) -> np.ndarray:
    """返回 (r_i, r_j) 矩阵，元素为 V(f(x, π(x))) − V(x)；负值表示该点满足下降条件"""
    check_compatible(policy, V, model)
    if grid.fixed.size != model.n_x:
        raise DimensionError(f"网格维度 {grid.fixed.size} 与模型 n_x={model.n_x} 不一致")
    X = grid.points().T
    X_next = closed_loop_step(policy, model, X)
    difference = V.evaluate(X_next)[0] - V.evaluate(X)[0]
    return difference.reshape(grid.resolution)


def default_slice_grid(state_box: Box, resolution: int = 101) -> GridSpec:
    """二维系统用 (x1, x2)；更高维（PVTOL）用速度切片 (ẋ, ẏ)，其余维度固定为 0"""
    n_x = state_box.dim
    dims = (0, 1) if n_x == 2 else (3, 4)
    ranges = tuple((float(state_box.lower[d]), float(state_box.upper[d])) for d in dims)
    return GridSpec(dims=dims, ranges=ranges, resolution=(resolution, resolution), fixed=np.zeros(n_x))


def trajectory_summary(trajectories: List[SimTrajectory], tolerance: float = 0.1) -> Dict[str, float]:
    """
    converged: 终态 ‖x‖∞ ≤ tolerance 且输入不越界的比例
    contracted: 终态 ‖x_T‖₂ < ‖x_0‖₂ / 2 且输入不越界的比例
    diverged: 触发发散判据的比例
    """
    if not trajectories:
        return {"converged": 0.0, "contracted": 0.0, "diverged": 0.0}
    admissible = [not t.diverged and not t.input_violations.any() for t in trajectories]
    converged = [
        ok and np.max(np.abs(t.states[-1])) <= tolerance for ok, t in zip(admissible, trajectories)
    ]
    contracted = [
        ok and np.linalg.norm(t.states[-1]) < 0.5 * np.linalg.norm(t.states[0])
        for ok, t in zip(admissible, trajectories)
    ]
    return {
        "converged": float(np.mean(converged)),
        "contracted": float(np.mean(contracted)),
        "diverged": float(np.mean([t.diverged for t in trajectories])),
    }
