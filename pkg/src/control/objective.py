"""
NLDPC 目标函数
作用：
1. stage_loss：阶段代价 ‖x‖²_Qx + ‖u‖²_Qu
2. penalty_state / penalty_input / penalty_terminal：盒约束软罚 ‖ReLU(h(x))‖₂
3. penalty_lyapunov：Lyapunov 下降软罚 ‖ReLU(V(x⁺) − V(x))‖₂
4. nldpc_loss：批量、时域平均后的总损失（一个标量节点，直接喂给 backward）

所有函数都接受按列排列的批量节点 (n, m)，逐样本结果为 1 × m 的行。
"""
from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np

from core.all_types import Box, ProblemSpec
from core.autodiff import TapeNode, add_column, concat_rows, l2norm, relu, sum_all, weighted_sqnorm
from core.exceptions import DimensionError
from .neural import ParamNodes, ParameterizedNet

logger = logging.getLogger(__name__)


def _check_rows(node: TapeNode, expected: int, who: str) -> None:
    if node.rows != expected:
        raise DimensionError(f"{who}: 期望 {expected} 行，收到形状 {node.shape}")


def box_penalty(x: TapeNode, box: Box) -> TapeNode:
    """h(x) = [x − upper; lower − x]，返回每列的 ‖ReLU(h(x))‖₂"""
    _check_rows(x, box.dim, "box_penalty")
    tape = x.tape
    upper = tape.constant(box.upper)
    lower = tape.constant(box.lower)
    above = add_column(x, -upper)
    below = add_column(-x, lower)
    return l2norm(relu(concat_rows([above, below])))


def stage_loss(spec: ProblemSpec, x: TapeNode, u: TapeNode) -> TapeNode:
    _check_rows(x, spec.n_x, "stage_loss")
    _check_rows(u, spec.n_u, "stage_loss")
    if x.cols != u.cols:
        raise DimensionError(f"stage_loss: x {x.shape} 与 u {u.shape} 的样本数不一致")
    return weighted_sqnorm(x, spec.Q_x) + weighted_sqnorm(u, spec.Q_u)


def penalty_state(spec: ProblemSpec, x: TapeNode) -> TapeNode:
    return box_penalty(x, spec.state_box)


def penalty_input(spec: ProblemSpec, u: TapeNode) -> TapeNode:
    return box_penalty(u, spec.input_box)


def penalty_terminal(spec: ProblemSpec, x_final: TapeNode) -> TapeNode:
    """未配置终端集时恒为 0"""
    if spec.terminal_box is None:
        return x_final.tape.constant(np.zeros((1, x_final.cols)))
    return box_penalty(x_final, spec.terminal_box)


def penalty_lyapunov(V: ParameterizedNet, x_next: TapeNode, x: TapeNode,
                     params: Optional[ParamNodes] = None) -> TapeNode:
    if x_next.shape != x.shape:
        raise DimensionError(f"penalty_lyapunov: x_next {x_next.shape} 与 x {x.shape} 形状不一致")
    tape = x.tape
    increase = V.forward(tape, x_next, params) - V.forward(tape, x, params)
    # 1×m 的行逐列取范数，即 |ReLU(ΔV)|
    return l2norm(relu(increase))


def nldpc_loss(spec: ProblemSpec, states: Sequence[TapeNode], controls: Sequence[TapeNode],
               V: ParameterizedNet, params: Optional[ParamNodes] = None) -> TapeNode:
    """
    L = 1/(mN) Σ_i Σ_k [ℓ(x_k, u_k) + Q_V p_V(x_{k+1}, x_k) + Q_h p_x(x_k) + Q_g p_u(u_k)]
        + Q_Xf/m Σ_i p_term(x_N) + 1/m Σ_i x_Nᵀ Q_xN x_N

    阶段代价只含 k = 0..N−1；N=1 时 x_0 与策略无关，Q_xN 让 x_N 进入状态代价

    参数:
        states: N+1 个 (n_x, m) 节点，states[0] 为初始状态批量
        controls: N 个 (n_u, m) 节点
        params: V 的参数节点（训练时由 bind 得到）；为 None 时按常量处理
    """
    if not controls:
        raise DimensionError("nldpc_loss: 控制序列为空")
    if len(states) != len(controls) + 1:
        raise DimensionError(f"nldpc_loss: 状态数 {len(states)} 应等于控制数 {len(controls)} + 1")
    m = states[0].cols
    if m < 1:
        raise DimensionError("nldpc_loss: 批量为空")
    horizon = len(controls)

    total: Optional[TapeNode] = None
    for k, u in enumerate(controls):
        x, x_next = states[k], states[k + 1]
        term = stage_loss(spec, x, u)
        if spec.Q_V:
            term = term + penalty_lyapunov(V, x_next, x, params) * spec.Q_V
        if spec.Q_h:
            term = term + penalty_state(spec, x) * spec.Q_h
        if spec.Q_g:
            term = term + penalty_input(spec, u) * spec.Q_g
        total = term if total is None else total + term

    loss = sum_all(total) * (1.0 / (m * horizon))
    if spec.Q_Xf and spec.terminal_box is not None:
        loss = loss + sum_all(penalty_terminal(spec, states[-1])) * (spec.Q_Xf / m)
    if np.any(spec.Q_xN):
        loss = loss + sum_all(weighted_sqnorm(states[-1], spec.Q_xN)) * (1.0 / m)
    return loss

