"""
反向模式自动微分模块
作用：在 64 位浮点稠密矩阵上构建计算图（tape），对 NLDPC 损失关于策略参数 θ 和
      Lyapunov 参数 φ 求梯度。

约定：
1. DenseMatrix 就是二维 float64 的 numpy 数组，行优先存储
2. 一个节点可以装一批列向量（n × m，每列一个样本）；按列的范数类算子返回 1 × m
3. 每个训练步重新构建 tape（define-by-run）
4. 任何算子产生 NaN/Inf 都视为错误状态，立即抛出 NumericError
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DimensionError, NumericError

logger = logging.getLogger(__name__)

DenseMatrix = np.ndarray

VjpFn = Callable[[np.ndarray], Tuple[np.ndarray, ...]]

NORM_GUARD = 1e-12


def as_matrix(value) -> DenseMatrix:
    """把标量 / 一维 / 二维输入统一成二维 float64 矩阵（一维视为列向量）"""
    array = np.array(value, dtype=np.float64)
    if array.ndim == 0:
        return array.reshape(1, 1)
    if array.ndim == 1:
        return array.reshape(-1, 1)
    if array.ndim != 2:
        raise DimensionError(f"DenseMatrix 只支持二维，收到形状 {array.shape}")
    return array


@dataclass(eq=False)
class TapeNode:
    """计算图中的一个节点：保存前向值、伴随量以及回传函数"""
    id: int
    op: str
    parents: Tuple[int, ...]
    value: DenseMatrix
    adjoint: DenseMatrix
    tape: "Tape" = field(repr=False)
    vjp: Optional[VjpFn] = field(default=None, repr=False)
    name: Optional[str] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    def __add__(self, other: "TapeNode") -> "TapeNode":
        return add(self, other)

    def __sub__(self, other: "TapeNode") -> "TapeNode":
        return sub(self, other)

    def __matmul__(self, other: "TapeNode") -> "TapeNode":
        return matmul(self, other)

    def __mul__(self, c: float) -> "TapeNode":
        return scale(self, c)

    __rmul__ = __mul__

    def __neg__(self) -> "TapeNode":
        return scale(self, -1.0)


class Tape:
    """
    计算图记录器

    作用：
    1. 按拓扑顺序保存所有节点（父节点一定在子节点之前）
    2. 维护可训练参数叶子节点的注册表（名称 -> 节点 id）
    3. grad_enabled=False 时只做前向求值，不保留节点，也不允许 backward
    """

    def __init__(self, grad_enabled: bool = True):
        self.grad_enabled = grad_enabled
        self.nodes: List[TapeNode] = []
        self.parameters: Dict[str, int] = {}
        self._next_id = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def constant(self, value, name: Optional[str] = None) -> TapeNode:
        """常量叶子节点，不会出现在梯度结果里"""
        return self._record("leaf", (), as_matrix(value), None, name=name)

    def parameter(self, name: str, value) -> TapeNode:
        """可训练叶子节点；同一个 tape 上名称必须唯一"""
        if name in self.parameters:
            raise ValueError(f"参数名 '{name}' 已在当前 tape 上注册")
        node = self._record("param", (), as_matrix(value), None, name=name)
        self.parameters[name] = node.id
        return node

    def _record(self, op: str, parents: Sequence[TapeNode], value: np.ndarray,
                vjp: Optional[VjpFn], name: Optional[str] = None) -> TapeNode:
        node_id = self._next_id
        self._next_id += 1
        if not np.all(np.isfinite(value)):
            raise NumericError(f"前向计算出现非有限值: 节点 {node_id} (op={op})")
        node = TapeNode(
            id=node_id,
            op=op,
            parents=tuple(p.id for p in parents),
            value=value,
            adjoint=np.zeros_like(value),
            tape=self,
            vjp=vjp if self.grad_enabled else None,
            name=name,
        )
        if self.grad_enabled:
            self.nodes.append(node)
        return node


def _same_tape(*nodes: TapeNode) -> Tape:
    tape = nodes[0].tape
    for node in nodes[1:]:
        if node.tape is not tape:
            raise ValueError("算子的输入节点不属于同一个 tape")
    return tape


def _require_same_shape(op: str, a: TapeNode, b: TapeNode) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: 形状不一致 {a.shape} vs {b.shape}")


# ----------------------------------------------------------------------------
# 算子
# ----------------------------------------------------------------------------

def matmul(a: TapeNode, b: TapeNode) -> TapeNode:
    tape = _same_tape(a, b)
    if a.cols != b.rows:
        raise DimensionError(f"matmul: 形状不匹配 {a.shape} x {b.shape}")
    av, bv = a.value, b.value

    def vjp(g):
        return g @ bv.T, av.T @ g

    return tape._record("matmul", (a, b), av @ bv, vjp)


def add(a: TapeNode, b: TapeNode) -> TapeNode:
    tape = _same_tape(a, b)
    _require_same_shape("add", a, b)
    return tape._record("add", (a, b), a.value + b.value, lambda g: (g, g))


def sub(a: TapeNode, b: TapeNode) -> TapeNode:
    tape = _same_tape(a, b)
    _require_same_shape("sub", a, b)
    return tape._record("sub", (a, b), a.value - b.value, lambda g: (g, -g))


def scale(a: TapeNode, c: float) -> TapeNode:
    c = float(c)
    return a.tape._record("scale", (a,), c * a.value, lambda g: (c * g,))


def add_column(a: TapeNode, b: TapeNode) -> TapeNode:
    """a (n×m) 的每一列都加上列向量 b (n×1)，用于偏置和按批平移"""
    tape = _same_tape(a, b)
    if b.shape != (a.rows, 1):
        raise DimensionError(f"add_column: 需要 ({a.rows}, 1) 的列向量，收到 {b.shape}")

    def vjp(g):
        return g, g.sum(axis=1, keepdims=True)

    return tape._record("add_column", (a, b), a.value + b.value, vjp)


def rows(a: TapeNode, start: int, stop: int) -> TapeNode:
    if not 0 <= start < stop <= a.rows:
        raise DimensionError(f"rows: 切片 [{start}:{stop}] 超出 {a.shape}")
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape)
        full[start:stop] = g
        return (full,)

    return a.tape._record("rows", (a,), a.value[start:stop].copy(), vjp)


def concat_rows(nodes: Sequence[TapeNode]) -> TapeNode:
    if not nodes:
        raise ValueError("concat_rows: 输入为空")
    tape = _same_tape(*nodes)
    cols = nodes[0].cols
    for node in nodes:
        if node.cols != cols:
            raise DimensionError(f"concat_rows: 列数不一致 {node.shape} vs (*, {cols})")
    splits = np.cumsum([n.rows for n in nodes])[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=0))

    return tape._record("concat_rows", tuple(nodes), np.vstack([n.value for n in nodes]), vjp)


def relu(a: TapeNode) -> TapeNode:
    # 0 处的次梯度取 0
    gate = (a.value > 0.0).astype(np.float64)
    return a.tape._record("relu", (a,), a.value * gate, lambda g: (g * gate,))


def softplus(a: TapeNode, beta: float = 5.0) -> TapeNode:
    """(1/β)·ln(1+exp(βx))，用 logaddexp 保证大 |βx| 时不溢出；导数为 logistic(βx)"""
    if beta <= 0:
        raise ValueError(f"softplus: beta 必须为正，收到 {beta}")
    z = beta * a.value
    value = np.logaddexp(0.0, z) / beta
    slope = 0.5 * (1.0 + np.tanh(0.5 * z))
    return a.tape._record("softplus", (a,), value, lambda g: (g * slope,))


def smooth_relu(a: TapeNode, d: float = 0.1) -> TapeNode:
    """
    平滑 ReLU：x≤0 时为 0，0<x<d 时为 x²/(2d)，x≥d 时为 x−d/2
    凸、单调不减、C¹、σ(0)=0 且非负
    """
    if d <= 0:
        raise ValueError(f"smooth_relu: d 必须为正，收到 {d}")
    x = a.value
    positive = x > 0.0
    quadratic = positive & (x < d)
    value = np.where(quadratic, x * x / (2.0 * d), np.where(positive, x - 0.5 * d, 0.0))
    slope = np.where(quadratic, x / d, np.where(positive, 1.0, 0.0))
    return a.tape._record("smooth_relu", (a,), value, lambda g: (g * slope,))


def weighted_sqnorm(a: TapeNode, Q) -> TapeNode:
    """每列计算 aᵀQa，返回 1×m；Q 需半正定对称"""
    Q = as_matrix(Q)
    if Q.shape != (a.rows, a.rows):
        raise DimensionError(f"weighted_sqnorm: Q 形状 {Q.shape} 与输入 {a.shape} 不匹配")
    av = a.value
    Qa = Q @ av
    sym = Q + Q.T

    def vjp(g):
        return ((sym @ av) * g,)

    return a.tape._record("weighted_sqnorm", (a,), np.sum(av * Qa, axis=0, keepdims=True), vjp)


def l2norm(a: TapeNode) -> TapeNode:
    """每列的欧氏范数，返回 1×m；范数小于 1e-12 的列梯度取 0"""
    av = a.value
    norm = np.sqrt(np.sum(av * av, axis=0, keepdims=True))
    active = norm >= NORM_GUARD
    safe = np.where(active, norm, 1.0)

    def vjp(g):
        return (av / safe * (g * active),)

    return a.tape._record("l2norm", (a,), norm, vjp)


def sum_all(a: TapeNode) -> TapeNode:
    ones = np.ones_like(a.value)
    return a.tape._record("sum", (a,), np.array([[a.value.sum()]]), lambda g: (ones * g[0, 0],))


def mean(nodes: Sequence[TapeNode]) -> TapeNode:
    """标量节点的算术平均"""
    if not nodes:
        raise ValueError("mean: 节点列表为空")
    tape = _same_tape(*nodes)
    for node in nodes:
        if node.shape != (1, 1):
            raise DimensionError(f"mean: 只接受标量节点，收到 {node.shape}")
    count = len(nodes)
    value = np.array([[sum(n.value[0, 0] for n in nodes) / count]])

    def vjp(g):
        return tuple(g / count for _ in range(count))

    return tape._record("mean", tuple(nodes), value, vjp)


# ----------------------------------------------------------------------------
# 反向传播与梯度检查
# ----------------------------------------------------------------------------

def backward(tape: Tape, loss: TapeNode) -> Dict[str, DenseMatrix]:
    """
    从标量损失节点做一次逆拓扑序扫描，返回 {参数名: 梯度}（按注册顺序）
    """
    if not tape.grad_enabled:
        raise RuntimeError("grad_enabled=False 的 tape 不能做 backward")
    if loss.tape is not tape:
        raise ValueError("损失节点不属于该 tape")
    if loss.shape != (1, 1):
        raise DimensionError(f"backward: 损失必须是标量，收到形状 {loss.shape}")

    for node in tape.nodes:
        node.adjoint = np.zeros_like(node.value)
    loss.adjoint = np.ones((1, 1))

    for node in reversed(tape.nodes[: loss.id + 1]):
        if node.vjp is None or not node.parents:
            continue
        if not node.adjoint.any():
            continue
        contributions = node.vjp(node.adjoint)
        for parent_id, grad in zip(node.parents, contributions):
            parent = tape.nodes[parent_id]
            parent.adjoint = parent.adjoint + grad
            if not np.all(np.isfinite(parent.adjoint)):
                raise NumericError(
                    f"反向传播出现非有限伴随量: 节点 {parent_id} (op={parent.op})，来自节点 {node.id} (op={node.op})"
                )

    return {name: tape.nodes[node_id].adjoint.copy() for name, node_id in tape.parameters.items()}


TapeBuilder = Callable[[Tape, Dict[str, TapeNode]], TapeNode]


def evaluate(f: TapeBuilder, leaves: Dict[str, DenseMatrix]) -> float:
    """只做前向求值的便捷函数"""
    tape = Tape(grad_enabled=False)
    nodes = {name: tape.constant(value, name=name) for name, value in leaves.items()}
    return float(f(tape, nodes).value[0, 0])


def gradient(f: TapeBuilder, leaves: Dict[str, DenseMatrix]) -> Tuple[float, Dict[str, DenseMatrix]]:
    tape = Tape()
    nodes = {name: tape.parameter(name, value) for name, value in leaves.items()}
    loss = f(tape, nodes)
    return float(loss.value[0, 0]), backward(tape, loss)


def grad_check(f: TapeBuilder, x: Dict[str, DenseMatrix], h: float = 1e-5) -> float:
    """
    用中心差分 (f(x+h)−f(x−h))/2h 逐坐标对比 backward 的结果，返回最大相对误差
    相对误差的分母取 max(|解析|, |数值|, 1)
    """
    if h <= 0:
        raise ValueError(f"grad_check: h 必须为正，收到 {h}")
    leaves = {name: as_matrix(value) for name, value in x.items()}
    _, analytic = gradient(f, leaves)

    worst = 0.0
    for name, value in leaves.items():
        for index in np.ndindex(value.shape):
            plus = {k: v.copy() for k, v in leaves.items()}
            minus = {k: v.copy() for k, v in leaves.items()}
            plus[name][index] += h
            minus[name][index] -= h
            numeric = (evaluate(f, plus) - evaluate(f, minus)) / (2.0 * h)
            exact = analytic[name][index]
            error = abs(exact - numeric) / max(abs(exact), abs(numeric), 1.0)
            worst = max(worst, error)
    logger.debug("grad_check 完成，最大相对误差 %.3e", worst)
    return worst

