"""
神经网络参数容器与前向计算
作用：
1. PolicyNet：显式预测控制策略 U = π_θ(x0)，输出整个 N 步控制序列
2. IcnnNet：输入凸神经网络 g(x)，隐层到隐层的权重经 softplus 重参数化保证非负
3. LyapunovNet：V(x) = σ(g(x) − g(0)) + ε‖x‖²，正定且 V(0)=0
4. QuadraticLyapunov：V(x) = xᵀPx，作为对比基线

所有网络都把参数放在 params 字典里（名称 -> numpy 数组），训练时通过 bind()
注册到 tape 上；优化器原地更新这些数组。
"""
from __future__ import annotations

import copy
import logging
import math
from typing import Dict, Optional, Sequence

import numpy as np

from core.autodiff import (
    DenseMatrix,
    Tape,
    TapeNode,
    add_column,
    as_matrix,
    matmul,
    relu,
    scale,
    smooth_relu,
    softplus,
    weighted_sqnorm,
)
from core.exceptions import ConfigError, DimensionError

logger = logging.getLogger(__name__)

ParamNodes = Dict[str, TapeNode]

# U_i 的重参数化：U_i = softplus(Û_i)，用 β=1
REPARAM_BETA = 1.0
SUPPORTED_ACTIVATIONS = ("relu", "softplus")


def init_params(widths: Sequence[int], seed: int, scheme: str = "uniform_fan_in",
                prefix: str = "") -> Dict[str, DenseMatrix]:
    """
    全连接层参数初始化
    权重 ~ Uniform(−a, a)，a = sqrt(6 / fan_in)；偏置为 0（列向量）
    """
    if scheme != "uniform_fan_in":
        raise ConfigError(f"不支持的初始化方案: {scheme}")
    _check_widths(widths)
    rng = np.random.default_rng(seed)
    params: Dict[str, DenseMatrix] = {}
    for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        bound = math.sqrt(6.0 / fan_in)
        params[f"{prefix}W{layer}"] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        params[f"{prefix}b{layer}"] = np.zeros((fan_out, 1))
    return params


def _check_widths(widths: Sequence[int]) -> None:
    if len(widths) < 2:
        raise ConfigError(f"至少需要输入和输出两层宽度，收到 {list(widths)}")
    for width in widths:
        if int(width) <= 0:
            raise ConfigError(f"层宽度必须为正，收到 {list(widths)}")


def _check_input(x: TapeNode, n_x: int, who: str) -> None:
    if x.rows != n_x:
        raise DimensionError(f"{who}: 输入维度应为 {n_x}，收到形状 {x.shape}")


def _activate(node: TapeNode, activation: str, beta: float) -> TapeNode:
    if activation == "relu":
        return relu(node)
    return softplus(node, beta)


class ParameterizedNet:
    """参数容器基类：保存 params 字典，并提供绑定 / 拷贝 / 数值求值"""

    prefix = ""

    def __init__(self, params: Dict[str, DenseMatrix]):
        self.params = {name: as_matrix(value) for name, value in params.items()}

    def bind(self, tape: Tape) -> ParamNodes:
        """把参数注册为 tape 上的可训练叶子节点"""
        return {name: tape.parameter(name, value) for name, value in self.params.items()}

    def constants(self, tape: Tape) -> ParamNodes:
        return {name: tape.constant(value, name=name) for name, value in self.params.items()}

    def forward(self, tape: Tape, x: TapeNode, params: Optional[ParamNodes] = None) -> TapeNode:
        raise NotImplementedError

    def evaluate(self, x) -> np.ndarray:
        """不记录梯度的数值求值；x 为 (n_x,) 或 (n_x, m)，返回前向输出矩阵"""
        tape = Tape(grad_enabled=False)
        return self.forward(tape, tape.constant(x)).value

    def parameter_count(self) -> int:
        return int(sum(value.size for value in self.params.values()))

    def clone(self):
        return copy.deepcopy(self)


class PolicyNet(ParameterizedNet):
    """
    神经预测控制策略：宽度 [n_x, hidden..., N×n_u]
    最后一层为仿射输出，隐层使用 activation（默认 relu，分段仿射）
    zero_at_origin=True 时输出 net(x) − net(0)，原点处控制序列恒为 0
    """

    prefix = "policy."

    def __init__(self, widths: Sequence[int], horizon: int, n_u: int, activation: str = "relu",
                 seed: int = 0, params: Optional[Dict[str, DenseMatrix]] = None, beta: float = 5.0,
                 zero_at_origin: bool = False):
        _check_widths(widths)
        if activation not in SUPPORTED_ACTIVATIONS:
            raise ConfigError(f"不支持的激活函数: {activation}")
        if widths[-1] != horizon * n_u:
            raise ConfigError(f"策略输出宽度 {widths[-1]} 应等于 N×n_u = {horizon * n_u}")
        self.widths = [int(w) for w in widths]
        self.horizon = int(horizon)
        self.n_u = int(n_u)
        self.activation = activation
        self.beta = float(beta)
        self.zero_at_origin = bool(zero_at_origin)
        super().__init__(params if params is not None else init_params(self.widths, seed, prefix=self.prefix))

    @property
    def n_x(self) -> int:
        return self.widths[0]

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    def forward(self, tape: Tape, x: TapeNode, params: Optional[ParamNodes] = None) -> TapeNode:
        _check_input(x, self.n_x, "policy_forward")
        p = params if params is not None else self.constants(tape)
        out = self._layers(x, p)
        if self.zero_at_origin:
            out = add_column(out, -self._layers(tape.constant(np.zeros((self.n_x, 1))), p))
        return out

    def _layers(self, x: TapeNode, p: ParamNodes) -> TapeNode:
        z = x
        for layer in range(self.n_layers):
            z = add_column(matmul(p[f"{self.prefix}W{layer}"], z), p[f"{self.prefix}b{layer}"])
            if layer < self.n_layers - 1:
                z = _activate(z, self.activation, self.beta)
        return z


class IcnnNet(ParameterizedNet):
    """
    输入凸网络：
        z1     = σ(W0 x + b0)
        z_{i+1} = σ(U_i z_i + W_i x + b_i),  U_i = softplus(Û_i) ≥ 0
        g(x)   = z_k（标量）
    σ 取 softplus(β)，凸且单调不减，因此 g 关于 x 凸
    """

    def __init__(self, widths: Sequence[int], beta: float = 5.0, seed: int = 0,
                 params: Optional[Dict[str, DenseMatrix]] = None, prefix: str = "lyapunov."):
        _check_widths(widths)
        if widths[-1] != 1:
            raise ConfigError(f"ICNN 输出宽度必须为 1，收到 {widths[-1]}")
        if beta <= 0:
            raise ConfigError(f"softplus beta 必须为正，收到 {beta}")
        self.widths = [int(w) for w in widths]
        self.beta = float(beta)
        self.prefix = prefix
        super().__init__(params if params is not None else self._init(seed))

    @property
    def n_x(self) -> int:
        return self.widths[0]

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    def _init(self, seed: int) -> Dict[str, DenseMatrix]:
        rng = np.random.default_rng(seed)
        n_x = self.n_x
        bound_x = math.sqrt(6.0 / n_x)
        params: Dict[str, DenseMatrix] = {}
        for layer, fan_out in enumerate(self.widths[1:]):
            params[f"{self.prefix}W{layer}"] = rng.uniform(-bound_x, bound_x, size=(fan_out, n_x))
            params[f"{self.prefix}b{layer}"] = np.zeros((fan_out, 1))
            if layer > 0:
                fan_in = self.widths[layer]
                # 有效权重 softplus(Û) ~ Uniform(0, 1/fan_in)，避免深层输出逐层放大
                effective = rng.uniform(1e-6, 1.0 / fan_in, size=(fan_out, fan_in))
                params[f"{self.prefix}U{layer}"] = np.log(np.expm1(effective * REPARAM_BETA)) / REPARAM_BETA
        return params

    def effective_u(self, layer: int) -> DenseMatrix:
        raw = self.params[f"{self.prefix}U{layer}"]
        return np.logaddexp(0.0, REPARAM_BETA * raw) / REPARAM_BETA

    def forward(self, tape: Tape, x: TapeNode, params: Optional[ParamNodes] = None) -> TapeNode:
        _check_input(x, self.n_x, "icnn_forward")
        p = params if params is not None else self.constants(tape)
        pre = self.prefix
        z = softplus(add_column(matmul(p[f"{pre}W0"], x), p[f"{pre}b0"]), self.beta)
        for layer in range(1, self.n_layers):
            u = softplus(p[f"{pre}U{layer}"], REPARAM_BETA)
            hidden = matmul(u, z) + matmul(p[f"{pre}W{layer}"], x)
            z = softplus(add_column(hidden, p[f"{pre}b{layer}"]), self.beta)
        return z


class LyapunovNet(ParameterizedNet):
    """
    正定 Lyapunov 候选函数
        V(x) = σ(g(x) − g(0)) + ε‖x‖²
    σ 为平滑 ReLU（非负、凸、单调不减、σ(0)=0），所以 V(0)=0 且 V(x) ≥ ε‖x‖²
    参数 φ 就是内部 ICNN 的全部参数；ε 为固定超参数
    """

    prefix = "lyapunov."

    def __init__(self, icnn: IcnnNet, epsilon: float = 0.01, smooth_d: float = 0.1):
        if epsilon <= 0:
            raise ConfigError(f"epsilon 必须为正，收到 {epsilon}")
        if smooth_d <= 0:
            raise ConfigError(f"smooth_d 必须为正，收到 {smooth_d}")
        self.icnn = icnn
        self.epsilon = float(epsilon)
        self.smooth_d = float(smooth_d)
        # 与 ICNN 共享同一份参数数组
        self.params = icnn.params

    @classmethod
    def build(cls, n_x: int, hidden: Sequence[int], epsilon: float = 0.01, beta: float = 5.0,
              smooth_d: float = 0.1, seed: int = 0) -> "LyapunovNet":
        icnn = IcnnNet([n_x, *hidden, 1], beta=beta, seed=seed, prefix=cls.prefix)
        return cls(icnn, epsilon=epsilon, smooth_d=smooth_d)

    @property
    def n_x(self) -> int:
        return self.icnn.n_x

    @property
    def beta(self) -> float:
        return self.icnn.beta

    def forward(self, tape: Tape, x: TapeNode, params: Optional[ParamNodes] = None) -> TapeNode:
        _check_input(x, self.n_x, "lyapunov_forward")
        p = params if params is not None else self.constants(tape)
        gx = self.icnn.forward(tape, x, p)
        g0 = self.icnn.forward(tape, tape.constant(np.zeros((self.n_x, 1))), p)
        shifted = smooth_relu(add_column(gx, scale(g0, -1.0)), self.smooth_d)
        return shifted + scale(weighted_sqnorm(x, np.eye(self.n_x)), self.epsilon)

    def clone(self) -> "LyapunovNet":
        icnn = IcnnNet(self.icnn.widths, beta=self.icnn.beta, prefix=self.icnn.prefix,
                       params={k: v.copy() for k, v in self.params.items()})
        return LyapunovNet(icnn, epsilon=self.epsilon, smooth_d=self.smooth_d)


class QuadraticLyapunov(ParameterizedNet):
    """二次型基线 V(x) = xᵀPx，默认 P = I"""

    def __init__(self, n_x: int, P: Optional[DenseMatrix] = None):
        super().__init__({})
        self.P = np.eye(n_x) if P is None else as_matrix(P)
        if self.P.shape != (n_x, n_x):
            raise DimensionError(f"P 的形状应为 ({n_x}, {n_x})，收到 {self.P.shape}")

    @property
    def n_x(self) -> int:
        return self.P.shape[0]

    def forward(self, tape: Tape, x: TapeNode, params: Optional[ParamNodes] = None) -> TapeNode:
        _check_input(x, self.n_x, "quadratic_lyapunov")
        return weighted_sqnorm(x, self.P)


def policy_forward(net: PolicyNet, x0) -> np.ndarray:
    """单个初始状态 -> 控制序列 U，形状 (N, n_u)，第 k 行是 u_k"""
    x = np.asarray(x0, dtype=np.float64).reshape(-1)
    if x.size != net.n_x:
        raise DimensionError(f"policy_forward: 输入维度应为 {net.n_x}，收到 {x.size}")
    return net.evaluate(x).reshape(net.horizon, net.n_u)


def policy_first_action(net: PolicyNet, x) -> np.ndarray:
    return policy_forward(net, x)[0]


def icnn_forward(net: IcnnNet, x) -> float:
    return float(net.evaluate(np.asarray(x, dtype=np.float64).reshape(-1))[0, 0])


def lyapunov_forward(net: ParameterizedNet, x) -> float:
    return float(net.evaluate(np.asarray(x, dtype=np.float64).reshape(-1))[0, 0])


def lyapunov_values(net: ParameterizedNet, states: np.ndarray) -> np.ndarray:
    """批量求值：states 为 (m, n_x)，返回 (m,)"""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    return net.evaluate(states.T)[0]
