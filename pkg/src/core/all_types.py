"""
纯数据类型定义模块
作用：定义系统中所有的数据结构，只做字段校验，不包含业务逻辑
原则：只定义数据，不定义行为
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .exceptions import ConfigError, DimensionError


def _vector(value, name: str) -> np.ndarray:
    array = np.asarray(value, dtype=np.float64).reshape(-1)
    if array.size == 0:
        raise ConfigError(f"{name} 不能为空")
    return array


@dataclass
class Box:
    """
    盒约束 {x | lower ≤ x ≤ upper}

    作用：
    1. 表示状态约束 h(x) ≤ 0 和输入约束 g(u) ≤ 0
    2. 表示终端集 X_f 和初始条件的可行域 X
    """
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = _vector(self.lower, "lower")
        self.upper = _vector(self.upper, "upper")
        if self.lower.shape != self.upper.shape:
            raise DimensionError(f"Box 上下界长度不一致: {self.lower.shape} vs {self.upper.shape}")

    @classmethod
    def symmetric(cls, bound: float, dim: int) -> "Box":
        return cls(-bound * np.ones(dim), bound * np.ones(dim))

    @property
    def dim(self) -> int:
        return int(self.lower.size)

    @property
    def is_empty(self) -> bool:
        return bool(np.any(self.lower > self.upper))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """points 为 (..., dim)，返回逐点布尔结果"""
        points = np.asarray(points, dtype=np.float64)
        return np.all((points >= self.lower) & (points <= self.upper), axis=-1)

    def to_dict(self) -> Dict[str, List[float]]:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass
class PvtolParams:
    """PVTOL 飞行器物理参数（悬停点线性化 + 前向欧拉离散）"""
    mass: float = 4.0
    inertia: float = 0.0475
    arm: float = 0.25
    gravity: float = 9.8
    damping: float = 0.05
    dt: float = 0.2

    def __post_init__(self):
        for name in ("mass", "inertia", "dt"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"PVTOL 参数 {name} 必须为正，收到 {getattr(self, name)}")
        if self.damping < 0 or self.arm < 0 or self.gravity < 0:
            raise ConfigError("PVTOL 参数 damping / arm / gravity 不能为负")


@dataclass
class ProblemSpec:
    """
    NLDPC 问题设置：目标权重、约束、预测时域、罚函数权重

    字段说明：
    - Q_x, Q_u: 阶段代价权重矩阵；传标量时展开为 标量×I
    - Q_xN: 终端状态代价 x_Nᵀ Q_xN x_N 的权重矩阵，默认 0（不加终端代价）
    - Q_V, Q_h, Q_g, Q_Xf: Lyapunov / 状态 / 输入 / 终端罚权重（标量，≥0）
    - terminal_box: 终端集 X_f，可选
    - margin: 验证时 Lyapunov 下降裕度 τ
    """
    state_box: Box
    input_box: Box
    horizon: int
    Q_x: Any = 1.0
    Q_u: Any = 1.0
    Q_V: float = 1.0
    Q_h: float = 1.0
    Q_g: float = 1.0
    Q_Xf: float = 0.0
    Q_xN: Any = 0.0
    terminal_box: Optional[Box] = None
    margin: float = 0.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError(f"预测时域 N 必须 ≥ 1，收到 {self.horizon}")
        for name in ("Q_V", "Q_h", "Q_g", "Q_Xf", "margin"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} 必须非负，收到 {getattr(self, name)}")
        self.Q_x = self._weight(self.Q_x, self.n_x, "Q_x")
        self.Q_u = self._weight(self.Q_u, self.n_u, "Q_u")
        self.Q_xN = self._weight(self.Q_xN, self.n_x, "Q_xN")
        if self.terminal_box is not None and self.terminal_box.dim != self.n_x:
            raise DimensionError(f"终端集维度 {self.terminal_box.dim} 与状态维度 {self.n_x} 不一致")

    @staticmethod
    def _weight(value, dim: int, name: str) -> np.ndarray:
        matrix = np.asarray(value, dtype=np.float64)
        if matrix.ndim == 0:
            matrix = float(matrix) * np.eye(dim)
        elif matrix.ndim == 1:
            matrix = np.diag(matrix)
        if matrix.shape != (dim, dim):
            raise DimensionError(f"{name} 形状应为 ({dim}, {dim})，收到 {matrix.shape}")
        if not np.allclose(matrix, matrix.T) or np.linalg.eigvalsh(matrix).min() < -1e-12:
            raise ConfigError(f"{name} 必须对称半正定")
        return matrix

    @property
    def n_x(self) -> int:
        return self.state_box.dim

    @property
    def n_u(self) -> int:
        return self.input_box.dim


@dataclass
class TrainConfig:
    """训练配置，AdamW 超参数默认取常用值"""
    epochs: int = 300
    batch_size: int = 333
    n_train: int = 3333
    n_val: int = 1000
    n_test: int = 1000
    distribution: str = "normal"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs 必须 ≥ 1，收到 {self.epochs}")
        if not 0 < self.batch_size <= self.n_train:
            raise ConfigError(f"batch_size 必须在 (0, n_train={self.n_train}] 内，收到 {self.batch_size}")
        if self.n_val < 0 or self.n_test < 0:
            raise ConfigError("n_val / n_test 不能为负")
        if self.lr <= 0:
            raise ConfigError(f"学习率必须为正，收到 {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("beta1 / beta2 必须在 [0, 1) 内")
        if self.distribution not in ("normal", "uniform"):
            raise ConfigError(f"不支持的采样分布: {self.distribution}")


@dataclass
class SampleSet:
    """初始条件样本集：states 为 (m, n_x)，每行都在可行域内"""
    states: np.ndarray
    distribution: Dict[str, Any]

    @property
    def size(self) -> int:
        return int(self.states.shape[0])


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: Optional[float] = None


@dataclass
class SimTrajectory:
    """
    闭环仿真轨迹（纯数值，无计算图）

    字段说明：
    - states: (T+1, n_x)，controls: (T, n_u)
    - lyapunov: (T+1,) 各时刻 V 值
    - stage_losses: (T,) 阶段代价
    - state_violations / input_violations / lyapunov_increase: 逐步标志
    - diverged: 是否因发散被截断（截断后 T 比请求的短）
    """
    states: np.ndarray
    controls: np.ndarray
    lyapunov: np.ndarray
    stage_losses: np.ndarray
    state_violations: np.ndarray
    input_violations: np.ndarray
    lyapunov_increase: np.ndarray
    terminal_violation: Optional[bool] = None
    diverged: bool = False

    @property
    def steps(self) -> int:
        return int(self.controls.shape[0])


@dataclass
class GridSpec:
    """二维切片网格：dims=(i, j)，其余维度固定为 fixed 中的值"""
    dims: Tuple[int, int]
    ranges: Tuple[Tuple[float, float], Tuple[float, float]]
    resolution: Tuple[int, int]
    fixed: np.ndarray

    def __post_init__(self):
        self.fixed = np.asarray(self.fixed, dtype=np.float64).reshape(-1)
        i, j = self.dims
        if i == j or not (0 <= i < self.fixed.size and 0 <= j < self.fixed.size):
            raise ConfigError(f"切片维度 {self.dims} 对 n_x={self.fixed.size} 无效")
        if min(self.resolution) < 2:
            raise ConfigError(f"网格分辨率必须 ≥ 2，收到 {self.resolution}")
        for lo, hi in self.ranges:
            if not lo < hi:
                raise ConfigError(f"网格范围无效: [{lo}, {hi}]")

    def axes(self) -> Tuple[np.ndarray, np.ndarray]:
        (lo_i, hi_i), (lo_j, hi_j) = self.ranges
        return (np.linspace(lo_i, hi_i, self.resolution[0]),
                np.linspace(lo_j, hi_j, self.resolution[1]))

    def points(self) -> np.ndarray:
        """按 (i, j) 行优先（i 在外层）返回 (r_i·r_j, n_x) 的网格点"""
        axis_i, axis_j = self.axes()
        ii, jj = np.meshgrid(axis_i, axis_j, indexing="ij")
        points = np.tile(self.fixed, (ii.size, 1))
        points[:, self.dims[0]] = ii.reshape(-1)
        points[:, self.dims[1]] = jj.reshape(-1)
        return points


@dataclass
class IndicatorCriteria:
    """采样验证的指示函数判据"""
    state_box: Box
    input_box: Box
    margin: float = 0.0
    terminal_box: Optional[Box] = None
    equilibrium_tolerance: Optional[float] = 0.1

    def __post_init__(self):
        if self.margin < 0:
            raise ConfigError(f"margin τ 必须非负，收到 {self.margin}")
        if self.terminal_box is not None and self.terminal_box.dim != self.state_box.dim:
            raise DimensionError("终端集维度与状态约束维度不一致")


@dataclass
class TrajectoryOutcome:
    index: int
    passed: bool
    first_violation: Optional[str] = None


@dataclass
class VerificationReport:
    """
    概率验证报告
    alpha = sqrt(−ln(δ/2) / (2m))，kappa = sigma_tilde − alpha（可能为负，此时 vacuous）
    """
    m: int
    sigma_tilde: float
    delta: float
    alpha: float
    kappa: float
    vacuous: bool
    failures: Dict[str, int]
    outcomes: List[TrajectoryOutcome]
    seed: int
    horizon: int
    kappa_target: Optional[float] = None
    required_samples: Optional[int] = None

    def summary(self) -> Dict[str, Any]:
        return {
            "m": self.m,
            "sigma_tilde": self.sigma_tilde,
            "delta": self.delta,
            "alpha": self.alpha,
            "kappa": self.kappa,
            "vacuous": self.vacuous,
            "failures": dict(self.failures),
            "seed": self.seed,
            "horizon": self.horizon,
            "kappa_target": self.kappa_target,
            "required_samples": self.required_samples,
        }


@dataclass
class ToolMetadata:
    """
    工具元数据类 - 存储命令工具的基本信息

    作用：
    1. 让命令行入口知道工具的名称、参数和返回值
    2. 支持工具的注册和分类
    """
    name: str
    description: str
    parameters: Dict[str, Any]
    return_type: str
    category: str
    return_description: Dict[str, Any]
    tags: List[str] = None
    version: str = "1.0.0"

    def __post_init__(self):
        if self.tags is None:
            self.tags = []


@dataclass
class ToolResult:
    """
    工具执行结果类 - 标准化所有工具的返回格式

    error_type 记录失败时的异常类名，命令行据此映射退出码
    """
    success: bool
    data: Any
    error_message: Optional[str]
    execution_time: float
    metadata: Dict[str, Any]
    tool_name: str
    timestamp: float
    error_type: Optional[str] = None
