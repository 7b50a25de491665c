"""
运行配置
作用：用 pydantic 校验 JSON 配置文件（system / policy / lyapunov / problem / training / verification / seed），
      跨段检查 n_x、n_u、N 是否一致，然后构建模型、网络、ProblemSpec、TrainConfig 和验证判据
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.all_types import Box, IndicatorCriteria, ProblemSpec, TrainConfig
from core.exceptions import ConfigError
from core.interfaces import SystemModel
from .dynamics import model_from_description
from .neural import LyapunovNet, ParameterizedNet, PolicyNet, QuadraticLyapunov

logger = logging.getLogger(__name__)

Weight = Union[float, List[float], List[List[float]]]
PVTOL_PHYSICAL = {"mass", "inertia", "arm", "gravity", "damping"}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BoxSection(_Section):
    lower: List[float]
    upper: List[float]

    @model_validator(mode="after")
    def _same_length(self):
        if len(self.lower) != len(self.upper) or not self.lower:
            raise ValueError(f"lower / upper 长度必须相同且非空: {len(self.lower)} vs {len(self.upper)}")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("盒约束的 lower 不能大于 upper")
        return self

    def to_box(self) -> Box:
        return Box(self.lower, self.upper)


class SystemSection(_Section):
    type: Literal["lti", "pvtol"]
    A: Optional[List[List[float]]] = None
    B: Optional[List[List[float]]] = None
    params: Dict[str, float] = Field(default_factory=dict)
    dt: float = Field(default=0.2, gt=0)
    state_box: BoxSection
    input_box: BoxSection

    @model_validator(mode="after")
    def _matrices(self):
        if self.type == "lti":
            if self.A is None or self.B is None:
                raise ValueError("lti 模型必须给出 A 和 B")
            n_x = len(self.A)
            if any(len(row) != n_x for row in self.A):
                raise ValueError("A 必须为方阵")
            if len(self.B) != n_x or len({len(row) for row in self.B}) != 1:
                raise ValueError(f"B 必须为 {n_x} 行且各行等长")
        else:
            unknown = set(self.params) - PVTOL_PHYSICAL
            if unknown:
                raise ValueError(f"未知的 PVTOL 参数: {sorted(unknown)}")
        return self

    @property
    def n_x(self) -> int:
        return len(self.A) if self.type == "lti" else 6

    @property
    def n_u(self) -> int:
        return len(self.B[0]) if self.type == "lti" else 2


class PolicySection(_Section):
    hidden: List[int] = Field(default_factory=lambda: [20, 20, 20])
    activation: Literal["relu", "softplus"] = "relu"
    beta: float = Field(default=5.0, gt=0)
    zero_at_origin: bool = False


class LyapunovSection(_Section):
    kind: Literal["icnn", "quadratic"] = "icnn"
    hidden: List[int] = Field(default_factory=lambda: [40] * 7)
    epsilon: float = Field(default=0.01, gt=0)
    beta: float = Field(default=5.0, gt=0)
    smooth_d: float = Field(default=0.1, gt=0)


class ProblemSection(_Section):
    N: int = Field(ge=1)
    Qx: Weight = 1.0
    Qu: Weight = 1.0
    QV: float = Field(default=1.0, ge=0)
    Qh: float = Field(default=1.0, ge=0)
    Qg: float = Field(default=1.0, ge=0)
    QXf: float = Field(default=0.0, ge=0)
    QxN: Weight = 0.0
    terminal_box: Optional[BoxSection] = None
    margin: float = Field(default=0.0, ge=0)


class TrainingSection(_Section):
    epochs: int = Field(default=300, ge=1)
    batch_size: int = Field(default=333, ge=1)
    n_train: int = Field(default=3333, ge=1)
    n_val: int = Field(default=1000, ge=0)
    n_test: int = Field(default=1000, ge=0)
    distribution: Literal["normal", "uniform"] = "normal"
    lr: float = Field(default=1e-3, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    weight_decay: float = Field(default=0.01, ge=0)


class VerificationSection(_Section):
    samples: int = Field(default=3000, ge=1)
    delta: float = Field(default=0.01, gt=0, lt=1)
    margin: Optional[float] = Field(default=None, ge=0)
    steps: int = Field(default=50, ge=1)
    terminal_check: bool = True
    equilibrium_tolerance: Optional[float] = Field(default=0.1, ge=0)
    kappa_target: Optional[float] = None
    seed: Optional[int] = None


class RunConfig(_Section):
    system: SystemSection
    policy: PolicySection = Field(default_factory=PolicySection)
    lyapunov: LyapunovSection = Field(default_factory=LyapunovSection)
    problem: ProblemSection
    training: TrainingSection = Field(default_factory=TrainingSection)
    verification: VerificationSection = Field(default_factory=VerificationSection)
    seed: int = 0

    @model_validator(mode="after")
    def _cross_section(self):
        n_x, n_u = self.system.n_x, self.system.n_u
        boxes = {
            "system.state_box": (self.system.state_box, n_x),
            "system.input_box": (self.system.input_box, n_u),
        }
        if self.problem.terminal_box is not None:
            boxes["problem.terminal_box"] = (self.problem.terminal_box, n_x)
        for name, (box, dim) in boxes.items():
            if len(box.lower) != dim:
                raise ValueError(f"{name} 长度 {len(box.lower)} 与维度 {dim} 不一致")
        for name, weight, dim in (("problem.Qx", self.problem.Qx, n_x), ("problem.Qu", self.problem.Qu, n_u),
                                  ("problem.QxN", self.problem.QxN, n_x)):
            shape = np.shape(weight)
            if shape not in ((), (dim,), (dim, dim)):
                raise ValueError(f"{name} 形状 {shape} 与维度 {dim} 不一致")
        if self.training.batch_size > self.training.n_train:
            raise ValueError(f"training.batch_size {self.training.batch_size} 大于 n_train {self.training.n_train}")
        return self

    # ------------------------------------------------------------------
    # 构建运行对象
    # ------------------------------------------------------------------

    def build_model(self) -> SystemModel:
        description = self.system.model_dump(exclude_none=True)
        return model_from_description(description)

    def policy_widths(self) -> List[int]:
        return [self.system.n_x, *self.policy.hidden, self.problem.N * self.system.n_u]

    def build_policy(self) -> PolicyNet:
        return PolicyNet(self.policy_widths(), horizon=self.problem.N, n_u=self.system.n_u,
                         activation=self.policy.activation, seed=self.seed, beta=self.policy.beta,
                         zero_at_origin=self.policy.zero_at_origin)

    def build_lyapunov(self) -> ParameterizedNet:
        if self.lyapunov.kind == "quadratic":
            return QuadraticLyapunov(self.system.n_x)
        return LyapunovNet.build(self.system.n_x, self.lyapunov.hidden, epsilon=self.lyapunov.epsilon,
                                 beta=self.lyapunov.beta, smooth_d=self.lyapunov.smooth_d, seed=self.seed + 1)

    def build_problem(self) -> ProblemSpec:
        p = self.problem
        return ProblemSpec(
            state_box=self.system.state_box.to_box(),
            input_box=self.system.input_box.to_box(),
            horizon=p.N,
            Q_x=p.Qx, Q_u=p.Qu, Q_V=p.QV, Q_h=p.Qh, Q_g=p.Qg, Q_Xf=p.QXf, Q_xN=p.QxN,
            terminal_box=p.terminal_box.to_box() if p.terminal_box is not None else None,
            margin=p.margin,
        )

    def build_train_config(self) -> TrainConfig:
        return TrainConfig(**self.training.model_dump(), seed=self.seed)

    def build_criteria(self) -> IndicatorCriteria:
        v = self.verification
        terminal = self.problem.terminal_box if v.terminal_check else None
        return IndicatorCriteria(
            state_box=self.system.state_box.to_box(),
            input_box=self.system.input_box.to_box(),
            margin=v.margin if v.margin is not None else self.problem.margin,
            terminal_box=terminal.to_box() if terminal is not None else None,
            equilibrium_tolerance=v.equilibrium_tolerance,
        )

    def verification_seed(self) -> int:
        """默认取训练 seed + 1，与训练样本独立"""
        return self.verification.seed if self.verification.seed is not None else self.seed + 1


def parse_run_config(data: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"配置校验失败: {e}") from e


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"配置文件不存在: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"配置文件不是合法 JSON: {path}: {e}") from e
    config = parse_run_config(data)
    logger.info("已加载配置 %s (system=%s, N=%d, seed=%d)", path, config.system.type, config.problem.N, config.seed)
    return config
