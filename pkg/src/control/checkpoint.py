"""
检查点读写
格式（JSON）：
    {format_version, policy: {widths, activation, N, n_u, beta, zero_at_origin, params},
     lyapunov: {kind, widths, epsilon, beta, smooth_d, params | P}, seed, training_meta}
每个参数矩阵存成 {shape: [rows, cols], data: [按行展开的数值]}。
JSON 浮点数用最短往返表示（≤ 17 位有效数字），读回后与内存中的值完全相同。
写入先写临时文件再 os.replace，保证原子性。
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ValidationError, model_validator

from core.autodiff import DenseMatrix
from core.exceptions import CheckpointError, CheckpointVersionError, ConfigError
from core.files import write_text_atomic
from .config import RunConfig, parse_run_config
from .neural import IcnnNet, LyapunovNet, ParameterizedNet, PolicyNet, QuadraticLyapunov

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class MatrixRecord(BaseModel):
    shape: List[int]
    data: List[float]

    @model_validator(mode="after")
    def _size(self):
        if len(self.shape) != 2 or self.shape[0] * self.shape[1] != len(self.data):
            raise ValueError(f"矩阵形状 {self.shape} 与数据长度 {len(self.data)} 不一致")
        return self

    @classmethod
    def from_array(cls, array: DenseMatrix) -> "MatrixRecord":
        return cls(shape=list(array.shape), data=array.reshape(-1).tolist())

    def to_array(self) -> DenseMatrix:
        return np.asarray(self.data, dtype=np.float64).reshape(self.shape)


class PolicyRecord(BaseModel):
    widths: List[int]
    activation: str
    N: int
    n_u: int
    beta: float = 5.0
    zero_at_origin: bool = False
    params: Dict[str, MatrixRecord]


class LyapunovRecord(BaseModel):
    kind: Literal["icnn", "quadratic"]
    widths: Optional[List[int]] = None
    epsilon: Optional[float] = None
    beta: Optional[float] = None
    smooth_d: Optional[float] = None
    params: Dict[str, MatrixRecord] = {}
    P: Optional[MatrixRecord] = None


class CheckpointFile(BaseModel):
    format_version: int
    policy: PolicyRecord
    lyapunov: LyapunovRecord
    seed: int
    training_meta: Dict[str, Any] = {}


@dataclass
class Checkpoint:
    policy: PolicyNet
    lyapunov: ParameterizedNet
    seed: int
    training_meta: Dict[str, Any] = field(default_factory=dict)

    def run_config(self) -> RunConfig:
        """训练时使用的 RunConfig（存在 training_meta["config"] 中）"""
        data = self.training_meta.get("config")
        if data is None:
            raise CheckpointError("检查点中没有保存运行配置 (training_meta.config)")
        try:
            return parse_run_config(data)
        except ConfigError as e:
            raise CheckpointError(f"检查点中的运行配置无效: {e}") from e


def _records(params: Dict[str, DenseMatrix]) -> Dict[str, MatrixRecord]:
    return {name: MatrixRecord.from_array(value) for name, value in params.items()}


def _policy_record(policy: PolicyNet) -> PolicyRecord:
    return PolicyRecord(widths=policy.widths, activation=policy.activation, N=policy.horizon,
                        n_u=policy.n_u, beta=policy.beta, zero_at_origin=policy.zero_at_origin,
                        params=_records(policy.params))


def _lyapunov_record(V: ParameterizedNet) -> LyapunovRecord:
    if isinstance(V, QuadraticLyapunov):
        return LyapunovRecord(kind="quadratic", P=MatrixRecord.from_array(V.P))
    if isinstance(V, LyapunovNet):
        return LyapunovRecord(kind="icnn", widths=V.icnn.widths, epsilon=V.epsilon, beta=V.beta,
                              smooth_d=V.smooth_d, params=_records(V.params))
    raise CheckpointError(f"无法序列化的 Lyapunov 类型: {type(V).__name__}")


def save_checkpoint(policy: PolicyNet, V: ParameterizedNet, meta: Dict[str, Any], path: Union[str, Path],
                    seed: int = 0) -> Path:
    path = Path(path)
    document = CheckpointFile(
        format_version=FORMAT_VERSION,
        policy=_policy_record(policy),
        lyapunov=_lyapunov_record(V),
        seed=seed,
        training_meta=meta,
    )
    write_text_atomic(path, json.dumps(document.model_dump(), indent=1))
    logger.info("检查点已保存: %s", path)
    return path


def _restore(template: ParameterizedNet, records: Dict[str, MatrixRecord], who: str) -> Dict[str, DenseMatrix]:
    """按模板网络核对参数名和形状"""
    loaded = {name: record.to_array() for name, record in records.items()}
    if set(loaded) != set(template.params):
        missing = sorted(set(template.params) - set(loaded))
        extra = sorted(set(loaded) - set(template.params))
        raise CheckpointError(f"{who} 参数名不匹配: 缺少 {missing}，多余 {extra}")
    for name, value in template.params.items():
        if loaded[name].shape != value.shape:
            raise CheckpointError(f"{who} 参数 '{name}' 形状应为 {value.shape}，收到 {loaded[name].shape}")
    # 保持模板中的参数顺序
    return {name: loaded[name] for name in template.params}


def _build_policy(record: PolicyRecord) -> PolicyNet:
    template = PolicyNet(record.widths, record.N, record.n_u, activation=record.activation, beta=record.beta)
    return PolicyNet(record.widths, record.N, record.n_u, activation=record.activation, beta=record.beta,
                     zero_at_origin=record.zero_at_origin, params=_restore(template, record.params, "policy"))


def _build_lyapunov(record: LyapunovRecord) -> ParameterizedNet:
    if record.kind == "quadratic":
        if record.P is None:
            raise CheckpointError("quadratic Lyapunov 缺少 P")
        P = record.P.to_array()
        return QuadraticLyapunov(P.shape[0], P)
    if record.widths is None or record.epsilon is None or record.beta is None or record.smooth_d is None:
        raise CheckpointError("icnn Lyapunov 缺少 widths / epsilon / beta / smooth_d")
    template = IcnnNet(record.widths, beta=record.beta, prefix=LyapunovNet.prefix)
    icnn = IcnnNet(record.widths, beta=record.beta, prefix=LyapunovNet.prefix,
                   params=_restore(template, record.params, "lyapunov"))
    return LyapunovNet(icnn, epsilon=record.epsilon, smooth_d=record.smooth_d)


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"检查点文件不存在: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CheckpointError(f"检查点无法解析: {path}: {e}") from e
    if not isinstance(raw, dict) or "format_version" not in raw:
        raise CheckpointError(f"检查点缺少 format_version: {path}")
    if raw["format_version"] != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"检查点版本 {raw['format_version']} 与读取器版本 {FORMAT_VERSION} 不兼容: {path}"
        )
    try:
        document = CheckpointFile.model_validate(raw)
    except ValidationError as e:
        raise CheckpointError(f"检查点格式错误: {path}: {e}") from e
    try:
        policy = _build_policy(document.policy)
        V = _build_lyapunov(document.lyapunov)
    except (ConfigError, ValueError) as e:
        raise CheckpointError(f"检查点中的网络定义无效: {e}") from e
    logger.info("检查点已加载: %s (policy 参数 %d 个)", path, policy.parameter_count())
    return Checkpoint(policy, V, document.seed, document.training_meta)
