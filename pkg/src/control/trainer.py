"""
NLDPC 训练循环
作用：
1. sample_initial_conditions：从分布 D 采样可行域内的初始状态
2. adamw_step：解耦权重衰减的 Adam 更新（原地修改参数数组）
3. train：采样 → 前向展开 → 反向传播 → 同时更新 θ 和 φ，记录训练 / 验证损失
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Union

import numpy as np
from tqdm import tqdm

from core.all_types import Box, EpochRecord, ProblemSpec, SampleSet, TrainConfig
from core.autodiff import DenseMatrix, backward
from core.exceptions import ConfigError, DimensionError, NumericError
from core.interfaces import SystemModel
from .neural import ParameterizedNet, PolicyNet
from .rollout import build_train_graph, check_compatible, evaluate_loss

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.Generator]


def sample_initial_conditions(distribution: str, m: int, box: Box, seed: SeedLike) -> SampleSet:
    """
    支持两种分布：
    - normal: 以盒中心为均值、σ = 半宽/2 的正态分布，落在盒外的行重新采样（截断正态）
    - uniform: 盒内均匀分布
    """
    if m < 1:
        raise ConfigError(f"样本数 m 必须 ≥ 1，收到 {m}")
    if box.is_empty:
        raise ConfigError(f"可行域为空: lower={box.lower.tolist()} upper={box.upper.tolist()}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    if distribution == "uniform":
        states = rng.uniform(box.lower, box.upper, size=(m, box.dim))
        return SampleSet(states, {"type": "uniform", "lower": box.lower.tolist(), "upper": box.upper.tolist()})

    if distribution != "normal":
        raise ConfigError(f"不支持的采样分布: {distribution}")
    sigma = box.half_width / 2.0
    states = box.center + sigma * rng.standard_normal((m, box.dim))
    outside = ~box.contains(states)
    while outside.any():
        states[outside] = box.center + sigma * rng.standard_normal((int(outside.sum()), box.dim))
        outside = ~box.contains(states)
    return SampleSet(states, {"type": "normal", "mean": box.center.tolist(), "std": sigma.tolist()})


def sample_splits(config: TrainConfig, box: Box) -> Dict[str, SampleSet]:
    """一次采样 n_train + n_val + n_test 个初始状态后按顺序切分"""
    total = config.n_train + config.n_val + config.n_test
    samples = sample_initial_conditions(config.distribution, total, box, config.seed)
    bounds = np.cumsum([0, config.n_train, config.n_val, config.n_test])
    return {
        name: SampleSet(samples.states[lo:hi], samples.distribution)
        for name, lo, hi in zip(("train", "val", "test"), bounds[:-1], bounds[1:])
    }


@dataclass
class AdamWState:
    """一阶 / 二阶矩累积量与步数"""
    first: Dict[str, DenseMatrix] = field(default_factory=dict)
    second: Dict[str, DenseMatrix] = field(default_factory=dict)
    t: int = 0


def adamw_step(state: AdamWState, params: Dict[str, DenseMatrix], grads: Dict[str, DenseMatrix],
               config: TrainConfig) -> Dict[str, DenseMatrix]:
    """
    m ← β₁m + (1−β₁)g，v ← β₂v + (1−β₂)g²，偏差修正后
    θ ← θ − α(m̂ / (√v̂ + eps) + λθ)
    """
    for name, grad in grads.items():
        if name not in params:
            raise DimensionError(f"adamw_step: 梯度 '{name}' 没有对应的参数")
        if params[name].shape != grad.shape:
            raise DimensionError(f"adamw_step: 参数 '{name}' 形状 {params[name].shape} 与梯度 {grad.shape} 不一致")

    state.t += 1
    beta1, beta2 = config.beta1, config.beta2
    correction1 = 1.0 - beta1 ** state.t
    correction2 = 1.0 - beta2 ** state.t
    for name, grad in grads.items():
        first = state.first.get(name)
        second = state.second.get(name)
        if first is None:
            first = np.zeros_like(grad)
            second = np.zeros_like(grad)
        first = beta1 * first + (1.0 - beta1) * grad
        second = beta2 * second + (1.0 - beta2) * grad * grad
        state.first[name], state.second[name] = first, second

        m_hat = first / correction1
        v_hat = second / correction2
        params[name] -= config.lr * (m_hat / (np.sqrt(v_hat) + config.eps) + config.weight_decay * params[name])
    return params


@dataclass
class TrainResult:
    """
    训练结果
    policy / lyapunov 为最终参数；best_* 为验证损失最小时的副本（没有验证集时与最终一致）
    """
    policy: PolicyNet
    lyapunov: ParameterizedNet
    history: List[EpochRecord]
    best_policy: PolicyNet
    best_lyapunov: ParameterizedNet
    best_val_loss: Optional[float]
    best_epoch: int

    @property
    def final_train_loss(self) -> float:
        return self.history[-1].train_loss


def train(model: SystemModel, spec: ProblemSpec, policy: PolicyNet, V: ParameterizedNet, config: TrainConfig,
          splits: Optional[Dict[str, SampleSet]] = None, show_progress: bool = True,
          on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> TrainResult:
    """
    按 batch 同时更新策略与 Lyapunov 参数；批顺序由 seed 决定，同 seed 的损失历史完全相同
    任何 NaN / Inf 都会中止训练，并在 NumericError 中给出 epoch / batch
    """
    check_compatible(policy, V, model, spec)
    splits = splits or sample_splits(config, model.state_box)
    train_states = splits["train"].states
    val_states = splits["val"].states if "val" in splits else np.zeros((0, model.n_x))
    if train_states.shape[0] < config.batch_size:
        raise ConfigError(f"训练样本数 {train_states.shape[0]} 小于 batch_size {config.batch_size}")

    params = {**policy.params, **V.params}
    optimizer = AdamWState()
    shuffler = np.random.default_rng(config.seed)
    history: List[EpochRecord] = []
    best_val = None
    best_epoch = 0
    best_policy, best_V = policy.clone(), V.clone()

    n = train_states.shape[0]
    progress = tqdm(range(1, config.epochs + 1), desc="训练", unit="epoch", disable=not show_progress)
    for epoch in progress:
        order = shuffler.permutation(n)
        batch_losses = []
        for batch, start in enumerate(range(0, n, config.batch_size)):
            x0 = train_states[order[start:start + config.batch_size]]
            try:
                graph = build_train_graph(policy, V, model, spec, x0)
                grads = backward(graph.tape, graph.loss)
            except NumericError as e:
                raise NumericError(f"训练在 epoch {epoch} batch {batch} 中止: {e}") from e
            adamw_step(optimizer, params, grads, config)
            batch_losses.append(graph.loss_value)

        record = EpochRecord(epoch=epoch, train_loss=float(np.mean(batch_losses)))
        if val_states.shape[0]:
            try:
                record.val_loss = evaluate_loss(policy, V, model, spec, val_states)
            except NumericError as e:
                raise NumericError(f"验证集损失在 epoch {epoch} 出现非有限值: {e}") from e
            if best_val is None or record.val_loss < best_val:
                best_val, best_epoch = record.val_loss, epoch
                best_policy, best_V = policy.clone(), V.clone()
        history.append(record)

        progress.set_postfix(train=f"{record.train_loss:.4g}",
                             val="-" if record.val_loss is None else f"{record.val_loss:.4g}")
        logger.info("epoch %d: train_loss=%.6g val_loss=%s", epoch, record.train_loss, record.val_loss)
        if on_epoch is not None:
            on_epoch(record)

    if best_val is None:
        best_policy, best_V, best_epoch = policy.clone(), V.clone(), config.epochs
    return TrainResult(policy, V, history, best_policy, best_V, best_val, best_epoch)
