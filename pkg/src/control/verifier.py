"""
基于采样的概率验证
作用：
1. evaluate_indicator：单条闭环轨迹是否满足状态 / 输入约束、Lyapunov 严格下降和终端集
2. empirical_risk：通过率 σ̃
3. hoeffding_bound：α = sqrt(−ln(δ/2) / (2m))，κ = σ̃ − α
4. required_samples：反解达到目标 κ 所需的最少样本数
5. verify：采样 m 个新的初始状态，闭环仿真，汇总成 VerificationReport
"""
from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from core.all_types import IndicatorCriteria, ProblemSpec, SimTrajectory, TrajectoryOutcome, VerificationReport
from core.exceptions import ConfigError, DimensionError, InfeasibleError
from core.files import write_text_atomic
from core.interfaces import SystemModel
from .neural import ParameterizedNet, PolicyNet
from .rollout import DEFAULT_STEPS, simulate_many
from .trainer import sample_initial_conditions

logger = logging.getLogger(__name__)

# 第一个违反项按此顺序判定
CRITERIA_ORDER = ("diverged", "state", "input", "lyapunov", "terminal")


def indicator_failures(trajectory: SimTrajectory, criteria: IndicatorCriteria) -> List[str]:
    """返回该轨迹违反的全部判据（按 CRITERIA_ORDER 排序）；空列表表示通过"""
    states, controls = trajectory.states, trajectory.controls
    if states.shape[1] != criteria.state_box.dim or controls.shape[1] != criteria.input_box.dim:
        raise DimensionError(
            f"轨迹维度 ({states.shape[1]}, {controls.shape[1]}) 与判据 "
            f"({criteria.state_box.dim}, {criteria.input_box.dim}) 不一致"
        )
    failures = []
    if trajectory.diverged:
        failures.append("diverged")
    if not criteria.state_box.contains(states).all():
        failures.append("state")
    if not criteria.input_box.contains(controls).all():
        failures.append("input")

    values = trajectory.lyapunov
    decreasing = np.diff(values) < -criteria.margin
    if criteria.equilibrium_tolerance is not None:
        # 原点附近（‖x_k‖∞ ≤ 容差）不要求严格下降
        near_origin = np.max(np.abs(states[:-1]), axis=1) <= criteria.equilibrium_tolerance
        decreasing |= near_origin
    if not decreasing.all():
        failures.append("lyapunov")

    if criteria.terminal_box is not None and not criteria.terminal_box.contains(states[-1]):
        failures.append("terminal")
    return failures


def evaluate_indicator(trajectory: SimTrajectory, criteria: IndicatorCriteria) -> int:
    return 0 if indicator_failures(trajectory, criteria) else 1


def empirical_risk(indicators: Iterable[int]) -> float:
    values = np.asarray(list(indicators), dtype=np.float64)
    if values.size == 0:
        raise ValueError("empirical_risk: 指示值集合为空")
    # 按下标顺序求和
    return float(math.fsum(values) / values.size)


def hoeffding_bound(sigma_tilde: float, delta: float, m: int) -> Tuple[float, float]:
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"δ 必须在 (0, 1) 内，收到 {delta}")
    if m < 1:
        raise ConfigError(f"样本数 m 必须 ≥ 1，收到 {m}")
    if not 0.0 <= sigma_tilde <= 1.0:
        raise ConfigError(f"σ̃ 必须在 [0, 1] 内，收到 {sigma_tilde}")
    alpha = math.sqrt(-math.log(delta / 2.0) / (2.0 * m))
    return alpha, sigma_tilde - alpha


def required_samples(sigma_target: float, kappa: float, delta: float) -> int:
    """最小的 m，使 σ̃ − sqrt(−ln(δ/2)/(2m)) ≥ κ"""
    if sigma_target <= kappa:
        raise InfeasibleError(f"σ̃_target={sigma_target} 必须大于 κ={kappa}")
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"δ 必须在 (0, 1) 内，收到 {delta}")
    gap = sigma_target - kappa
    m = max(1, math.ceil(-math.log(delta / 2.0) / (2.0 * gap * gap)))
    # 浮点误差修正，保证恰好是最小值
    while hoeffding_bound(sigma_target, delta, m)[1] < kappa:
        m += 1
    while m > 1 and hoeffding_bound(sigma_target, delta, m - 1)[1] >= kappa:
        m -= 1
    return m


def verify(policy: PolicyNet, V: ParameterizedNet, model: SystemModel, criteria: IndicatorCriteria,
           m: int, delta: float, seed: int, T: int = DEFAULT_STEPS, training_seed: Optional[int] = None,
           distribution: str = "normal", kappa_target: Optional[float] = None,
           spec: Optional[ProblemSpec] = None, threads: Optional[int] = None) -> VerificationReport:
    if criteria.state_box.dim != model.n_x or criteria.input_box.dim != model.n_u:
        raise DimensionError(
            f"判据维度 ({criteria.state_box.dim}, {criteria.input_box.dim}) 与模型 ({model.n_x}, {model.n_u}) 不一致"
        )
    # 先检查参数再做仿真
    hoeffding_bound(1.0, delta, m)
    if training_seed is not None and seed == training_seed:
        logger.warning("验证 seed (%d) 与训练 seed 相同，样本不独立，证书可能偏乐观", seed)

    samples = sample_initial_conditions(distribution, m, model.state_box, seed)
    trajectories = simulate_many(policy, V, model, samples.states, T, spec, threads)

    failures: Dict[str, int] = {name: 0 for name in CRITERIA_ORDER}
    outcomes: List[TrajectoryOutcome] = []
    for index, trajectory in enumerate(trajectories):
        violated = indicator_failures(trajectory, criteria)
        for name in violated:
            failures[name] += 1
        outcomes.append(TrajectoryOutcome(index, not violated, violated[0] if violated else None))

    sigma = empirical_risk(int(outcome.passed) for outcome in outcomes)
    alpha, kappa = hoeffding_bound(sigma, delta, m)
    needed = None
    if kappa_target is not None and sigma > kappa_target:
        needed = required_samples(sigma, kappa_target, delta)

    report = VerificationReport(
        m=m, sigma_tilde=sigma, delta=delta, alpha=alpha, kappa=kappa, vacuous=kappa <= 0.0,
        failures=failures, outcomes=outcomes, seed=seed, horizon=T,
        kappa_target=kappa_target, required_samples=needed,
    )
    logger.info("验证完成: m=%d σ̃=%.6f α=%.6f κ=%.6f%s", m, sigma, alpha, kappa,
                "（vacuous）" if report.vacuous else "")
    return report


def write_report(report: VerificationReport, path: Union[str, Path], include_outcomes: bool = True) -> Path:
    document = report.summary()
    if include_outcomes:
        document["outcomes"] = [
            {"index": o.index, "passed": o.passed, "first_violation": o.first_violation}
            for o in report.outcomes
        ]
    return write_text_atomic(path, json.dumps(document, indent=1))
