"""
闭环仿真工具：simulate --ckpt PATH --x0 "v1,v2,..." --steps T --out CSV
"""
from typing import Any, Dict, Optional

import numpy as np

from core import ConfigError, ToolMetadata
from control.checkpoint import Checkpoint
from control.config import RunConfig
from control.export import export_trajectory
from control.rollout import DEFAULT_STEPS, simulate_closed_loop, simulate_many, trajectory_summary
from control.trainer import sample_splits
from .common import ControlTool, parse_vector


def run_test_rollouts(config: RunConfig, checkpoint: Checkpoint, steps: Optional[int] = None) -> Dict[str, Any]:
    """
    在训练时切出的测试集上做闭环仿真（与训练 / 验证样本同一次采样，互不重叠）
    步数默认取 verification.steps
    """
    model = config.build_model()
    test_states = sample_splits(config.build_train_config(), model.state_box)["test"].states
    T = steps if steps is not None else config.verification.steps
    tolerance = config.verification.equilibrium_tolerance
    if test_states.shape[0] == 0:
        return {"samples": 0, "steps": T, **trajectory_summary([])}
    trajectories = simulate_many(checkpoint.policy, checkpoint.lyapunov, model, test_states, T,
                                 config.build_problem())
    summary = trajectory_summary(trajectories, tolerance if tolerance is not None else 0.1)
    return {"samples": len(trajectories), "steps": T, **summary}


class SimulateTool(ControlTool):

    def __init__(self, log_queue=None):
        super().__init__(log_queue)
        self._x0 = None

    def get_metadata(self) -> ToolMetadata:
        return ToolMetadata(
            name="simulate",
            description="从给定初始状态做滚动时域闭环仿真，输出状态、控制、V 和阶段代价的时间序列",
            parameters={
                "ckpt": {"type": "str", "required": True, "description": "检查点路径"},
                "x0": {"type": "str", "required": True, "description": "逗号分隔的初始状态",
                       "example": "5,-3"},
                "steps": {"type": "int", "required": False, "default": DEFAULT_STEPS,
                          "description": "闭环仿真步数"},
                "out": {"type": "str", "required": True, "description": "轨迹 CSV 输出路径"},
                "config": {"type": "str", "required": False,
                           "description": "运行配置，默认使用检查点中保存的配置"},
            },
            return_type="dict",
            category="evaluation",
            return_description={"trajectory_csv": "k,x1..xn,u1..um,V,stage_loss"},
            tags=["simulation", "receding-horizon"],
        )

    def validate_parameters(self, **kwargs) -> bool:
        if not self._require(kwargs, "ckpt", "x0", "out"):
            return False
        steps = kwargs.get("steps", DEFAULT_STEPS)
        if not isinstance(steps, int) or steps < 1:
            return self._fail(f"steps 必须是正整数，收到 {steps!r}")
        try:
            self._x0 = parse_vector(kwargs["x0"])
        except ConfigError as e:
            return self._fail(str(e))
        if not self._load_checkpoint(kwargs["ckpt"]):
            return False
        if not self._config_for_checkpoint(kwargs.get("config")):
            return False
        if self._x0.size != self._config.system.n_x:
            return self._fail(f"x0 长度 {self._x0.size} 与状态维度 {self._config.system.n_x} 不一致")
        return True

    def _execute_impl(self, **kwargs) -> Dict[str, Any]:
        model = self._config.build_model()
        spec = self._config.build_problem()
        trajectory = simulate_closed_loop(self._checkpoint.policy, self._checkpoint.lyapunov, model,
                                          self._x0, kwargs.get("steps", DEFAULT_STEPS), spec)
        path = export_trajectory(trajectory, kwargs["out"])
        final = trajectory.states[-1]
        if trajectory.diverged:
            self.log(f"轨迹在第 {trajectory.steps} 步发散", "warning")
        return {
            "trajectory_csv": str(path),
            "steps": trajectory.steps,
            "diverged": trajectory.diverged,
            "final_state": final.tolist(),
            "final_norm_inf": float(np.max(np.abs(final))),
            "final_V": float(trajectory.lyapunov[-1]),
            "input_violations": int(trajectory.input_violations.sum()),
        }
