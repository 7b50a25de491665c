"""
完整实验工具：run --config PATH --out DIR
依次执行训练 → 测试集闭环仿真 → 概率验证 → 全部图数据导出，所有产物写入 DIR：
    checkpoint.json, checkpoint.best.json, loss.csv, report.json,
    phase.csv, field.csv, surface.csv, vdiff_learned.csv, vdiff_quadratic.csv
"""
from pathlib import Path
from typing import Any, Dict

from core import ToolMetadata
from control.checkpoint import load_checkpoint
from .common import ControlTool
from .figures import run_export
from .simulation import run_test_rollouts
from .training import run_training
from .verification import run_verification


class RunExperimentTool(ControlTool):

    def get_metadata(self) -> ToolMetadata:
        return ToolMetadata(
            name="run",
            description="按一个预设配置完整复现一次实验：训练、验证、导出",
            parameters={
                "config": {"type": "str", "required": True, "description": "JSON 运行配置路径",
                           "example": "config/di.json"},
                "out": {"type": "str", "required": True, "description": "输出目录"},
                "epochs": {"type": "int", "required": False, "description": "覆盖配置中的 epochs"},
                "grid": {"type": "int", "required": False, "default": 101},
                "show_progress": {"type": "bool", "required": False, "default": True},
            },
            return_type="dict",
            category="experiment",
            return_description={"training": "训练摘要", "test": "测试集收敛率 / 收缩率 / 发散率",
                                "verification": "验证摘要", "files": "导出的文件"},
            tags=["experiment", "pipeline"],
        )

    def validate_parameters(self, **kwargs) -> bool:
        if not self._require(kwargs, "config", "out"):
            return False
        epochs = kwargs.get("epochs")
        if epochs is not None and (not isinstance(epochs, int) or epochs < 1):
            return self._fail(f"epochs 必须是正整数，收到 {epochs!r}")
        grid = kwargs.get("grid", 101)
        if not isinstance(grid, int) or grid < 2:
            return self._fail(f"grid 必须是 ≥ 2 的整数，收到 {grid!r}")
        if not self._writable_dir(kwargs["out"], "out"):
            return False
        if not self._load_config(kwargs["config"]):
            return False
        if epochs is not None:
            self._config = self._config.model_copy(
                update={"training": self._config.training.model_copy(update={"epochs": epochs})}
            )
        return True

    def _execute_impl(self, **kwargs) -> Dict[str, Any]:
        out_dir = Path(kwargs["out"])
        out_dir.mkdir(parents=True, exist_ok=True)

        self.log("阶段 1/4: 训练", "info")
        training = run_training(self._config, out_dir / "checkpoint.json", out_dir / "loss.csv",
                                show_progress=kwargs.get("show_progress", True), log=self.log)

        checkpoint = load_checkpoint(training["checkpoint"])
        self.log("阶段 2/4: 测试集闭环仿真", "info")
        test = run_test_rollouts(self._config, checkpoint)

        self.log("阶段 3/4: 验证", "info")
        verification = run_verification(self._config, checkpoint, out_dir / "report.json")

        self.log("阶段 4/4: 导出图数据", "info")
        files = run_export(self._config, checkpoint, out_dir, "all", kwargs.get("grid", 101))

        return {
            "training": {k: training[k] for k in ("final_train_loss", "best_val_loss", "epochs")},
            "test": test,
            "verification": {k: verification[k] for k in ("sigma_tilde", "alpha", "kappa", "failures")},
            "vacuous": verification["vacuous"],
            "files": [training["checkpoint"], training["best_checkpoint"], training["loss_csv"],
                      verification["report"], *files],
        }
