"""
训练工具
作用：读取运行配置，训练策略和 Lyapunov 函数，保存检查点（最终参数 + 最优验证参数）和损失曲线 CSV
"""
from pathlib import Path
from typing import Any, Dict, Optional

from core import ToolMetadata
from control.checkpoint import save_checkpoint
from control.config import RunConfig
from control.export import write_loss_history
from control.trainer import train
from .common import ControlTool


def default_loss_path(checkpoint_path) -> Path:
    path = Path(checkpoint_path)
    return path.with_name(f"{path.stem}_loss.csv")


def best_checkpoint_path(checkpoint_path) -> Path:
    path = Path(checkpoint_path)
    return path.with_name(f"{path.stem}.best{path.suffix or '.json'}")


def run_training(config: RunConfig, out, loss_csv=None, show_progress: bool = True,
                 log=None) -> Dict[str, Any]:
    """训练并写出检查点与损失曲线；返回结果摘要"""
    model = config.build_model()
    spec = config.build_problem()
    policy = config.build_policy()
    V = config.build_lyapunov()
    train_config = config.build_train_config()
    if log:
        log(f"开始训练: system={config.system.type}, epochs={train_config.epochs}, "
            f"n_train={train_config.n_train}, policy 参数 {policy.parameter_count()} 个, "
            f"lyapunov 参数 {V.parameter_count()} 个", "info")

    result = train(model, spec, policy, V, train_config, show_progress=show_progress)

    meta = {
        "config": config.model_dump(mode="json"),
        "epochs": len(result.history),
        "final_train_loss": result.final_train_loss,
        "final_val_loss": result.history[-1].val_loss,
        "best_val_loss": result.best_val_loss,
        "best_epoch": result.best_epoch,
    }
    checkpoint = save_checkpoint(result.policy, result.lyapunov, meta, out, seed=config.seed)
    best = save_checkpoint(result.best_policy, result.best_lyapunov, {**meta, "retained": "best_val"},
                           best_checkpoint_path(out), seed=config.seed)
    loss_path = write_loss_history(result.history, loss_csv or default_loss_path(out))

    return {
        "checkpoint": str(checkpoint),
        "best_checkpoint": str(best),
        "loss_csv": str(loss_path),
        "epochs": len(result.history),
        "final_train_loss": result.final_train_loss,
        "best_val_loss": result.best_val_loss,
        "best_epoch": result.best_epoch,
    }


class TrainTool(ControlTool):
    """训练命令：train --config PATH --out CKPT [--loss-csv PATH]"""

    def get_metadata(self) -> ToolMetadata:
        return ToolMetadata(
            name="train",
            description="采样初始状态，反向传播 NLDPC 损失，用 AdamW 同时训练神经策略和 Lyapunov 函数",
            parameters={
                "config": {"type": "str", "required": True, "description": "JSON 运行配置路径",
                           "example": "config/di.json"},
                "out": {"type": "str", "required": True, "description": "检查点输出路径",
                        "example": "runs/di.json"},
                "loss_csv": {"type": "str", "required": False,
                             "description": "损失曲线 CSV 路径，默认 <out>_loss.csv"},
                "epochs": {"type": "int", "required": False, "description": "覆盖配置中的 epochs"},
                "show_progress": {"type": "bool", "required": False, "default": True,
                                  "description": "是否显示 tqdm 进度条"},
            },
            return_type="dict",
            category="training",
            return_description={
                "checkpoint": "最终参数检查点",
                "best_checkpoint": "验证损失最小的参数检查点",
                "loss_csv": "epoch,train_loss,val_loss",
            },
            tags=["nldpc", "adamw", "training"],
        )

    def validate_parameters(self, **kwargs) -> bool:
        if not self._require(kwargs, "config", "out"):
            return False
        if not self._load_config(kwargs["config"]):
            return False
        epochs = kwargs.get("epochs")
        if epochs is not None:
            if not isinstance(epochs, int) or epochs < 1:
                return self._fail(f"epochs 必须是正整数，收到 {epochs!r}")
            self._config = self._config.model_copy(
                update={"training": self._config.training.model_copy(update={"epochs": epochs})}
            )
        if Path(kwargs["out"]).is_dir():
            return self._fail(f"out 是目录，需要文件路径: {kwargs['out']}")
        return True

    def _execute_impl(self, **kwargs) -> Dict[str, Any]:
        data = run_training(self._config, kwargs["out"], kwargs.get("loss_csv"),
                            show_progress=kwargs.get("show_progress", True), log=self.log)
        self.log(f"训练完成: final_train_loss={data['final_train_loss']:.6g}", "info")
        return data
