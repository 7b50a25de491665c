"""
概率验证工具：verify --ckpt PATH [--config PATH] --samples m --delta δ --out REPORT
证书 vacuous（κ ≤ 0）时工具本身仍然成功，data["vacuous"] 为 True，由命令行映射为退出码 4
"""
from typing import Any, Dict, Optional

from core import ToolMetadata
from control.checkpoint import Checkpoint
from control.config import RunConfig
from control.verifier import verify, write_report
from .common import ControlTool


def run_verification(config: RunConfig, checkpoint: Checkpoint, out, samples: Optional[int] = None,
                     delta: Optional[float] = None, steps: Optional[int] = None,
                     seed: Optional[int] = None) -> Dict[str, Any]:
    v = config.verification
    model = config.build_model()
    report = verify(
        checkpoint.policy, checkpoint.lyapunov, model, config.build_criteria(),
        m=samples if samples is not None else v.samples,
        delta=delta if delta is not None else v.delta,
        seed=seed if seed is not None else config.verification_seed(),
        T=steps if steps is not None else v.steps,
        training_seed=checkpoint.seed,
        distribution=config.training.distribution,
        kappa_target=v.kappa_target,
        spec=config.build_problem(),
    )
    path = write_report(report, out)
    return {**report.summary(), "report": str(path)}


class VerifyTool(ControlTool):

    def get_metadata(self) -> ToolMetadata:
        return ToolMetadata(
            name="verify",
            description="采样新的初始状态做闭环仿真，按 Hoeffding 不等式给出约束满足和 Lyapunov 下降的概率下界 κ",
            parameters={
                "ckpt": {"type": "str", "required": True, "description": "检查点路径"},
                "config": {"type": "str", "required": False,
                           "description": "运行配置，默认使用检查点中保存的配置"},
                "samples": {"type": "int", "required": False, "description": "样本数 m，默认取配置"},
                "delta": {"type": "float", "required": False, "description": "置信参数 δ ∈ (0, 1)"},
                "steps": {"type": "int", "required": False, "description": "闭环仿真步数 T"},
                "seed": {"type": "int", "required": False, "description": "验证采样 seed，默认训练 seed + 1"},
                "out": {"type": "str", "required": True, "description": "报告 JSON 输出路径"},
            },
            return_type="dict",
            category="evaluation",
            return_description={
                "sigma_tilde": "通过率", "alpha": "Hoeffding 裕度", "kappa": "概率下界",
                "vacuous": "κ ≤ 0 时为 True", "failures": "各判据失败次数",
            },
            tags=["verification", "hoeffding"],
        )

    def validate_parameters(self, **kwargs) -> bool:
        if not self._require(kwargs, "ckpt", "out"):
            return False
        delta = kwargs.get("delta")
        if delta is not None and not (isinstance(delta, (int, float)) and 0.0 < delta < 1.0):
            return self._fail(f"delta 必须在 (0, 1) 内，收到 {delta!r}")
        for name in ("samples", "steps"):
            value = kwargs.get(name)
            if value is not None and (not isinstance(value, int) or value < 1):
                return self._fail(f"{name} 必须是正整数，收到 {value!r}")
        if not self._load_checkpoint(kwargs["ckpt"]):
            return False
        return self._config_for_checkpoint(kwargs.get("config"))

    def _execute_impl(self, **kwargs) -> Dict[str, Any]:
        data = run_verification(self._config, self._checkpoint, kwargs["out"], kwargs.get("samples"),
                                kwargs.get("delta"), kwargs.get("steps"), kwargs.get("seed"))
        if data["vacuous"]:
            self.log(f"证书 vacuous: κ={data['kappa']:.6g} ≤ 0", "warning")
        return data
