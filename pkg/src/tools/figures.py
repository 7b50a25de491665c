"""
图数据导出工具：export --ckpt PATH --what phase|surface|vdiff|all --grid R --out DIR
文件名固定为 phase.csv, field.csv, surface.csv, vdiff_learned.csv, vdiff_quadratic.csv
"""
from pathlib import Path
from typing import Any, Dict, List

from core import ToolMetadata
from control.checkpoint import Checkpoint
from control.config import RunConfig
from control.export import export_lyapunov_surface, export_phase_portrait, export_vdiff_maps
from control.rollout import DEFAULT_STEPS, default_slice_grid
from .common import ControlTool

EXPORT_KINDS = ("phase", "surface", "vdiff", "all")
DEFAULT_RESOLUTION = 101
DEFAULT_TRAJECTORIES = 20


def run_export(config: RunConfig, checkpoint: Checkpoint, out_dir, what: str = "all",
               resolution: int = DEFAULT_RESOLUTION, n_trajectories: int = DEFAULT_TRAJECTORIES,
               steps: int = DEFAULT_STEPS) -> List[str]:
    out_dir = Path(out_dir)
    model = config.build_model()
    grid = default_slice_grid(model.state_box, resolution)
    policy, V = checkpoint.policy, checkpoint.lyapunov
    written = []
    if what in ("phase", "all"):
        written += export_phase_portrait(policy, model, grid, n_trajectories, steps,
                                         out_dir / "phase.csv", out_dir / "field.csv")
    if what in ("surface", "all"):
        written.append(export_lyapunov_surface(V, grid, out_dir / "surface.csv"))
    if what in ("vdiff", "all"):
        written += export_vdiff_maps(V, policy, model, grid,
                                     out_dir / "vdiff_learned.csv", out_dir / "vdiff_quadratic.csv")
    return [str(path) for path in written]


class ExportTool(ControlTool):

    def get_metadata(self) -> ToolMetadata:
        return ToolMetadata(
            name="export",
            description="导出相图、Lyapunov 曲面和 V 差分稳定区域（含 xᵀx 对比）的 CSV 数据",
            parameters={
                "ckpt": {"type": "str", "required": True, "description": "检查点路径"},
                "what": {"type": "str", "required": False, "default": "all",
                         "validation": {"enum": list(EXPORT_KINDS)}},
                "grid": {"type": "int", "required": False, "default": DEFAULT_RESOLUTION,
                         "description": "每个切片维度的网格点数（≥ 2）"},
                "trajectories": {"type": "int", "required": False, "default": DEFAULT_TRAJECTORIES,
                                 "description": "相图中从切片边界出发的轨迹条数"},
                "steps": {"type": "int", "required": False, "default": DEFAULT_STEPS},
                "config": {"type": "str", "required": False,
                           "description": "运行配置，默认使用检查点中保存的配置"},
                "out": {"type": "str", "required": True, "description": "输出目录"},
            },
            return_type="dict",
            category="evaluation",
            return_description={"files": "写出的 CSV 文件列表"},
            tags=["export", "csv", "figures"],
        )

    def validate_parameters(self, **kwargs) -> bool:
        if not self._require(kwargs, "ckpt", "out"):
            return False
        what = kwargs.get("what", "all")
        if what not in EXPORT_KINDS:
            return self._fail(f"未知的导出类型 '{what}'，可选: {', '.join(EXPORT_KINDS)}")
        grid = kwargs.get("grid", DEFAULT_RESOLUTION)
        if not isinstance(grid, int) or grid < 2:
            return self._fail(f"grid 必须是 ≥ 2 的整数，收到 {grid!r}")
        trajectories = kwargs.get("trajectories", DEFAULT_TRAJECTORIES)
        if not isinstance(trajectories, int) or trajectories < 0:
            return self._fail(f"trajectories 必须是非负整数，收到 {trajectories!r}")
        steps = kwargs.get("steps", DEFAULT_STEPS)
        if not isinstance(steps, int) or steps < 1:
            return self._fail(f"steps 必须是正整数，收到 {steps!r}")
        if not self._writable_dir(kwargs["out"], "out"):
            return False
        if not self._load_checkpoint(kwargs["ckpt"]):
            return False
        return self._config_for_checkpoint(kwargs.get("config"))

    def _execute_impl(self, **kwargs) -> Dict[str, Any]:
        files = run_export(self._config, self._checkpoint, kwargs["out"], kwargs.get("what", "all"),
                           kwargs.get("grid", DEFAULT_RESOLUTION),
                           kwargs.get("trajectories", DEFAULT_TRAJECTORIES),
                           kwargs.get("steps", DEFAULT_STEPS))
        return {"files": files, "count": len(files)}
