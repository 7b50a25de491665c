"""
CSV 数据导出
作用：输出相图（轨迹 + 向量场）、Lyapunov 曲面、V 差分稳定区域图（学习到的 V 与 xᵀx 对比）、
      闭环时间序列和训练损失曲线，供外部绘图使用

格式约定：
1. 第一行是表头
2. 浮点数用十进制、17 位有效数字，读回后与内存值完全相同
3. 网格按 (i, j) 行优先输出，i 在外层
4. 状态列按维度编号命名（x1, x2, ...），切片列名取实际维度，例如 PVTOL 速度切片为 x4, x5
"""
from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from core.all_types import EpochRecord, GridSpec, SimTrajectory
from core.exceptions import DimensionError
from core.interfaces import SystemModel
from .neural import ParameterizedNet, PolicyNet, QuadraticLyapunov
from .rollout import closed_loop_step, lyapunov_difference_field, simulate_batch

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def format_float(value: float) -> str:
    return format(float(value), ".17g")


def _write_rows(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        count = 0
        for row in rows:
            writer.writerow([format_float(cell) if isinstance(cell, float) else cell for cell in row])
            count += 1
    logger.info("已写入 %s（%d 行）", path, count)
    return path


def _slice_names(grid: GridSpec) -> List[str]:
    return [f"x{d + 1}" for d in grid.dims]


def _check_grid(grid: GridSpec, n_x: int) -> None:
    if grid.fixed.size != n_x:
        raise DimensionError(f"网格维度 {grid.fixed.size} 与状态维度 {n_x} 不一致")


def fringe_points(grid: GridSpec, count: int) -> np.ndarray:
    """沿切片矩形边界等间距取 count 个初始状态"""
    (lo_i, hi_i), (lo_j, hi_j) = grid.ranges
    width, height = hi_i - lo_i, hi_j - lo_j
    perimeter = 2.0 * (width + height)
    points = np.tile(grid.fixed, (count, 1))
    for n, s in enumerate(np.arange(count) * perimeter / max(count, 1)):
        if s < width:
            a, b = lo_i + s, lo_j
        elif s < width + height:
            a, b = hi_i, lo_j + (s - width)
        elif s < 2 * width + height:
            a, b = hi_i - (s - width - height), hi_j
        else:
            a, b = lo_i, hi_j - (s - 2 * width - height)
        points[n, grid.dims[0]] = a
        points[n, grid.dims[1]] = b
    return points


def export_phase_portrait(policy: PolicyNet, model: SystemModel, grid: GridSpec, n_trajectories: int, T: int,
                          path: PathLike, field_path: Optional[PathLike] = None) -> List[Path]:
    """
    相图：
    - path: traj_id,k,x_i,x_j：从切片边界出发的闭环轨迹（n_trajectories 为 0 时不写）
    - field_path: x_i,x_j,dx_i,dx_j：网格上一步闭环位移（默认与 path 同目录的 field.csv）
    """
    _check_grid(grid, model.n_x)
    i, j = grid.dims
    name_i, name_j = _slice_names(grid)
    written = []

    if n_trajectories > 0:
        starts = fringe_points(grid, n_trajectories)
        trajectories = simulate_batch(policy, QuadraticLyapunov(model.n_x), model, starts, T)
        rows = (
            (traj_id, k, float(state[i]), float(state[j]))
            for traj_id, trajectory in enumerate(trajectories)
            for k, state in enumerate(trajectory.states)
        )
        written.append(_write_rows(path, ["traj_id", "k", name_i, name_j], rows))

    X = grid.points().T
    displacement = closed_loop_step(policy, model, X) - X
    rows = (
        (float(X[i, n]), float(X[j, n]), float(displacement[i, n]), float(displacement[j, n]))
        for n in range(X.shape[1])
    )
    field_path = Path(field_path) if field_path is not None else Path(path).with_name("field.csv")
    written.append(_write_rows(field_path, [name_i, name_j, f"d{name_i}", f"d{name_j}"], rows))
    return written


def export_lyapunov_surface(V: ParameterizedNet, grid: GridSpec, path: PathLike) -> Path:
    _check_grid(grid, V.n_x)
    points = grid.points()
    values = V.evaluate(points.T)[0]
    i, j = grid.dims
    name_i, name_j = _slice_names(grid)
    rows = ((float(p[i]), float(p[j]), float(v)) for p, v in zip(points, values))
    return _write_rows(path, [name_i, name_j, "V"], rows)


def export_vdiff_maps(V: ParameterizedNet, policy: PolicyNet, model: SystemModel, grid: GridSpec,
                      path_learned: PathLike, path_quadratic: PathLike) -> List[Path]:
    """两份文件的 (x_i, x_j) 行顺序相同；ΔV = V(f(x, π(x))) − V(x)"""
    _check_grid(grid, model.n_x)
    points = grid.points()
    i, j = grid.dims
    name_i, name_j = _slice_names(grid)
    written = []
    for candidate, path in ((V, path_learned), (QuadraticLyapunov(model.n_x), path_quadratic)):
        difference = lyapunov_difference_field(candidate, policy, model, grid).reshape(-1)
        rows = ((float(p[i]), float(p[j]), float(d)) for p, d in zip(points, difference))
        written.append(_write_rows(path, [name_i, name_j, "dV"], rows))
    return written


def export_trajectory(sim: SimTrajectory, path: PathLike) -> Path:
    """k,x1..xn,u1..um,V,stage_loss；最后一行（终态）控制和阶段代价留空"""
    n_x = sim.states.shape[1]
    n_u = sim.controls.shape[1]
    header = ["k", *[f"x{d + 1}" for d in range(n_x)], *[f"u{d + 1}" for d in range(n_u)], "V", "stage_loss"]

    def rows():
        for k, state in enumerate(sim.states):
            if k < sim.steps:
                controls = [float(u) for u in sim.controls[k]]
                stage = [float(sim.stage_losses[k])]
            else:
                controls = [""] * n_u
                stage = [""]
            yield [k, *(float(x) for x in state), *controls, float(sim.lyapunov[k]), *stage]

    return _write_rows(path, header, rows())


def write_loss_history(history: Sequence[EpochRecord], path: PathLike) -> Path:
    rows = (
        (record.epoch, float(record.train_loss), "" if record.val_loss is None else float(record.val_loss))
        for record in history
    )
    return _write_rows(path, ["epoch", "train_loss", "val_loss"], rows)


def read_csv(path: PathLike) -> List[dict]:
    """读回导出的 CSV（空字段保持为空字符串，其余转为 float）"""
    with Path(path).open(newline="", encoding="utf-8") as handle:
        return [
            {key: (float(value) if value != "" else value) for key, value in row.items()}
            for row in csv.DictReader(handle)
        ]
