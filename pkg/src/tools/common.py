"""
命令工具的公共部分
作用：参数校验辅助、配置 / 检查点加载、结果摘要表格
"""
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from tabulate import tabulate

from core import BaseTool, CheckpointError, ConfigError
from control.checkpoint import Checkpoint, load_checkpoint
from control.config import RunConfig, load_run_config


class ControlTool(BaseTool):
    """
    数值命令工具基类
    validate_parameters 中加载的配置 / 检查点暂存在实例上，_execute_impl 直接使用
    """

    def __init__(self, log_queue=None):
        super().__init__(log_queue)
        self._config: Optional[RunConfig] = None
        self._checkpoint: Optional[Checkpoint] = None

    def _fail(self, message: str) -> bool:
        self.log(f"错误: {message}", "error")
        return False

    def _require(self, kwargs: Dict[str, Any], *names: str) -> bool:
        for name in names:
            if kwargs.get(name) in (None, ""):
                return self._fail(f"缺少必需参数: {name}")
        return True

    def _load_config(self, path) -> bool:
        try:
            self._config = load_run_config(path)
        except ConfigError as e:
            return self._fail(str(e))
        return True

    def _load_checkpoint(self, path) -> bool:
        try:
            self._checkpoint = load_checkpoint(path)
        except CheckpointError as e:
            return self._fail(str(e))
        return True

    def _config_for_checkpoint(self, config_path=None) -> bool:
        """显式给出的配置优先，否则使用检查点里保存的配置，并核对网络维度"""
        if config_path:
            if not self._load_config(config_path):
                return False
        else:
            try:
                self._config = self._checkpoint.run_config()
            except CheckpointError as e:
                return self._fail(str(e))
        policy = self._checkpoint.policy
        if policy.n_x != self._config.system.n_x or policy.n_u != self._config.system.n_u:
            return self._fail(
                f"检查点策略维度 ({policy.n_x}, {policy.n_u}) 与配置 "
                f"({self._config.system.n_x}, {self._config.system.n_u}) 不一致"
            )
        if policy.horizon != self._config.problem.N:
            return self._fail(f"检查点策略时域 N={policy.horizon} 与配置 N={self._config.problem.N} 不一致")
        return True

    def _writable_dir(self, path, name: str) -> bool:
        target = Path(path)
        if target.exists() and not target.is_dir():
            return self._fail(f"{name} 不是目录: {target}")
        return True

    def is_available(self) -> bool:
        return True


def parse_vector(text) -> np.ndarray:
    """'v1,v2,...' 或数值序列 -> 一维数组；解析失败抛 ConfigError"""
    if isinstance(text, str):
        parts = [part.strip() for part in text.split(",")]
        try:
            values = [float(part) for part in parts]
        except ValueError as e:
            raise ConfigError(f"无法解析向量 '{text}': {e}") from e
    else:
        values = [float(v) for v in text]
    vector = np.asarray(values, dtype=np.float64)
    if vector.size == 0 or not np.all(np.isfinite(vector)):
        raise ConfigError(f"向量必须非空且有限: {text}")
    return vector


def format_summary(data: Dict[str, Any], skip: Sequence[str] = ("outcomes",)) -> str:
    rows: List[List[Any]] = []
    for key, value in data.items():
        if key in skip:
            continue
        if isinstance(value, float):
            value = f"{value:.6g}"
        elif isinstance(value, dict):
            value = ", ".join(f"{k}={v}" for k, v in value.items())
        elif isinstance(value, (list, tuple)):
            value = ", ".join(str(v) for v in value)
        rows.append([key, value])
    return tabulate(rows, headers=["字段", "值"], tablefmt="simple")


def format_tool_table(manager, category: Optional[str] = None) -> str:
    """命令列表；给定 category 时只列该分类，未知分类抛 ConfigError"""
    if category is None:
        listed = manager.list_available_tools()
    else:
        if category.strip().lower() not in manager.get_categories():
            raise ConfigError(f"未知命令分类 '{category}'，可选: {manager.get_categories()}")
        listed = [tool.get_metadata() for tool in manager.get_tools_by_category(category)]
    rows = [[meta.name, meta.category, meta.description] for meta in listed]
    table = tabulate(rows, headers=["命令", "分类", "说明"], tablefmt="simple")
    return f"{table}\n\n共 {len(rows)} / {manager.get_tool_count()} 个命令"
