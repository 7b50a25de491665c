from abc import ABC, abstractmethod
from typing import Dict, Any, Optional
import logging
import time

import numpy as np

from .all_types import Box, ToolMetadata, ToolResult
from .autodiff import Tape, TapeNode
from .exceptions import DimensionError

LOG_LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
}


class BaseTool(ABC):  # 所有命令工具（train / simulate / verify / export / run）都继承这个基类
    """
    工具基类 - 所有具体命令工具都必须继承此类

    作用：
    1. 定义所有工具的标准接口
    2. 提供通用的功能（参数验证、错误处理、日志等）
    3. 确保所有工具都有一致的行为模式
    """

    def __init__(self, log_queue=None):
        """
        参数:
            log_queue: 日志队列（任何带 put 方法的对象），用于把进度转发给其他进程
        """
        self.log_queue = log_queue
        self.logger = logging.getLogger(self.__class__.__name__)

    @abstractmethod
    def get_metadata(self) -> ToolMetadata:
        """返回工具元数据：名称、参数定义、返回值说明"""
        pass

    @abstractmethod
    def _execute_impl(self, **kwargs) -> Any:
        """工具的核心执行逻辑，只关注业务，不处理通用逻辑"""
        pass

    @abstractmethod
    def validate_parameters(self, **kwargs) -> bool:
        """
        验证输入参数是否符合要求

        实现约定：
        1. 检查必需参数是否存在、文件是否可读
        2. 在任何耗时计算或写文件之前完成维度一致性检查
        3. 失败时通过 self.log(..., "error") 说明原因并返回 False
        """
        pass

    def is_available(self) -> bool:
        """检查工具依赖是否满足；默认可用"""
        return True

    def execute(self, **kwargs) -> ToolResult:
        """
        统一的工具执行入口

        实现逻辑：
        1. 记录开始时间
        2. 验证输入参数
        3. 调用 _execute_impl() 执行具体逻辑
        4. 捕获异常并记录异常类型（命令行据此决定退出码）
        5. 返回标准化的 ToolResult
        """
        start_time = time.time()
        tool_name = self.__class__.__name__

        self.log(f"开始执行工具: {tool_name}", "info")
        if kwargs:
            self.log(f"输入参数: {self._sanitize_log_params(kwargs)}", "debug")

        result = ToolResult(
            success=False,
            data=None,
            error_message=None,
            execution_time=0.0,
            metadata={},
            tool_name=tool_name,
            timestamp=start_time,
        )

        try:
            if not self.validate_parameters(**kwargs):
                result.error_message = "输入参数验证失败"
                result.error_type = "ConfigError"
                self.log(f"错误: {result.error_message}", "error")
                return result

            result.data = self._execute_impl(**kwargs)
            result.success = True
            result.metadata = {
                "tool_version": self.get_metadata().version,
                "input_params_count": len(kwargs),
            }
            self.log("工具执行成功完成", "info")

        except Exception as e:
            result.error_type = type(e).__name__
            result.error_message = f"{result.error_type}: {e}"
            self.log(f"错误: {result.error_message}", "error")
            self.logger.debug("详细错误信息", exc_info=True)

        finally:
            result.execution_time = time.time() - start_time
            status = "成功" if result.success else "失败"
            self.log(f"工具执行{status}，耗时: {result.execution_time:.3f}秒", "info")

        return result

    def _sanitize_log_params(self, params: Dict[str, Any]) -> Dict[str, Any]:
        """
        过滤日志参数：
        1. 名称像密钥的参数只显示类型
        2. 数组和长列表只显示形状 / 长度
        """
        sensitive_keywords = {'password', 'secret', 'token', 'api_key', 'credential'}
        safe_params = {}
        for key, value in params.items():
            if any(keyword in key.lower() for keyword in sensitive_keywords):
                safe_params[key] = f"<{type(value).__name__}:hidden>"
            elif isinstance(value, np.ndarray):
                safe_params[key] = f"<ndarray:shape={value.shape}>"
            elif isinstance(value, (list, dict)) and len(str(value)) > 200:
                safe_params[key] = f"<{type(value).__name__}:length={len(value)}>"
            else:
                safe_params[key] = value
        return safe_params

    def log(self, message: str, level: str = "info"):
        """写本地日志；如有 log_queue，同时把 "[LEVEL] 工具名: 消息" 放进队列"""
        self.logger.log(LOG_LEVELS.get(level, logging.INFO), message)
        if self.log_queue is not None and level != "debug":
            self.log_queue.put(f"[{level.upper()}] {self.__class__.__name__}: {message}")


class SystemModel(ABC):
    """
    离散时间系统模型 x_{k+1} = f(x_k, u_k)

    约定：
    1. step 必须用 tape 算子表达，以便对 x 和 u 求导
    2. step 是确定性的纯函数，模型构造后不可变
    3. state_box / input_box 即约束 h(x) ≤ 0、g(u) ≤ 0
    """

    def __init__(self, n_x: int, n_u: int, state_box: Box, input_box: Box):
        if state_box.dim != n_x or input_box.dim != n_u:
            raise DimensionError(
                f"约束维度与模型不一致: state_box {state_box.dim} vs n_x {n_x}, input_box {input_box.dim} vs n_u {n_u}"
            )
        self.n_x = n_x
        self.n_u = n_u
        self.state_box = state_box
        self.input_box = input_box

    @abstractmethod
    def step(self, x: TapeNode, u: TapeNode) -> TapeNode:
        """一步状态转移，x 为 (n_x, m)，u 为 (n_u, m)"""
        pass

    @abstractmethod
    def describe(self) -> Dict[str, Any]:
        """返回模型描述（配置文件中 system 段的格式）"""
        pass

    def check_dims(self, x: TapeNode, u: TapeNode) -> None:
        if x.rows != self.n_x or u.rows != self.n_u or x.cols != u.cols:
            raise DimensionError(
                f"step: 期望 x ({self.n_x}, m) 与 u ({self.n_u}, m)，收到 {x.shape} 与 {u.shape}"
            )

    def step_numeric(self, x, u) -> np.ndarray:
        """不记录梯度的数值一步；x, u 可以是一维向量或按列排列的批量"""
        tape = Tape(grad_enabled=False)
        x_node, u_node = tape.constant(x), tape.constant(u)
        result = self.step(x_node, u_node).value
        return result[:, 0] if np.ndim(x) == 1 else result

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(n_x={self.n_x}, n_u={self.n_u})"
