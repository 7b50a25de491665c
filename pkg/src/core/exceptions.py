"""
自定义异常模块
作用：定义系统特定的异常类型
原则：库代码只抛异常，工具层（BaseTool.execute）负责把异常转换成 ToolResult
"""


class NldpcError(Exception):
    """系统基础异常"""
    pass


class DimensionError(NldpcError, ValueError):
    """维度不匹配异常，消息中包含双方的形状"""
    pass


class NumericError(NldpcError, ArithmeticError):
    """数值异常（NaN / Inf），消息中指出第一个出问题的节点或 epoch/batch"""
    pass


class ConfigError(NldpcError, ValueError):
    """配置或命令行参数无效"""
    pass


class CheckpointError(NldpcError):
    """检查点文件格式错误"""
    pass


class CheckpointVersionError(CheckpointError):
    """检查点版本不兼容"""
    pass


class InfeasibleError(NldpcError, ValueError):
    """目标不可达（例如 required_samples 中 σ̃_target ≤ κ）"""
    pass


class ToolRegistrationError(NldpcError):
    """工具注册异常"""
    pass


class ToolNotFoundError(NldpcError):
    """工具未找到异常"""
    pass
