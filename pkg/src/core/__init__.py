"""
核心模块统一导出接口
作用：提供清晰的导入路径
"""
from .all_types import (
    Box,
    EpochRecord,
    GridSpec,
    IndicatorCriteria,
    ProblemSpec,
    PvtolParams,
    SampleSet,
    SimTrajectory,
    ToolMetadata,
    ToolResult,
    TrainConfig,
    TrajectoryOutcome,
    VerificationReport,
)
from .interfaces import BaseTool, SystemModel
from .tool_manager import ToolManager
from .exceptions import (
    NldpcError,
    DimensionError,
    NumericError,
    ConfigError,
    CheckpointError,
    CheckpointVersionError,
    InfeasibleError,
    ToolRegistrationError,
    ToolNotFoundError,
)

__all__ = [
    'Box', 'EpochRecord', 'GridSpec', 'IndicatorCriteria', 'ProblemSpec', 'PvtolParams',
    'SampleSet', 'SimTrajectory', 'ToolMetadata', 'ToolResult', 'TrainConfig',
    'TrajectoryOutcome', 'VerificationReport',
    'BaseTool', 'SystemModel',
    'ToolManager',
    'NldpcError', 'DimensionError', 'NumericError', 'ConfigError', 'CheckpointError',
    'CheckpointVersionError', 'InfeasibleError', 'ToolRegistrationError', 'ToolNotFoundError',
]
