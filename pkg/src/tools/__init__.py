"""
工具模块统一导出
作用：简化工具导入，每个命令行子命令对应一个工具
"""
from .training import TrainTool
from .simulation import SimulateTool
from .verification import VerifyTool
from .figures import ExportTool
from .experiment import RunExperimentTool

ALL_TOOLS = (TrainTool, SimulateTool, VerifyTool, ExportTool, RunExperimentTool)

__all__ = [
    'TrainTool',
    'SimulateTool',
    'VerifyTool',
    'ExportTool',
    'RunExperimentTool',
    'ALL_TOOLS',
]
