from typing import Dict, Optional, List
import logging
from .all_types import ToolMetadata, ToolResult
from .interfaces import BaseTool
from .exceptions import ToolNotFoundError, ToolRegistrationError


class ToolManager:
    """
    工具管理中心 - 管理所有命令工具（train / simulate / verify / export / run）

    作用：
    1. 统一管理所有工具的注册和发现
    2. 按分类组织工具
    3. 命令行通过 execute_tool 按名称调用工具
    """

    def __init__(self):
        self._tools: Dict[str, BaseTool] = {}  # {"tool_name": tool_instance}
        self._categories: Dict[str, List[str]] = {}  # {"category": ["tool1", ...]}
        self.logger = logging.getLogger(self.__class__.__name__)

    def register_tool(self, tool: BaseTool) -> None:
        """
        注册一个新工具

        实现逻辑：
        1. 获取并校验工具元数据
        2. 检查名称冲突
        3. 检查工具是否可用
        4. 写入主字典并更新分类索引

        抛出异常:
            ToolRegistrationError: 元数据无效、名称重复或工具不可用
        """
        try:
            metadata = tool.get_metadata()
        except Exception as e:
            error_msg = f"获取工具元数据失败: {str(e)}"
            self.logger.error(error_msg)
            raise ToolRegistrationError(error_msg) from e

        if not isinstance(metadata, ToolMetadata):
            error_msg = f"工具元数据必须是ToolMetadata实例，当前类型: {type(metadata).__name__}"
            self.logger.error(error_msg)
            raise ToolRegistrationError(error_msg)

        tool_name = (metadata.name or "").strip() if isinstance(metadata.name, str) else ""
        if not tool_name:
            error_msg = "工具名称不能为空且必须是字符串类型"
            self.logger.error(error_msg)
            raise ToolRegistrationError(error_msg)

        if tool_name in self._tools:
            error_msg = f"工具名称 '{tool_name}' 已存在，无法重复注册"
            self.logger.warning(error_msg)
            raise ToolRegistrationError(error_msg)

        if not tool.is_available():
            error_msg = f"工具 '{tool_name}' 在当前环境中不可用，请检查依赖项和配置"
            self.logger.warning(error_msg)
            raise ToolRegistrationError(error_msg)

        self._tools[tool_name] = tool

        category = metadata.category.strip().lower() if metadata.category else "general"
        self._categories.setdefault(category, [])
        if tool_name not in self._categories[category]:
            self._categories[category].append(tool_name)

        self.logger.info(f"工具 '{tool_name}' 注册成功，分类: '{category}'")
        self.logger.debug(f"工具详细信息 - 名称: {tool_name}, 描述: {metadata.description[:100]}, 版本: {metadata.version}")

    def get_tool(self, tool_name: str) -> Optional[BaseTool]:
        """根据名称获取工具实例，不存在时返回None"""
        tool_name = self._check_name(tool_name)
        tool_instance = self._tools.get(tool_name)
        if tool_instance is None:
            self.logger.debug(f"工具 '{tool_name}' 不存在于注册表中")
        return tool_instance

    def execute_tool(self, tool_name: str, **kwargs) -> ToolResult:
        """
        按名称执行工具

        抛出异常:
            ToolNotFoundError: 工具未注册
        """
        tool = self.get_tool(tool_name)
        if tool is None:
            raise ToolNotFoundError(f"工具 '{tool_name}' 未注册，可用工具: {sorted(self._tools)}")
        return tool.execute(**kwargs)

    def list_available_tools(self) -> List[ToolMetadata]:
        """列出所有已注册工具的元数据，按名称排序"""
        available_tools = [tool.get_metadata() for tool in self._tools.values()]
        available_tools.sort(key=lambda metadata: metadata.name.lower())
        self.logger.debug(f"已注册工具列表: {', '.join(m.name for m in available_tools)}")
        return available_tools

    def get_tools_by_category(self, category: str) -> List[BaseTool]:
        """按分类获取工具实例列表；分类不存在时返回空列表"""
        names = self._categories.get(category.strip().lower(), [])
        return [self._tools[name] for name in names]

    def get_categories(self) -> List[str]:
        return sorted(self._categories)

    def get_tool_count(self) -> int:
        return len(self._tools)

    def _check_name(self, tool_name: str) -> str:
        if not tool_name or not isinstance(tool_name, str) or not tool_name.strip():
            error_msg = "工具名称不能为空且必须是字符串类型"
            self.logger.error(error_msg)
            raise ValueError(error_msg)
        return tool_name.strip()
