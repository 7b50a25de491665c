"""
命令行入口
用法：
    python -m src train    --config config/di.json --out runs/di.json
    python -m src simulate --ckpt runs/di.json --x0 "5,-3" --steps 50 --out traj.csv
    python -m src verify   --ckpt runs/di.json --samples 3000 --delta 0.01 --out report.json
    python -m src export   --ckpt runs/di.json --what all --grid 101 --out figures/
    python -m src run      --config config/pvtol.json --out runs/pvtol/
    python -m src tools    [--category evaluation]

退出码：0 成功；2 配置 / 维度 / 检查点 / 文件错误；3 数值错误；4 证书 vacuous；1 其他失败
"""
import argparse
import logging
import os
import sys
from typing import List, Optional

# 添加项目路径
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from core import ToolManager  # noqa: E402
from core.exceptions import ConfigError  # noqa: E402
from core.settings import configure_logging  # noqa: E402
from tools import ALL_TOOLS  # noqa: E402
from tools.common import format_summary, format_tool_table  # noqa: E402

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_VACUOUS = 4

INPUT_ERRORS = {
    "ConfigError", "DimensionError", "CheckpointError", "CheckpointVersionError",
    "InfeasibleError", "FileNotFoundError", "ValidationError",
}

logger = logging.getLogger("nldpc")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nldpc",
        description="神经 Lyapunov 可微预测控制：训练、仿真、概率验证、图数据导出",
    )
    parser.add_argument("--log-level", default=None,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="覆盖 NLDPC_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="训练策略和 Lyapunov 函数")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="检查点输出路径")
    p.add_argument("--loss-csv", dest="loss_csv", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--no-progress", dest="show_progress", action="store_false")

    p = sub.add_parser("simulate", help="从给定初始状态做闭环仿真")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--x0", required=True, help="逗号分隔，如 \"5,-3\"")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", help="Hoeffding 概率验证")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("export", help="导出相图 / 曲面 / V 差分 CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--what", default="all")
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--trajectories", type=int, default=20)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="输出目录")

    p = sub.add_parser("run", help="训练 → 验证 → 导出")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="输出目录")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--no-progress", dest="show_progress", action="store_false")

    p = sub.add_parser("tools", help="列出可用命令")
    p.add_argument("--category", default=None)

    return parser


def build_manager() -> ToolManager:
    manager = ToolManager()
    for tool_cls in ALL_TOOLS:
        manager.register_tool(tool_cls())
    return manager


def exit_code_for(result) -> int:
    if result.success:
        data = result.data if isinstance(result.data, dict) else {}
        return EXIT_VACUOUS if data.get("vacuous") else EXIT_OK
    if result.error_type in INPUT_ERRORS:
        return EXIT_INPUT
    if result.error_type == "NumericError":
        return EXIT_NUMERIC
    return EXIT_FAILURE


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(getattr(logging, args.log_level) if args.log_level else None)

    params = {k: v for k, v in vars(args).items() if k not in ("command", "log_level") and v is not None}
    manager = build_manager()
    if args.command == "tools":
        try:
            print(format_tool_table(manager, args.category))
        except ConfigError as e:
            print(f"tools 失败: {e}", file=sys.stderr)
            return EXIT_INPUT
        return EXIT_OK

    result = manager.execute_tool(args.command, **params)

    if result.success:
        print(format_summary(result.data))
    else:
        print(f"{args.command} 失败: {result.error_message}", file=sys.stderr)
    code = exit_code_for(result)
    logger.debug("退出码 %d (%.2fs)", code, result.execution_time)
    return code


if __name__ == "__main__":
    sys.exit(main())
