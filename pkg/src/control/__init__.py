"""
数值模块统一导出
作用：神经网络、动力学、目标函数、展开、训练、验证、导出
"""
from .neural import IcnnNet, LyapunovNet, PolicyNet, QuadraticLyapunov
from .dynamics import LtiSystem, PvtolModel, double_integrator, pvtol, rollout_open_loop
from .rollout import build_train_graph, simulate_closed_loop, lyapunov_difference_field
from .trainer import train, adamw_step, sample_initial_conditions
from .verifier import verify, hoeffding_bound, required_samples
from .checkpoint import save_checkpoint, load_checkpoint
from .config import RunConfig, load_run_config

__all__ = [
    'IcnnNet', 'LyapunovNet', 'PolicyNet', 'QuadraticLyapunov',
    'LtiSystem', 'PvtolModel', 'double_integrator', 'pvtol', 'rollout_open_loop',
    'build_train_graph', 'simulate_closed_loop', 'lyapunov_difference_field',
    'train', 'adamw_step', 'sample_initial_conditions',
    'verify', 'hoeffding_bound', 'required_samples',
    'save_checkpoint', 'load_checkpoint',
    'RunConfig', 'load_run_config',
]
