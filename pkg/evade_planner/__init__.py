"""
EVADE Planner - 多智能体开环规划与在线价值学习

这个包提供了一套完整的实验功能，包括：
- 智能工厂多智能体环境
- 基于MAB栈的集中式（DICE）与分布式（DOOLP）开环规划
- 用TD误差训练的价值网络，为规划提供末状态价值自举
- 可复现的实验运行、汇总和对比
"""

from .agent import EvadeAgent
from .config import ArchitectureDescriptor, ExperimentConfig, FactoryConfig, TrainerConfig
from .planners import DicePlanner, DoolpPlanner, dice_decide, doolp_decide
from .result_comparator import ResultComparator
from .smart_factory import FactoryAction, SmartFactory
from .value_learner import ReplayBuffer, ValueLearner
from .value_network import ValueNet

__version__ = "1.0.0"
__author__ = "EVADE Planner Team"
__description__ = "多智能体开环规划与在线价值学习"

__all__ = [
    'EvadeAgent',
    'ExperimentConfig',
    'FactoryConfig',
    'TrainerConfig',
    'ArchitectureDescriptor',
    'SmartFactory',
    'FactoryAction',
    'DicePlanner',
    'DoolpPlanner',
    'dice_decide',
    'doolp_decide',
    'ValueNet',
    'ValueLearner',
    'ReplayBuffer',
    'ResultComparator',
]
