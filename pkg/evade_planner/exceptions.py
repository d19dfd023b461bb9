"""
异常类型

库内所有可预期的失败都从 EvadeError 派生
"""


class EvadeError(Exception):
    """evade_planner 的根异常"""


class ContractViolation(EvadeError, ValueError):
    """调用前置条件不满足（长度不匹配、形状错误等）"""


class ModelValidationError(EvadeError, ValueError):
    """表格MDP或工厂布局不合法"""


class ConfigurationError(EvadeError, ValueError):
    """配置或计算预算不合法"""


class PlanningError(EvadeError, RuntimeError):
    """规划器无法给出动作"""


class TrainingError(EvadeError, RuntimeError):
    """训练过程中出现非有限梯度等数值问题"""
