"""
MMDP基础抽象

回报、TD误差、生成模型接口，以及用于测试的值迭代
"""

from __future__ import annotations

import itertools
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Generic, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from .exceptions import ContractViolation, ModelValidationError

logger = logging.getLogger(__name__)

StateT = TypeVar("StateT")


@dataclass(frozen=True)
class DiscountSpec:
    """折扣因子与规划视野"""

    gamma: float = 0.95
    horizon: int = 1

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ContractViolation(f"gamma 必须位于 [0,1]，收到 {self.gamma}")
        if self.horizon < 1:
            raise ContractViolation(f"horizon 必须 >= 1，收到 {self.horizon}")


@dataclass
class ExperienceSample:
    """回放缓冲区中的一条转移 (s, a, s', r)"""

    state_features: np.ndarray
    joint_action: Tuple[int, ...]
    next_state_features: np.ndarray
    reward: float
    terminal: bool


class GenerativeModel(ABC, Generic[StateT]):
    """
    生成模型接口

    step 会原地推进传入的状态，因此规划时必须先 clone 出沙盒。
    """

    action_count: int = 1

    @abstractmethod
    def agent_count(self, state: StateT) -> int:
        """状态中的智能体数量"""

    @abstractmethod
    def clone(self, state: StateT) -> StateT:
        """复制出一个独立的模拟沙盒"""

    @abstractmethod
    def step(self, state: StateT, joint_action: Sequence[int],
             rng: np.random.Generator) -> Tuple[StateT, float, bool]:
        """采样一次转移，返回 (下一状态, 奖励, 是否终止)"""

    @abstractmethod
    def encode(self, state: StateT) -> np.ndarray:
        """把状态编码为价值网络的输入特征"""

    @abstractmethod
    def is_terminal(self, state: StateT) -> bool:
        """状态是否为回合终点"""


def discounted_return(rewards: Sequence[float], spec: DiscountSpec) -> float:
    """
    计算折扣回报 sum_k gamma^k * r_k

    Args:
        rewards: 从时刻 t 开始的奖励序列
        spec: 折扣规格

    Returns:
        折扣回报
    """
    if len(rewards) > spec.horizon:
        raise ContractViolation(
            f"奖励序列长度 {len(rewards)} 超过视野 {spec.horizon}"
        )
    total = 0.0
    weight = 1.0
    for reward in rewards:
        total += weight * float(reward)
        weight *= spec.gamma
    return total


def evade_return(rewards: Sequence[float], spec: DiscountSpec,
                 terminal_value: float, truncated_early: bool) -> float:
    """
    带价值自举的回报

    完整跑满 h 步时加上 gamma^h * V(s_{t+h})；模拟提前终止时不自举。

    Args:
        rewards: 模拟得到的奖励序列
        spec: 折扣规格
        terminal_value: 价值函数在末状态上的估计
        truncated_early: 回合是否在视野内结束

    Returns:
        局部回报
    """
    base = discounted_return(rewards, spec)
    if truncated_early:
        return base
    return base + spec.gamma ** spec.horizon * float(terminal_value)


def td_error(v_s: float, reward: float, gamma: float, v_next: float,
             terminal: bool) -> float:
    """一步TD误差 V(s) - (r + gamma*V(s'))，终止时 V(s') 视为 0"""
    bootstrap = 0.0 if terminal else gamma * v_next
    return v_s - (reward + bootstrap)


def joint_plan_count(action_count: int, horizon: int, agent_count: int) -> int:
    """联合计划数量 |A_i|^(h*n)，使用Python整数保证精确"""
    if min(action_count, horizon, agent_count) < 1:
        raise ContractViolation("joint_plan_count 的所有参数必须 >= 1")
    return int(action_count) ** (int(horizon) * int(agent_count))


@dataclass
class TabularMdp:
    """
    表格MDP <S, A, P, R>

    transitions 形状为 (S, A, S)，rewards 形状为 (S, A)。
    terminal_states 中的状态被视为吸收态，价值为 0。
    """

    transitions: np.ndarray
    rewards: np.ndarray
    terminal_states: Tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.validate()

    @property
    def state_count(self) -> int:
        return self.transitions.shape[0]

    @property
    def action_count(self) -> int:
        return self.transitions.shape[1]

    def validate(self):
        """检查转移概率是否为合法的随机矩阵"""
        p = self.transitions
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ModelValidationError(f"转移张量形状非法: {p.shape}")
        if self.rewards.shape != p.shape[:2]:
            raise ModelValidationError(
                f"奖励形状 {self.rewards.shape} 与转移形状 {p.shape} 不匹配"
            )
        if np.any(p < 0):
            raise ModelValidationError("转移概率存在负值")
        row_sums = p.sum(axis=2)
        if np.any(np.abs(row_sums - 1.0) > 1e-9):
            raise ModelValidationError("存在和不为 1 的转移概率行")

    def bellman_backup(self, values: np.ndarray, gamma: float) -> np.ndarray:
        """Q(s,a) = R(s,a) + gamma * sum_s' P(s'|s,a) V(s')"""
        q = self.rewards + gamma * np.einsum("ijk,k->ij", self.transitions, values)
        if self.terminal_states:
            q[list(self.terminal_states), :] = 0.0
        return q

    def evaluate_policy(self, policy: np.ndarray, gamma: float) -> np.ndarray:
        """
        求解随机策略的贝尔曼评估方程

        Args:
            policy: 形状 (S, A) 的动作概率
            gamma: 折扣因子

        Returns:
            V^pi
        """
        policy = np.asarray(policy, dtype=np.float64)
        p_pi = np.einsum("ij,ijk->ik", policy, self.transitions)
        r_pi = np.einsum("ij,ij->i", policy, self.rewards)
        if self.terminal_states:
            idx = list(self.terminal_states)
            p_pi[idx, :] = 0.0
            r_pi[idx] = 0.0
        system = np.eye(self.state_count) - gamma * p_pi
        return np.linalg.solve(system, r_pi)


def value_iteration(mdp: TabularMdp, gamma: float, tolerance: float = 1e-10,
                    max_iterations: int = 100000) -> np.ndarray:
    """
    值迭代求最优价值函数

    仅作测试用的对照。gamma = 1 时要求 MDP 具有吸收终态结构。

    Args:
        mdp: 表格MDP
        gamma: 折扣因子
        tolerance: 贝尔曼残差的最大范数阈值

    Returns:
        价值表 V，长度为状态数
    """
    if tolerance <= 0:
        raise ContractViolation("tolerance 必须为正数")
    if not 0.0 <= gamma <= 1.0:
        raise ContractViolation(f"gamma 必须位于 [0,1]，收到 {gamma}")
    mdp.validate()

    values = np.zeros(mdp.state_count)
    # 收缩映射下 ||V_k+1 - V*|| <= gamma/(1-gamma) ||V_k+1 - V_k||，这里直接以残差为停止条件
    for iteration in range(max_iterations):
        updated = mdp.bellman_backup(values, gamma).max(axis=1)
        residual = np.max(np.abs(updated - values))
        values = updated
        if residual <= tolerance:
            logger.debug("值迭代在第 %d 次迭代收敛，残差 %.3e", iteration + 1, residual)
            break
    else:
        logger.warning("值迭代达到最大迭代次数 %d 仍未收敛", max_iterations)
    return values


def enumerate_deterministic_policies(mdp: TabularMdp, gamma: float) -> np.ndarray:
    """穷举所有确定性策略，返回逐状态的最大价值（值迭代的暴力对照）"""
    best = np.full(mdp.state_count, -np.inf)
    eye = np.eye(mdp.action_count)
    for choice in itertools.product(range(mdp.action_count), repeat=mdp.state_count):
        policy = eye[list(choice)]
        best = np.maximum(best, mdp.evaluate_policy(policy, gamma))
    return best


def random_tabular_mdp(state_count: int, action_count: int,
                       rng: np.random.Generator,
                       reward_scale: float = 1.0) -> TabularMdp:
    """生成随机的表格MDP，转移概率按 Dirichlet(1) 采样"""
    transitions = rng.dirichlet(np.ones(state_count), size=(state_count, action_count))
    rewards = rng.uniform(-reward_scale, reward_scale, size=(state_count, action_count))
    return TabularMdp(transitions=transitions, rewards=rewards)


def describe_mdp(mdp: TabularMdp, values: Optional[np.ndarray] = None) -> List[Any]:
    """生成用于命令行展示的逐状态摘要"""
    rows = []
    for s in range(mdp.state_count):
        row = {
            "state": s,
            "rewards": [round(float(r), 6) for r in mdp.rewards[s]],
        }
        if values is not None:
            row["value"] = float(values[s])
        rows.append(row)
    return rows
