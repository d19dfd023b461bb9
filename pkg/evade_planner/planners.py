"""
多智能体开环规划

集中式 DICE 与分布式 DOOLP，二者都在生成模型的副本上模拟联合计划，
用局部回报（可带价值自举）更新每个智能体的MAB栈
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, List, Literal, Sequence

import numpy as np

from .bandits import MabStack
from .exceptions import ConfigurationError, ContractViolation
from .mmdp import DiscountSpec, GenerativeModel, evade_return

logger = logging.getLogger(__name__)

ReturnMode = Literal["full", "per_depth"]


class ValueOracle(ABC):
    """末状态价值估计 V(s_{t+h})"""

    @abstractmethod
    def evaluate(self, features: np.ndarray) -> float:
        """对编码后的状态给出价值估计，不得修改规划器状态"""


class ZeroOracle(ValueOracle):
    """基线模式：对任何输入都返回0，即只最大化 G_t"""

    def evaluate(self, features: np.ndarray) -> float:
        return 0.0


class FunctionOracle(ValueOracle):
    """用任意函数包装的价值估计"""

    def __init__(self, fn: Callable[[np.ndarray], float]):
        self.fn = fn

    def evaluate(self, features: np.ndarray) -> float:
        return float(self.fn(features))


@dataclass(frozen=True)
class PlannerBudget:
    """每个决策的模拟步数预算"""

    n_budget: int
    horizon: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError(f"horizon 必须 >= 1，收到 {self.horizon}")
        if self.n_budget // self.horizon < 1:
            raise ConfigurationError(
                f"floor(n_budget / horizon) 为0: n_budget={self.n_budget}, horizon={self.horizon}"
            )

    @property
    def iterations(self) -> int:
        return self.n_budget // self.horizon


@dataclass
class RolloutOutcome:
    """一次模拟的结果"""

    rewards: List[float]
    truncated_early: bool
    terminal_value: float
    value: float

    def returns_to_go(self, spec: DiscountSpec) -> List[float]:
        """每个深度 d 起算的回报；未执行到的深度为0"""
        bootstrap = 0.0 if self.truncated_early else self.terminal_value
        returns = []
        for depth in range(spec.horizon):
            if depth >= len(self.rewards):
                returns.append(0.0)
                continue
            total, weight = 0.0, 1.0
            for reward in self.rewards[depth:]:
                total += weight * reward
                weight *= spec.gamma
            total += spec.gamma ** (spec.horizon - depth) * bootstrap
            returns.append(total)
        return returns


@dataclass
class PlanDecision:
    """一次决策的结果与记账信息"""

    joint_action: List[int]
    stacks: List[MabStack]
    rollouts: int = 0
    simulated_steps: int = 0
    returns: List[float] = field(default_factory=list)


def simulate_plan(model: GenerativeModel, sandbox, joint_plan: Sequence[Sequence[int]],
                  spec: DiscountSpec, oracle: ValueOracle,
                  rng: np.random.Generator) -> RolloutOutcome:
    """
    在沙盒上执行联合计划

    沙盒必须是根状态的新副本，会被原地推进。回合在视野内（含第h步）结束时不做自举。

    Args:
        model: 生成模型
        sandbox: 根状态的副本
        joint_plan: n 行 h 列的联合计划
        spec: 折扣规格
        oracle: 价值估计
        rng: 模拟用随机数发生器

    Returns:
        模拟结果
    """
    rewards: List[float] = []
    terminal = False
    for depth in range(spec.horizon):
        joint_action = [plan[depth] for plan in joint_plan]
        sandbox, reward, terminal = model.step(sandbox, joint_action, rng)
        rewards.append(reward)
        if terminal:
            break
    terminal_value = 0.0 if terminal else oracle.evaluate(model.encode(sandbox))
    value = evade_return(rewards, spec, terminal_value, truncated_early=terminal)
    return RolloutOutcome(rewards, terminal, terminal_value, value)


def rollout(model: GenerativeModel, sandbox, joint_plan: Sequence[Sequence[int]],
            gamma: float, oracle: ValueOracle, rng: np.random.Generator) -> float:
    """模拟联合计划并返回 G_{t,EVADE}（零估计时即 G_t）"""
    horizon = len(joint_plan[0]) if joint_plan else 0
    spec = DiscountSpec(gamma=gamma, horizon=horizon)
    return simulate_plan(model, sandbox, joint_plan, spec, oracle, rng).value


class _StackPlanner:
    """DICE 和 DOOLP 共用的部分"""

    def __init__(self, model: GenerativeModel, budget: PlannerBudget,
                 gamma: float = 0.95, return_mode: ReturnMode = "full"):
        if return_mode not in ("full", "per_depth"):
            raise ConfigurationError(f"未知的回报模式: {return_mode}")
        self.model = model
        self.budget = budget
        self.spec = DiscountSpec(gamma=gamma, horizon=budget.horizon)
        self.return_mode = return_mode

    def _fresh_stacks(self, agent_count: int) -> List[MabStack]:
        return [MabStack(self.budget.horizon, self.model.action_count) for _ in range(agent_count)]

    def _check_streams(self, state, plan_rngs: Sequence[np.random.Generator]) -> int:
        agent_count = self.model.agent_count(state)
        if len(plan_rngs) != agent_count:
            raise ContractViolation(
                f"需要 {agent_count} 个计划随机流，收到 {len(plan_rngs)}"
            )
        return agent_count

    def _credit(self, outcome: RolloutOutcome):
        if self.return_mode == "per_depth":
            return outcome.returns_to_go(self.spec)
        return outcome.value

    def _simulate(self, state, joint_plan, oracle, rng) -> RolloutOutcome:
        sandbox = self.model.clone(state)
        return simulate_plan(self.model, sandbox, joint_plan, self.spec, oracle, rng)


class DicePlanner(_StackPlanner):
    """集中式规划：n 个MAB栈，一个全局模型，全局回报更新所有栈"""

    def decide(self, state, oracle: ValueOracle,
               plan_rngs: Sequence[np.random.Generator],
               sim_rng: np.random.Generator) -> PlanDecision:
        """
        为当前状态选出联合动作

        Args:
            state: 真实环境状态（不会被修改）
            oracle: 价值估计
            plan_rngs: 每个智能体一个计划采样随机流
            sim_rng: 模拟随机流

        Returns:
            决策结果
        """
        agent_count = self._check_streams(state, plan_rngs)
        stacks = self._fresh_stacks(agent_count)
        decision = PlanDecision(joint_action=[], stacks=stacks)

        for _ in range(self.budget.iterations):
            joint_plan = [stack.sample_plan(rng) for stack, rng in zip(stacks, plan_rngs)]
            outcome = self._simulate(state, joint_plan, oracle, sim_rng)
            credit = self._credit(outcome)
            for stack, plan in zip(stacks, joint_plan):
                stack.update(plan, credit)
            decision.rollouts += 1
            decision.simulated_steps += len(outcome.rewards)
            decision.returns.append(outcome.value)

        decision.joint_action = [stack.greedy_action() for stack in stacks]
        logger.debug("DICE 决策 %s，%d 次模拟，%d 步", decision.joint_action,
                     decision.rollouts, decision.simulated_steps)
        return decision


class DoolpPlanner(_StackPlanner):
    """
    分布式规划

    每个智能体有私有的MAB栈和模型副本。每一轮所有智能体先采样计划并广播，
    然后各自在自己的副本中用自己的随机流模拟同一个联合计划，只更新自己的栈。
    """

    def decide(self, state, oracle: ValueOracle,
               plan_rngs: Sequence[np.random.Generator],
               sim_rngs: Sequence[np.random.Generator]) -> PlanDecision:
        agent_count = self._check_streams(state, plan_rngs)
        if len(sim_rngs) != agent_count:
            raise ContractViolation(f"需要 {agent_count} 个模拟随机流，收到 {len(sim_rngs)}")
        stacks = self._fresh_stacks(agent_count)
        decision = PlanDecision(joint_action=[], stacks=stacks)

        for _ in range(self.budget.iterations):
            # 广播：所有智能体本轮采样的计划
            joint_plan = [stack.sample_plan(rng) for stack, rng in zip(stacks, plan_rngs)]
            for agent in range(agent_count):
                outcome = self._simulate(state, joint_plan, oracle, sim_rngs[agent])
                stacks[agent].update(joint_plan[agent], self._credit(outcome))
                decision.simulated_steps += len(outcome.rewards)
                decision.returns.append(outcome.value)
            decision.rollouts += 1

        decision.joint_action = [stack.greedy_action() for stack in stacks]
        logger.debug("DOOLP 决策 %s，%d 轮", decision.joint_action, decision.rollouts)
        return decision


def dice_decide(state, model: GenerativeModel, budget: PlannerBudget, oracle: ValueOracle,
                plan_rngs: Sequence[np.random.Generator], sim_rng: np.random.Generator,
                gamma: float = 0.95, return_mode: ReturnMode = "full") -> List[int]:
    planner = DicePlanner(model, budget, gamma, return_mode)
    return planner.decide(state, oracle, plan_rngs, sim_rng).joint_action


def doolp_decide(state, model: GenerativeModel, budget: PlannerBudget, oracle: ValueOracle,
                 plan_rngs: Sequence[np.random.Generator], sim_rngs: Sequence[np.random.Generator],
                 gamma: float = 0.95, return_mode: ReturnMode = "full") -> List[int]:
    planner = DoolpPlanner(model, budget, gamma, return_mode)
    return planner.decide(state, oracle, plan_rngs, sim_rngs).joint_action
