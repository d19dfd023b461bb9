"""
单个回合的规划-执行-学习循环
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Union

from .config import ExperimentConfig
from .exceptions import ContractViolation
from .mmdp import ExperienceSample
from .planners import DicePlanner, DoolpPlanner, PlannerBudget, ValueOracle, ZeroOracle
from .smart_factory import FactoryAction, SmartFactory
from .utils import SeedSequencer

if TYPE_CHECKING:
    from tools.trace_store import EpisodeTrace
    from .value_learner import ReplayBuffer, ValueLearner

logger = logging.getLogger(__name__)


@dataclass
class EpisodeRecord:
    """一个回合的结果"""

    run: int
    episode: int
    initial_score: float
    final_score: float
    completion_rate: float
    length: int
    total_reward: float
    mean_td_loss: Optional[float] = None
    wall_clock: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        """可复现的字段（不含耗时）"""
        data = asdict(self)
        data.pop("wall_clock")
        return data


def make_planner(cfg: ExperimentConfig, env: SmartFactory) -> Union[DicePlanner, DoolpPlanner]:
    budget = PlannerBudget(cfg.budget, cfg.horizon)
    planner_cls = DicePlanner if cfg.algorithm == "dice" else DoolpPlanner
    return planner_cls(env, budget, gamma=cfg.gamma, return_mode=cfg.return_mode)


class EpisodeRunner:
    """
    按配置执行回合

    所有随机流都由 (角色, 运行, 回合, 步, 智能体) 派生；
    role_prefix 用来把预热回合与正式回合的随机流分开。
    """

    def __init__(self, cfg: ExperimentConfig, seeds: SeedSequencer, role_prefix: str = ""):
        self.cfg = cfg
        self.seeds = seeds
        self.role_prefix = role_prefix
        self.env = SmartFactory(cfg.factory)
        self.planner = make_planner(cfg, self.env)

    def _role(self, name: str) -> str:
        return f"{self.role_prefix}/{name}" if self.role_prefix else name

    def _oracle(self, learner: Optional["ValueLearner"]) -> ValueOracle:
        if not self.cfg.evade_enabled:
            return ZeroOracle()
        if learner is None:
            raise ContractViolation("EVADE 模式需要价值学习器")
        return learner.oracle()

    def _decide(self, state, oracle: ValueOracle, run: int, episode: int) -> List[int]:
        agents = range(self.env.agent_count(state))
        plan_rngs = [self.seeds.rng(self._role("plan"), run, episode, state.t, i) for i in agents]
        if isinstance(self.planner, DoolpPlanner):
            sim_rngs = [self.seeds.rng(self._role("sim"), run, episode, state.t, i) for i in agents]
            return self.planner.decide(state, oracle, plan_rngs, sim_rngs).joint_action
        sim_rng = self.seeds.rng(self._role("sim"), run, episode, state.t)
        return self.planner.decide(state, oracle, plan_rngs, sim_rng).joint_action

    def run_episode(self, run: int, episode: int,
                    learner: Optional["ValueLearner"] = None,
                    replay: Optional["ReplayBuffer"] = None,
                    trace: Optional["EpisodeTrace"] = None) -> EpisodeRecord:
        """
        执行一个回合

        Args:
            run: 运行编号
            episode: 回合编号
            learner: 价值学习器；为 None 时不训练
            replay: 存放经验的回放池，缺省时使用学习器自己的
            trace: 逐步轨迹输出

        Returns:
            回合记录
        """
        started = time.perf_counter()
        if replay is None and learner is not None:
            replay = learner.replay
        oracle = self._oracle(learner)

        state = self.env.new_factory(self.seeds.rng(self._role("env_init"), run, episode))
        step_rng = self.seeds.rng(self._role("env_step"), run, episode)
        initial_score = state.score()
        total_reward = 0.0
        losses: List[float] = []

        terminal = self.env.is_terminal(state)
        while not terminal:
            features = self.env.encode(state)
            joint_action = self._decide(state, oracle, run, episode)
            t = state.t
            state, reward, terminal = self.env.step(state, joint_action, step_rng)
            total_reward += reward

            sample = ExperienceSample(
                state_features=features,
                joint_action=tuple(joint_action),
                next_state_features=self.env.encode(state),
                reward=reward,
                terminal=terminal,
            )
            if replay is not None:
                replay.add(sample)
            if learner is not None:
                losses.extend(learner.refine(self.seeds.rng(self._role("replay"), run, episode, t)))
            if trace is not None:
                names = [FactoryAction(a).name for a in joint_action]
                trace.record(state.t, names, reward, state.score_components())

        record = EpisodeRecord(
            run=run,
            episode=episode,
            initial_score=initial_score,
            final_score=state.score(),
            completion_rate=state.completion_rate(),
            length=state.t,
            total_reward=total_reward,
            mean_td_loss=sum(losses) / len(losses) if losses else None,
            wall_clock=time.perf_counter() - started,
        )
        logger.info("运行 %d 回合 %d：分数 %.3f，完成率 %.2f，长度 %d",
                    run, episode, record.final_score, record.completion_rate, record.length)
        return record
