"""
智能工厂环境

5x5 机器网格上的随机多智能体MMDP：智能体携带物品移动、排队加工，
奖励为相邻两步的分数差
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .config import GRID_SIZE, MACHINE_TYPE_COUNT, FactoryConfig
from .exceptions import ContractViolation, ModelValidationError
from .mmdp import GenerativeModel

logger = logging.getLogger(__name__)

FEATURE_PLANES = 35
AGENT_PLANE_OFFSET = 1
FIRST_BUCKET_OFFSET = 5
SECOND_BUCKET_OFFSET = FIRST_BUCKET_OFFSET + MACHINE_TYPE_COUNT


class FactoryAction(IntEnum):
    """单个智能体的动作"""

    NORTH = 0
    SOUTH = 1
    WEST = 2
    EAST = 3
    ENQUEUE = 4
    NOOP = 5


MOVES: Dict[FactoryAction, Tuple[int, int]] = {
    FactoryAction.NORTH: (-1, 0),
    FactoryAction.SOUTH: (1, 0),
    FactoryAction.WEST: (0, -1),
    FactoryAction.EAST: (0, 1),
}


@dataclass(frozen=True)
class MachineGrid:
    """机器网格，cell_types 按行优先存放每个格子的机器类型"""

    cell_types: Tuple[int, ...]
    width: int = GRID_SIZE
    height: int = GRID_SIZE

    def __post_init__(self):
        if len(self.cell_types) != self.width * self.height:
            raise ModelValidationError(
                f"布局需要 {self.width * self.height} 个格子，收到 {len(self.cell_types)}"
            )
        bad = [t for t in self.cell_types if not 0 <= t < MACHINE_TYPE_COUNT]
        if bad:
            raise ModelValidationError(f"机器类型超出范围 0..{MACHINE_TYPE_COUNT - 1}: {bad}")
        missing = set(range(MACHINE_TYPE_COUNT)) - set(self.cell_types)
        if missing:
            raise ModelValidationError(f"布局缺少机器类型: {sorted(missing)}")

    @classmethod
    def generate(cls, seed: int) -> "MachineGrid":
        """
        由种子生成布局

        多重集为 0..14 各一次，再按轮转补上 0..9 各一次，共25个，然后洗牌。
        """
        cells = GRID_SIZE * GRID_SIZE
        extra = cells - MACHINE_TYPE_COUNT
        multiset = list(range(MACHINE_TYPE_COUNT)) + [i % MACHINE_TYPE_COUNT for i in range(extra)]
        rng = np.random.default_rng(seed)
        return cls(tuple(int(t) for t in rng.permutation(multiset)))

    @classmethod
    def from_config(cls, config: FactoryConfig) -> "MachineGrid":
        if config.grid_layout is not None:
            return cls(tuple(int(t) for t in config.grid_layout))
        return cls.generate(config.layout_seed)

    def cell_index(self, position: Tuple[int, int]) -> int:
        return position[0] * self.width + position[1]

    def type_at(self, position: Tuple[int, int]) -> int:
        return self.cell_types[self.cell_index(position)]

    def cells_of_type(self, machine_type: int) -> List[Tuple[int, int]]:
        return [divmod(i, self.width) for i, t in enumerate(self.cell_types) if t == machine_type]

    def as_rows(self) -> List[List[int]]:
        return [list(self.cell_types[r * self.width:(r + 1) * self.width]) for r in range(self.height)]


@dataclass
class AgentState:
    """一个智能体及其携带物品的加工任务"""

    id: int
    position: Tuple[int, int]
    tasks: List[Set[int]]
    enqueued: bool = False

    @property
    def complete(self) -> bool:
        return not self.tasks

    def open_task_count(self) -> int:
        return sum(len(bucket) for bucket in self.tasks)

    def needs(self, machine_type: int) -> bool:
        """当前（第一个）桶是否包含该机器类型"""
        return bool(self.tasks) and machine_type in self.tasks[0]

    def copy(self) -> "AgentState":
        return AgentState(self.id, self.position, [set(b) for b in self.tasks], self.enqueued)


@dataclass
class FactoryState:
    """工厂的完整状态"""

    grid: MachineGrid
    agents: List[AgentState]
    queues: List[List[int]]
    t: int = 0
    cost_total: float = 0.0
    tpen_total: float = 0.0
    complete_set: Set[int] = field(default_factory=set)

    @classmethod
    def build(cls, grid: MachineGrid, agents: List[AgentState]) -> "FactoryState":
        """从智能体列表构造状态，自动推出完成集合与排队信息"""
        state = cls(grid=grid, agents=agents,
                    queues=[[] for _ in range(grid.width * grid.height)])
        for agent in agents:
            if agent.complete:
                state.complete_set.add(agent.id)
            elif agent.enqueued:
                state.queues[grid.cell_index(agent.position)].append(agent.id)
        return state

    def active_agents(self) -> List[AgentState]:
        return [a for a in self.agents if a.id not in self.complete_set]

    def open_tasks(self) -> int:
        return sum(a.open_task_count() for a in self.active_agents())

    def score(self) -> float:
        return len(self.complete_set) - self.open_tasks() - self.cost_total - self.tpen_total

    def completion_rate(self) -> float:
        if not self.agents:
            raise ContractViolation("completion_rate 需要至少一个智能体")
        return len(self.complete_set) / len(self.agents)

    def score_components(self) -> Dict[str, float]:
        return {
            "score": self.score(),
            "completed": len(self.complete_set),
            "tasks": self.open_tasks(),
            "cost_total": self.cost_total,
            "tpen_total": self.tpen_total,
        }

    def copy(self) -> "FactoryState":
        return FactoryState(
            grid=self.grid,
            agents=[a.copy() for a in self.agents],
            queues=[list(q) for q in self.queues],
            t=self.t,
            cost_total=self.cost_total,
            tpen_total=self.tpen_total,
            complete_set=set(self.complete_set),
        )


class SmartFactory(GenerativeModel[FactoryState]):
    """智能工厂的动力学，同时作为规划用的生成模型"""

    action_count = len(FactoryAction)

    def __init__(self, config: Optional[FactoryConfig] = None):
        """
        初始化工厂

        Args:
            config: 环境参数，缺省时使用默认值（4个智能体、T=50）
        """
        self.config = config or FactoryConfig()
        self.grid = MachineGrid.from_config(self.config)
        self._machine_plane = (
            np.asarray(self.grid.cell_types, dtype=np.float64).reshape(self.grid.height, self.grid.width)
            / (MACHINE_TYPE_COUNT - 1)
        )

    def new_factory(self, rng: np.random.Generator) -> FactoryState:
        """
        生成一个随机初始状态

        Args:
            rng: 随机数发生器

        Returns:
            初始工厂状态
        """
        agents = []
        for agent_id in range(self.config.agent_count):
            row, col = rng.integers(0, GRID_SIZE, size=2)
            tasks = [
                set(int(m) for m in rng.choice(MACHINE_TYPE_COUNT, size=self.config.tasks_per_bucket, replace=False))
                for _ in range(self.config.bucket_count)
            ]
            agents.append(AgentState(agent_id, (int(row), int(col)), tasks))
        return FactoryState.build(self.grid, agents)

    def agent_count(self, state: FactoryState) -> int:
        return len(state.agents)

    def score(self, state: FactoryState) -> float:
        return state.score()

    def completion_rate(self, state: FactoryState) -> float:
        return state.completion_rate()

    def clone(self, state: FactoryState) -> FactoryState:
        return state.copy()

    clone_for_simulation = clone

    def is_terminal(self, state: FactoryState) -> bool:
        return state.t >= self.config.episode_length or not state.active_agents()

    def step(self, state: FactoryState, joint_action: Sequence[int],
             rng: np.random.Generator) -> Tuple[FactoryState, float, bool]:
        """
        原地推进一步：动作阶段 -> 机器阶段 -> 惩罚阶段

        Args:
            state: 当前状态（会被修改）
            joint_action: 每个智能体一个动作
            rng: 决定机器故障的随机数发生器

        Returns:
            (状态, 奖励, 是否终止)
        """
        if len(joint_action) != len(state.agents):
            raise ContractViolation(
                f"联合动作长度 {len(joint_action)} 与智能体数量 {len(state.agents)} 不一致"
            )
        if state.t >= self.config.episode_length:
            raise ContractViolation(f"回合已在 t={state.t} 结束")

        score_before = state.score()
        self._action_phase(state, joint_action)
        self._machine_phase(state, rng)
        state.tpen_total += self.config.step_penalty * len(state.active_agents())

        state.t += 1
        reward = state.score() - score_before
        return state, reward, self.is_terminal(state)

    def _action_phase(self, state: FactoryState, joint_action: Sequence[int]):
        for agent in state.agents:
            try:
                action = FactoryAction(int(joint_action[agent.id]))
            except ValueError as e:
                raise ContractViolation(f"非法动作: {joint_action[agent.id]}") from e
            if agent.id in state.complete_set or agent.enqueued:
                continue
            if action in MOVES:
                dr, dc = MOVES[action]
                row = min(max(agent.position[0] + dr, 0), self.grid.height - 1)
                col = min(max(agent.position[1] + dc, 0), self.grid.width - 1)
                agent.position = (row, col)
            elif action == FactoryAction.ENQUEUE:
                state.queues[self.grid.cell_index(agent.position)].append(agent.id)
                agent.enqueued = True

    def _machine_phase(self, state: FactoryState, rng: np.random.Generator):
        failure_prob = self.config.machine_failure_prob
        for cell, queue in enumerate(state.queues):
            if not queue:
                continue
            # 每台机器每步抽一次，即使故障概率为0也照样消耗随机数
            if rng.random() < failure_prob:
                continue
            state.cost_total += self.config.processing_cost
            agent = state.agents[queue.pop(0)]
            agent.enqueued = False
            machine_type = self.grid.cell_types[cell]
            if agent.needs(machine_type):
                agent.tasks[0].discard(machine_type)
                if not agent.tasks[0]:
                    agent.tasks.pop(0)
                if not agent.tasks:
                    state.complete_set.add(agent.id)

    def encode_features(self, state: FactoryState) -> np.ndarray:
        """
        把状态编码为 5x5x35 的特征平面

        平面0为机器类型/14；平面1-4为四类智能体计数
        （需要/不需要当前机器 x 已排队/未排队）；
        平面5-19和20-34分别为第一、第二个桶中各机器类型的空间分布。
        """
        planes = np.zeros((self.grid.height, self.grid.width, FEATURE_PLANES))
        planes[:, :, 0] = self._machine_plane
        for agent in state.active_agents():
            row, col = agent.position
            needed = agent.needs(self.grid.type_at(agent.position))
            category = (0 if needed else 2) + (0 if agent.enqueued else 1)
            planes[row, col, AGENT_PLANE_OFFSET + category] += 1.0
            for machine_type in agent.tasks[0]:
                planes[row, col, FIRST_BUCKET_OFFSET + machine_type] += 1.0
            if len(agent.tasks) > 1:
                for machine_type in agent.tasks[1]:
                    planes[row, col, SECOND_BUCKET_OFFSET + machine_type] += 1.0
        return planes

    encode = encode_features

    def reachable_cells(self, position: Tuple[int, int], horizon: int) -> Set[Tuple[int, int]]:
        """h 步移动内能到达的格子（曼哈顿距离不超过 h）"""
        row, col = position
        return {
            (r, c)
            for r in range(self.grid.height)
            for c in range(self.grid.width)
            if abs(r - row) + abs(c - col) <= horizon
        }
