"""
多臂老虎机栈

每个深度一个MAB，每个臂保存最近10个局部回报的滑动窗口，
用高斯模型（未知均值和方差，Jeffreys先验）做Thompson采样
"""

from __future__ import annotations

from collections import deque
from typing import Iterable, List, Sequence, Union

import numpy as np

from .exceptions import ContractViolation, PlanningError

WINDOW_SIZE = 10
ARM_COUNT = 6


class SlidingWindowBuffer:
    """定长FIFO，满了之后丢弃最旧的值"""

    def __init__(self, capacity: int = WINDOW_SIZE):
        self.capacity = capacity
        self._values = deque(maxlen=capacity)

    def push(self, value: float):
        self._values.append(float(value))

    def __len__(self) -> int:
        return len(self._values)

    @property
    def values(self) -> List[float]:
        return list(self._values)

    def mean(self) -> float:
        if not self._values:
            raise PlanningError("空缓冲区没有均值")
        return float(np.mean(self._values))

    def std(self) -> float:
        """样本标准差（k-1 自由度），少于两个值时为0"""
        k = len(self._values)
        if k < 2:
            return 0.0
        return float(np.std(self._values, ddof=1))

    def shift(self, offset: float):
        self._values = deque((v + offset for v in self._values), maxlen=self.capacity)


class Mab:
    """一个深度上的老虎机，每个动作一个臂"""

    def __init__(self, arm_count: int = ARM_COUNT, capacity: int = WINDOW_SIZE):
        self.buffers = [SlidingWindowBuffer(capacity) for _ in range(arm_count)]

    @property
    def arm_count(self) -> int:
        return len(self.buffers)

    def counts(self) -> List[int]:
        return [len(b) for b in self.buffers]

    def thompson_select(self, rng: np.random.Generator) -> int:
        """
        Thompson采样选臂

        观测少于2个的臂优先（在观测最少的臂之间均匀随机选）；
        否则每个臂抽 mean + t_{k-1} * sd / sqrt(k)，取最大者，并列时随机。

        Args:
            rng: 随机数发生器

        Returns:
            臂编号
        """
        if self.arm_count == 1:
            return 0
        counts = self.counts()
        under_observed = [a for a, k in enumerate(counts) if k < 2]
        if under_observed:
            fewest = min(counts[a] for a in under_observed)
            candidates = [a for a in under_observed if counts[a] == fewest]
            return _pick(candidates, rng)

        k = np.asarray(counts, dtype=np.float64)
        means = np.array([buffer.mean() for buffer in self.buffers])
        sds = np.array([buffer.std() for buffer in self.buffers])
        draws = means + rng.standard_t(k - 1) * sds / np.sqrt(k)
        return _pick(np.flatnonzero(draws == draws.max()).tolist(), rng)

    def greedy_arm(self) -> int:
        """均值最大的臂；空臂排在所有已观测臂之后，并列取编号最小者"""
        means = np.array([buffer.mean() if len(buffer) else -np.inf for buffer in self.buffers])
        if np.all(np.isneginf(means)):
            raise PlanningError("所有臂都没有观测，规划器至少需要运行一次迭代")
        return int(np.argmax(means))

    def push(self, arm: int, value: float):
        self.buffers[arm].push(value)


class MabStack:
    """长度为 h 的老虎机序列，表示一个智能体的开环计划分布"""

    def __init__(self, depth: int, arm_count: int = ARM_COUNT, capacity: int = WINDOW_SIZE):
        if depth < 1:
            raise ContractViolation("MAB栈深度必须 >= 1")
        self.bandits = [Mab(arm_count, capacity) for _ in range(depth)]

    @property
    def depth(self) -> int:
        return len(self.bandits)

    def sample_plan(self, rng: np.random.Generator) -> List[int]:
        return [mab.thompson_select(rng) for mab in self.bandits]

    def update(self, plan: Sequence[int], local_return: Union[float, Sequence[float]]):
        """
        把回报写入计划中每个深度对应臂的缓冲区

        Args:
            plan: 采样得到的计划
            local_return: 单个回报（写入所有深度），或每个深度一个回报
        """
        if len(plan) != self.depth:
            raise ContractViolation(f"计划长度 {len(plan)} 与栈深度 {self.depth} 不一致")
        if isinstance(local_return, Iterable):
            returns = list(local_return)
            if len(returns) != self.depth:
                raise ContractViolation(f"逐深度回报长度 {len(returns)} 与栈深度 {self.depth} 不一致")
        else:
            returns = [float(local_return)] * self.depth
        for mab, arm, value in zip(self.bandits, plan, returns):
            mab.push(int(arm), value)

    def greedy_action(self) -> int:
        return self.bandits[0].greedy_arm()

    def snapshot(self) -> List[List[List[float]]]:
        """所有缓冲区内容，按 [深度][臂] 排列"""
        return [[b.values for b in mab.buffers] for mab in self.bandits]


def _pick(candidates: List[int], rng: np.random.Generator) -> int:
    if len(candidates) == 1:
        return candidates[0]
    return candidates[int(rng.integers(len(candidates)))]


def thompson_select(mab: Mab, rng: np.random.Generator) -> int:
    return mab.thompson_select(rng)


def sample_plan(stack: MabStack, rng: np.random.Generator) -> List[int]:
    return stack.sample_plan(rng)


def update_stack(stack: MabStack, plan: Sequence[int],
                 local_return: Union[float, Sequence[float]]):
    stack.update(plan, local_return)


def greedy_action(stack: MabStack) -> int:
    return stack.greedy_action()
