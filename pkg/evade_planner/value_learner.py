"""
在线价值学习

经验回放、目标网络生成TD(0)回归目标、小批量ADAM训练
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from .config import ArchitectureDescriptor, ExperimentConfig, TrainerConfig
from .exceptions import ContractViolation
from .mmdp import ExperienceSample
from .planners import ValueOracle
from .value_network import AdamOptimizer, ValueNet

if TYPE_CHECKING:
    from .episode import EpisodeRecord
    from .utils import SeedSequencer

logger = logging.getLogger(__name__)


class ReplayBuffer:
    """容量固定的FIFO经验池，满了之后覆盖最旧的样本"""

    def __init__(self, capacity: int = 10000):
        if capacity < 1:
            raise ContractViolation("回放容量必须 >= 1")
        self.capacity = capacity
        self._items: List[ExperienceSample] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def add(self, sample: ExperienceSample):
        if len(self._items) < self.capacity:
            self._items.append(sample)
        else:
            self._items[self._next] = sample
        self._next = (self._next + 1) % self.capacity

    def extend(self, samples: Sequence[ExperienceSample]):
        for sample in samples:
            self.add(sample)

    def samples(self) -> List[ExperienceSample]:
        """按插入先后排列的全部样本"""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._next:] + self._items[:self._next]

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[ExperienceSample]:
        """在当前内容上均匀地无放回抽样"""
        if batch_size > len(self._items):
            raise ContractViolation(f"批大小 {batch_size} 超过回放中的样本数 {len(self._items)}")
        indices = rng.choice(len(self._items), size=batch_size, replace=False)
        return [self._items[i] for i in indices]


class NetworkOracle(ValueOracle):
    """用在线参数 theta 给出 V(s_{t+h})"""

    def __init__(self, net: ValueNet):
        self.net = net

    def evaluate(self, features: np.ndarray) -> float:
        return self.net.predict(features)


class ValueLearner:
    """V_theta 的训练循环"""

    def __init__(self, net: ValueNet, cfg: Optional[TrainerConfig] = None,
                 replay: Optional[ReplayBuffer] = None):
        """
        初始化学习器

        Args:
            net: 价值网络
            cfg: 训练超参数
            replay: 经验池，缺省时按 cfg.replay_capacity 新建
        """
        self.net = net
        self.cfg = cfg or TrainerConfig()
        self.replay = replay if replay is not None else ReplayBuffer(self.cfg.replay_capacity)
        self.optimizer = AdamOptimizer.from_config(net.params, self.cfg)
        self.gradient_steps = 0
        self.syncs = 0

    @classmethod
    def create(cls, descriptor: ArchitectureDescriptor, cfg: TrainerConfig,
               rng: np.random.Generator) -> "ValueLearner":
        return cls(ValueNet(descriptor, rng), cfg)

    def oracle(self) -> NetworkOracle:
        return NetworkOracle(self.net)

    def observe(self, sample: ExperienceSample):
        self.replay.add(sample)

    def td_targets(self, batch: Sequence[ExperienceSample]) -> np.ndarray:
        """y = r + gamma * V_{theta^-}(s')，终止样本 y = r"""
        rewards = np.array([s.reward for s in batch], dtype=np.float64)
        terminal = np.array([s.terminal for s in batch], dtype=bool)
        next_values = self.net.predict_batch(np.stack([s.next_state_features for s in batch]), use_target=True)
        return np.where(terminal, rewards, rewards + self.cfg.gamma * next_values)

    def train_minibatch(self, batch: Sequence[ExperienceSample]) -> float:
        """
        在一个小批量上做一次ADAM更新

        Args:
            batch: 经验样本

        Returns:
            更新前的均方TD误差
        """
        if not batch:
            raise ContractViolation("小批量不能为空")
        targets = self.td_targets(batch)
        states = np.stack([s.state_features for s in batch])
        loss, grads = self.net.mse_loss_and_gradients(states, targets)
        self.optimizer.update(self.net.params, grads)
        self.gradient_steps += 1
        if self.gradient_steps % self.cfg.target_sync_period == 0:
            self.sync_target()
        return loss

    def sync_target(self):
        self.net.sync_target()
        self.syncs += 1
        logger.debug("目标网络第 %d 次同步（梯度步 %d）", self.syncs, self.gradient_steps)

    def ready(self) -> bool:
        return len(self.replay) >= max(self.cfg.warmup_samples, self.cfg.minibatch_size)

    def refine(self, rng: np.random.Generator) -> List[float]:
        """每个环境步之后的若干次梯度更新；经验不足时不训练"""
        if not self.ready():
            return []
        return [
            self.train_minibatch(self.replay.sample(self.cfg.minibatch_size, rng))
            for _ in range(self.cfg.gradient_steps_per_env_step)
        ]


def warmup_replay(buffer: ReplayBuffer, cfg: ExperimentConfig, seeds: "SeedSequencer",
                  run: int = 0, sample_count: int = 5000) -> List["EpisodeRecord"]:
    """
    用不带价值函数的规划填充经验池

    Args:
        buffer: 要填充的经验池
        cfg: 实验配置（环境与规划参数）
        seeds: 随机流派生器
        run: 运行编号
        sample_count: 目标样本数

    Returns:
        预热回合的记录
    """
    from .episode import EpisodeRunner

    if sample_count > buffer.capacity:
        raise ContractViolation(f"预热样本数 {sample_count} 超过经验池容量 {buffer.capacity}")

    baseline = cfg.model_copy(update={"evade_enabled": False})
    runner = EpisodeRunner(baseline, seeds, role_prefix="warmup")
    records = []
    episode = 0
    progress = tqdm(total=sample_count, initial=len(buffer), desc="warmup", disable=not cfg.show_progress)
    while len(buffer) < sample_count:
        staging = ReplayBuffer(baseline.episode_length)
        records.append(runner.run_episode(run, episode, learner=None, replay=staging))
        for sample in staging.samples():
            if len(buffer) >= sample_count:
                break
            buffer.add(sample)
        progress.update(len(buffer) - progress.n)
        episode += 1
    progress.close()
    logger.info("预热完成：%d 个回合，%d 个样本", episode, len(buffer))
    return records


def save_replay(path: str, buffer: ReplayBuffer):
    """把经验池保存为 .npz（按插入顺序）"""
    samples = buffer.samples()
    if not samples:
        raise ContractViolation("经验池为空，无可保存的样本")
    np.savez(
        path,
        capacity=np.array(buffer.capacity),
        state_features=np.stack([s.state_features for s in samples]),
        joint_actions=np.array([s.joint_action for s in samples], dtype=np.int64),
        next_state_features=np.stack([s.next_state_features for s in samples]),
        rewards=np.array([s.reward for s in samples], dtype=np.float64),
        terminals=np.array([s.terminal for s in samples], dtype=bool),
    )


def load_replay(path: str, capacity: Optional[int] = None) -> ReplayBuffer:
    with np.load(path) as data:
        arrays = {key: data[key] for key in data.files}
    buffer = ReplayBuffer(int(capacity if capacity is not None else arrays["capacity"]))
    for i in range(len(arrays["rewards"])):
        buffer.add(ExperienceSample(
            state_features=arrays["state_features"][i],
            joint_action=tuple(int(a) for a in arrays["joint_actions"][i]),
            next_state_features=arrays["next_state_features"][i],
            reward=float(arrays["rewards"][i]),
            terminal=bool(arrays["terminals"][i]),
        ))
    return buffer


def save_checkpoint(path: str, learner: ValueLearner):
    """
    保存网络与优化器状态

    文件内容：descriptor（JSON字符串）、param_i、target_i、adam_m_i、adam_v_i、
    adam_step、gradient_steps、trainer（JSON字符串）。
    """
    arrays = {
        "descriptor": np.array(learner.net.descriptor.model_dump_json()),
        "trainer": np.array(learner.cfg.model_dump_json()),
        "adam_step": np.array(learner.optimizer.step),
        "gradient_steps": np.array(learner.gradient_steps),
    }
    for i, (p, t, m, v) in enumerate(zip(learner.net.params, learner.net.target_params,
                                         learner.optimizer.m, learner.optimizer.v)):
        arrays[f"param_{i}"] = p
        arrays[f"target_{i}"] = t
        arrays[f"adam_m_{i}"] = m
        arrays[f"adam_v_{i}"] = v
    np.savez(path, **arrays)


def load_checkpoint(path: str, replay: Optional[ReplayBuffer] = None) -> ValueLearner:
    with np.load(path) as data:
        descriptor = ArchitectureDescriptor.model_validate_json(str(data["descriptor"]))
        cfg = TrainerConfig.model_validate_json(str(data["trainer"]))
        learner = ValueLearner(ValueNet(descriptor), cfg, replay)
        count = len(learner.net.params)
        learner.net.params[:] = [data[f"param_{i}"].copy() for i in range(count)]
        learner.net.target_params = [data[f"target_{i}"].copy() for i in range(count)]
        learner.optimizer.m = [data[f"adam_m_{i}"].copy() for i in range(count)]
        learner.optimizer.v = [data[f"adam_v_{i}"].copy() for i in range(count)]
        learner.optimizer.step = int(data["adam_step"])
        learner.gradient_steps = int(data["gradient_steps"])
    return learner
