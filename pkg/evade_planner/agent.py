"""
EVADE Agent - 主要的Agent类

把环境、规划器、价值学习器和指标存储组装起来，提供统一的实验接口
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from .config import ArchitectureDescriptor, ExperimentConfig
from .episode import EpisodeRecord, EpisodeRunner
from .exceptions import ConfigurationError
from .mmdp import describe_mdp, joint_plan_count, random_tabular_mdp, value_iteration
from .result_comparator import ResultComparator
from .smart_factory import SmartFactory
from .utils import SeedSequencer, Utils
from .value_learner import (ReplayBuffer, ValueLearner, load_replay, save_checkpoint,
                            save_replay, warmup_replay)
from .value_network import ValueNet, gradient_check, sample_smooth_inputs

logger = logging.getLogger(__name__)

FINAL_EPISODES = 10
RUNNING_MEAN_WINDOW = 5

# 不影响结果的字段不写入指标文件头
_HEADER_EXCLUDE = {"output_dir", "show_progress"}

CAMPAIGNS: Dict[str, List[Tuple[str, Dict[str, Any]]]] = {
    "budget": [
        ("baseline_b512", {"evade_enabled": False, "horizon": 4, "budget": 512}),
        ("evade_b192", {"evade_enabled": True, "horizon": 4, "budget": 192}),
        ("evade_b384", {"evade_enabled": True, "horizon": 4, "budget": 384}),
        ("evade_b512", {"evade_enabled": True, "horizon": 4, "budget": 512}),
    ],
    "horizon": [
        ("baseline_h6", {"evade_enabled": False, "horizon": 6, "budget": 384}),
        ("evade_h2", {"evade_enabled": True, "horizon": 2, "budget": 384}),
        ("evade_h4", {"evade_enabled": True, "horizon": 4, "budget": 384}),
        ("evade_h6", {"evade_enabled": True, "horizon": 6, "budget": 384}),
    ],
}


class EvadeAgent:
    """EVADE实验Agent主类"""

    def __init__(self, cfg: Optional[ExperimentConfig] = None):
        """
        初始化Agent

        Args:
            cfg: 实验配置，缺省时使用桌面规模的默认值
        """
        self.cfg = cfg or ExperimentConfig()
        self.seeds = SeedSequencer(self.cfg.master_seed)
        self.runner = EpisodeRunner(self.cfg, self.seeds)

    # ---------- 单次运行 ----------

    def new_learner(self, run: int, replay: Optional[ReplayBuffer] = None) -> ValueLearner:
        net = ValueNet(self.cfg.architecture(), self.seeds.rng("net_init", run))
        return ValueLearner(net, self.cfg.trainer, replay)

    def prepare_replay(self, run: int) -> ReplayBuffer:
        """
        准备一次运行的经验池

        EVADE运行先做预热（或读取已保存的预热数据）；基线运行从空池开始。
        """
        capacity = self.cfg.trainer.replay_capacity
        if not self.cfg.evade_enabled:
            return ReplayBuffer(capacity)
        if self.cfg.warmup_replay_path:
            replay = load_replay(self.cfg.warmup_replay_path, capacity=capacity)
            logger.info("从 %s 读取 %d 个预热样本", self.cfg.warmup_replay_path, len(replay))
            return replay
        replay = ReplayBuffer(capacity)
        warmup_replay(replay, self.cfg, self.seeds, run=run, sample_count=self.cfg.trainer.warmup_samples)
        return replay

    def run_episode(self, run: int, episode: int, learner: Optional[ValueLearner] = None,
                    replay: Optional[ReplayBuffer] = None, trace=None) -> EpisodeRecord:
        return self.runner.run_episode(run, episode, learner=learner, replay=replay, trace=trace)

    def run_experiment(self, output_dir: Optional[str] = None) -> Dict[str, Any]:
        """
        执行 runs x episodes 个回合并写出指标文件

        Args:
            output_dir: 输出目录，缺省使用配置中的目录

        Returns:
            最后若干回合的汇总
        """
        from tools.metrics_store import MetricsStore
        from tools.trace_store import EpisodeTrace

        cfg = self.cfg
        directory = Utils.ensure_output_dir(output_dir or cfg.output_dir)
        store = MetricsStore(str(directory))
        store.start(cfg.model_dump(mode="json", exclude=_HEADER_EXCLUDE))
        logger.info("实验 %s：%d 次运行 x %d 个回合，单步联合计划空间 %d",
                    cfg.label(), cfg.runs, cfg.episodes,
                    joint_plan_count(SmartFactory.action_count, cfg.horizon, cfg.agent_count))

        records: List[EpisodeRecord] = []
        for run in range(cfg.runs):
            replay = self.prepare_replay(run)
            learner = self.new_learner(run, replay) if cfg.evade_enabled else None

            episodes = tqdm(range(cfg.episodes), desc=f"run {run}", disable=not cfg.show_progress)
            for episode in episodes:
                trace = None
                if episode < cfg.trace_episodes:
                    trace = EpisodeTrace(str(directory / "traces" / f"run{run}_episode{episode}.jsonl"))
                try:
                    record = self.run_episode(run, episode, learner=learner, replay=replay, trace=trace)
                finally:
                    if trace is not None:
                        trace.close()
                store.append_episode(record.to_dict())
                store.append_timing(run, episode, record.wall_clock)
                records.append(record)
                episodes.set_postfix(score=f"{record.final_score:.2f}", done=f"{record.completion_rate:.2f}")

            if learner is not None:
                save_checkpoint(str(directory / f"checkpoint_run{run}.npz"), learner)

        store.write_aggregate(self.aggregate(records))
        summary = ResultComparator(FINAL_EPISODES).summarize(str(directory))
        store.write_summary(self.format_summary(summary))
        return summary

    def aggregate(self, records: List[EpisodeRecord]) -> List[Dict[str, Any]]:
        """按回合编号做跨运行汇总"""
        by_episode: Dict[int, List[EpisodeRecord]] = {}
        for record in records:
            by_episode.setdefault(record.episode, []).append(record)

        indices = sorted(by_episode)
        scores = [[r.final_score for r in by_episode[e]] for e in indices]
        completion = [[r.completion_rate for r in by_episode[e]] for e in indices]
        mean_scores = [Utils.mean(v) for v in scores]
        mean_completion = [Utils.mean(v) for v in completion]
        running_scores = Utils.running_mean(mean_scores, RUNNING_MEAN_WINDOW)
        running_completion = Utils.running_mean(mean_completion, RUNNING_MEAN_WINDOW)

        rows = []
        for i, episode in enumerate(indices):
            rows.append({
                "episode": episode,
                "runs": len(scores[i]),
                "mean_score": mean_scores[i],
                "score_ci": Utils.ci_half_width(scores[i]),
                "running_mean_score": running_scores[i],
                "mean_completion_rate": mean_completion[i],
                "completion_rate_ci": Utils.ci_half_width(completion[i]),
                "running_mean_completion_rate": running_completion[i],
            })
        return rows

    def format_summary(self, summary: Dict[str, Any]) -> str:
        row = [
            self.cfg.label(), summary["runs"],
            f"{summary['completion_rate']:.3f} ± {summary['completion_rate_ci']:.3f}",
            f"{summary['final_score']:.3f} ± {summary['final_score_ci']:.3f}",
        ]
        table = Utils.format_table(["config", "runs", "completion", "score"], [row])
        return f"最后 {FINAL_EPISODES} 个回合的平均值\n{table}"

    # ---------- 实验组合 ----------

    def member_config(self, overrides: Dict[str, Any], output_dir: str) -> ExperimentConfig:
        data = self.cfg.model_dump()
        data.update(overrides)
        data["output_dir"] = output_dir
        try:
            return ExperimentConfig.model_validate(data)
        except ValueError as e:
            raise ConfigurationError(f"实验组合成员配置不合法: {e}") from e

    def run_campaign(self, kind: str, output_dir: Optional[str] = None) -> List[Dict[str, Any]]:
        """
        依次运行一组配置并写出完成率对比表

        Args:
            kind: 'budget' 或 'horizon'
            output_dir: 总输出目录，每个成员一个子目录

        Returns:
            表格行
        """
        from tools.metrics_store import MetricsStore

        if kind not in CAMPAIGNS:
            raise ConfigurationError(f"未知的实验组合: {kind}")
        directory = Utils.ensure_output_dir(output_dir or self.cfg.output_dir)

        rows = []
        for name, overrides in CAMPAIGNS[kind]:
            member_dir = str(directory / name)
            member = EvadeAgent(self.member_config(overrides, member_dir))
            summary = member.run_experiment(member_dir)
            rows.append(dict(summary, name=name, horizon=member.cfg.horizon,
                             budget=member.cfg.budget, evade_enabled=member.cfg.evade_enabled))

        table = Utils.format_table(
            ["name", "h", "budget", "completion", "score"],
            [[r["name"], r["horizon"], r["budget"],
              f"{r['completion_rate']:.3f} ± {r['completion_rate_ci']:.3f}",
              f"{r['final_score']:.3f} ± {r['final_score_ci']:.3f}"] for r in rows],
        )
        store = MetricsStore(str(directory))
        store.write_text("campaign_table.txt", table)
        store.write_json("campaign_table.json", rows)
        return rows

    # ---------- 辅助命令 ----------

    def warmup(self, path: str, run: int = 0) -> int:
        """生成预热经验并保存，返回样本数"""
        replay = ReplayBuffer(self.cfg.trainer.replay_capacity)
        warmup_replay(replay, self.cfg, self.seeds, run=run, sample_count=self.cfg.trainer.warmup_samples)
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        save_replay(path, replay)
        return len(replay)

    def gradcheck(self, net: Optional[str] = None) -> Dict[str, Any]:
        """在随机输入上检查网络的解析梯度"""
        descriptor = ArchitectureDescriptor.preset(net or self.cfg.net)
        rng = self.seeds.rng("gradcheck")
        value_net = ValueNet(descriptor, rng)
        inputs = sample_smooth_inputs(value_net, rng)
        error = gradient_check(value_net, inputs, rng=rng)
        return {"net": descriptor.name, "parameters": value_net.parameter_count(), "max_relative_error": error}

    def solve_toy_mdp(self, states: int = 5, actions: int = 2, gamma: Optional[float] = None) -> Dict[str, Any]:
        """随机表格MDP的值迭代"""
        gamma = self.cfg.gamma if gamma is None else gamma
        mdp = random_tabular_mdp(states, actions, self.seeds.rng("toy_mdp", states, actions))
        values = value_iteration(mdp, gamma)
        policy = mdp.bellman_backup(values, gamma).argmax(axis=1)
        rows = describe_mdp(mdp, values)
        for row, action in zip(rows, policy):
            row["greedy_action"] = int(action)
        return {"gamma": gamma, "states": rows}

    def describe_layout(self, reach: Optional[Tuple[int, int]] = None,
                        horizon: Optional[int] = None) -> Dict[str, Any]:
        """工厂布局、可达格子和单步联合计划空间"""
        env = self.runner.env
        horizon = self.cfg.horizon if horizon is None else horizon
        rows = env.grid.as_rows()
        mask = None
        if reach is not None:
            cells = env.reachable_cells(reach, horizon)
            mask = [[(r, c) in cells for c in range(len(row))] for r, row in enumerate(rows)]
        return {
            "cell_types": list(env.grid.cell_types),
            "grid": Utils.render_grid(rows, mask),
            "reachable": None if mask is None else int(np.sum(mask)),
            "joint_plan_count": joint_plan_count(env.action_count, horizon, self.cfg.agent_count),
        }
