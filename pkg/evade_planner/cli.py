#!/usr/bin/env python3
"""
EVADE Planner 命令行工具

提供命令行接口来运行实验、生成预热数据和做各种检查
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from .agent import EvadeAgent
from .config import build_experiment_config, default_log_level, load_config_document
from .exceptions import EvadeError
from .result_comparator import ResultComparator
from .utils import Utils

GRADCHECK_TOLERANCE = 1e-4


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"不是整数: {text}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"必须 >= 1: {text}")
    return value


def non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"不是整数: {text}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"必须 >= 0: {text}")
    return value


def seed_value(text: str) -> int:
    """64位无符号种子"""
    value = non_negative_int(text)
    if value >= 2 ** 64:
        raise argparse.ArgumentTypeError(f"种子超出64位范围: {text}")
    return value


def cell(text: str):
    try:
        row, col = (int(v) for v in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f"格子格式应为 R,C: {text}")
    return row, col


def _experiment_options() -> argparse.ArgumentParser:
    """各子命令共用的实验参数"""
    options = argparse.ArgumentParser(add_help=False)
    options.add_argument('--config', '-c', help='JSON或YAML配置文件')
    options.add_argument('--seed', type=seed_value, help='主种子')
    options.add_argument('--algo', choices=['dice', 'doolp'], help='规划算法')
    options.add_argument('--agents', type=positive_int, help='智能体数量')
    options.add_argument('--horizon', type=positive_int, help='规划视野 h')
    options.add_argument('--budget', type=positive_int, help='每个决策的模拟步数预算')
    options.add_argument('--episodes', type=positive_int, help='每次运行的回合数')
    options.add_argument('--runs', type=positive_int, help='运行次数')
    options.add_argument('--evade', choices=['on', 'off'], help='是否使用价值自举')
    options.add_argument('--net', choices=['paper', 'full', 'desk'], help='网络预设（paper 与 full 相同）')
    options.add_argument('--return-mode', choices=['full', 'per_depth'], help='MAB更新所用的回报')
    options.add_argument('--layout-file', help='机器布局文件（25个整数）')
    options.add_argument('--warmup-replay', help='已保存的预热经验 .npz')
    options.add_argument('--trace', type=non_negative_int, help='每次运行写出轨迹的回合数')
    options.add_argument('--out', '-o', help='输出目录')
    options.add_argument('--no-progress', action='store_true', help='不显示进度条')
    options.add_argument('--log-level', default=None,
                         choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='日志级别')
    return options


def build_parser() -> argparse.ArgumentParser:
    options = _experiment_options()
    parser = argparse.ArgumentParser(
        prog='evade-planner',
        description='EVADE Planner - 多智能体开环规划与价值学习实验工具',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
使用示例:
  evade-planner run --algo dice --agents 4 --horizon 4 --budget 192 --evade on
  evade-planner run --evade off --budget 512 --horizon 4 --out results/baseline
  evade-planner warmup --out results --samples 5000
  evade-planner layout --reach 2,2 --horizon 2
  evade-planner compare results/baseline results/evade
        """
    )
    sub = parser.add_subparsers(dest='command', required=True)

    sub.add_parser('run', parents=[options], help='运行实验')

    warmup = sub.add_parser('warmup', parents=[options], help='生成并保存预热经验')
    warmup.add_argument('--output', help='输出文件（缺省为 <out>/warmup_replay.npz）')
    warmup.add_argument('--samples', type=non_negative_int, help='样本数')

    gradcheck = sub.add_parser('gradcheck', parents=[options], help='检查价值网络梯度')
    gradcheck.add_argument('--tolerance', type=float, default=GRADCHECK_TOLERANCE, help='允许的最大相对误差')

    oracle = sub.add_parser('oracle', parents=[options], help='随机表格MDP的值迭代')
    oracle.add_argument('--states', type=positive_int, default=5, help='状态数')
    oracle.add_argument('--actions', type=positive_int, default=2, help='动作数')
    oracle.add_argument('--gamma', type=float, default=None, help='折扣因子')

    layout = sub.add_parser('layout', parents=[options], help='显示工厂布局')
    layout.add_argument('--reach', type=cell, help='标出从 R,C 出发 h 步内可达的格子')
    layout.add_argument('--save', help='把布局保存到文件')

    campaign = sub.add_parser('campaign', parents=[options], help='运行一组对比实验')
    campaign.add_argument('--kind', choices=['budget', 'horizon'], default='budget', help='实验组合')

    compare = sub.add_parser('compare', help='比较两个输出目录')
    compare.add_argument('base', help='基准目录')
    compare.add_argument('candidate', help='候选目录')
    compare.add_argument('--last-k', type=positive_int, default=10, help='比较最后几个回合')
    compare.add_argument('--log-level', default=None,
                         choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='日志级别')
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """把命令行参数转换为配置覆盖项，未给出的参数不覆盖配置文件"""
    from tools.trace_store import load_layout

    overrides: Dict[str, Any] = {}
    factory: Dict[str, Any] = {}
    trainer: Dict[str, Any] = {}
    simple = {
        'seed': 'master_seed',
        'algo': 'algorithm',
        'horizon': 'horizon',
        'budget': 'budget',
        'episodes': 'episodes',
        'runs': 'runs',
        'net': 'net',
        'return_mode': 'return_mode',
        'warmup_replay': 'warmup_replay_path',
        'trace': 'trace_episodes',
        'out': 'output_dir',
    }
    for flag, key in simple.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if args.evade is not None:
        overrides['evade_enabled'] = args.evade == 'on'
    if args.no_progress:
        overrides['show_progress'] = False
    if args.agents is not None:
        factory['agent_count'] = args.agents
    if args.layout_file:
        factory['grid_layout'] = load_layout(args.layout_file)
    if getattr(args, 'samples', None) is not None:
        trainer['warmup_samples'] = args.samples
    if factory:
        overrides['factory'] = factory
    if trainer:
        overrides['trainer'] = trainer
    return overrides


def _load_agent(args: argparse.Namespace) -> EvadeAgent:
    document = load_config_document(args.config) if args.config else {}
    cfg = build_experiment_config(document, collect_overrides(args))
    return EvadeAgent(cfg)


def _print_summary(summary: Dict[str, Any]):
    print(f"运行次数: {summary['runs']}")
    print(f"完成率: {summary['completion_rate']:.3f} ± {summary['completion_rate_ci']:.3f}")
    print(f"最终分数: {summary['final_score']:.3f} ± {summary['final_score_ci']:.3f}")


def _run(args) -> int:
    agent = _load_agent(args)
    print(f"=== 实验 {agent.cfg.label()} ===")
    summary = agent.run_experiment()
    _print_summary(summary)
    print(f"\n结果已保存到: {agent.cfg.output_dir}")
    return 0


def _warmup(args) -> int:
    agent = _load_agent(args)
    path = args.output or str(Path(agent.cfg.output_dir) / 'warmup_replay.npz')
    count = agent.warmup(path)
    print(f"已生成 {count} 个预热样本: {path}")
    return 0


def _gradcheck(args) -> int:
    agent = _load_agent(args)
    result = agent.gradcheck()
    print(f"网络: {result['net']} ({result['parameters']:,} 个参数)")
    print(f"最大相对误差: {result['max_relative_error']:.3e}")
    if result['max_relative_error'] > args.tolerance:
        print(f"错误: 梯度检查未通过（阈值 {args.tolerance:.1e}）", file=sys.stderr)
        return 1
    print("梯度检查通过")
    return 0


def _oracle(args) -> int:
    agent = _load_agent(args)
    result = agent.solve_toy_mdp(args.states, args.actions, args.gamma)
    rows = [[s['state'], f"{s['value']:.6f}", s['greedy_action'], s['rewards']] for s in result['states']]
    print(f"gamma = {result['gamma']}")
    print(Utils.format_table(['state', 'V*', 'action', 'rewards'], rows), end='')
    return 0


def _layout(args) -> int:
    from tools.trace_store import save_layout

    agent = _load_agent(args)
    result = agent.describe_layout(args.reach, args.horizon)
    print(result['grid'])
    if result['reachable'] is not None:
        print(f"\n{args.reach} 出发 {agent.cfg.horizon} 步内可达: {result['reachable']} 个格子")
    print(f"单步联合计划数 6^(h*n): {result['joint_plan_count']:,}")
    if args.save:
        save_layout(args.save, result['cell_types'], comment=f"layout_seed={agent.cfg.factory.layout_seed}")
        print(f"布局已保存到: {args.save}")
    return 0


def _campaign(args) -> int:
    agent = _load_agent(args)
    rows = agent.run_campaign(args.kind)
    for row in rows:
        print(f"{row['name']}: 完成率 {row['completion_rate']:.3f} ± {row['completion_rate_ci']:.3f}")
    print(f"\n结果已保存到: {agent.cfg.output_dir}")
    return 0


def _compare(args) -> int:
    comparator = ResultComparator(args.last_k)
    print(comparator.format_comparison(comparator.compare(args.base, args.candidate)), end='')
    return 0


COMMANDS = {
    'run': _run,
    'warmup': _warmup,
    'gradcheck': _gradcheck,
    'oracle': _oracle,
    'layout': _layout,
    'campaign': _campaign,
    'compare': _compare,
}


def main(argv: Optional[List[str]] = None) -> int:
    """主函数，返回退出码"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(
        level=args.log_level or default_log_level(),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )

    try:
        return COMMANDS[args.command](args)
    except (EvadeError, OSError) as e:
        print(f"错误: {e}", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
