"""
结果比较工具

比较两个实验输出目录最后若干回合的完成率与分数
"""

from typing import Any, Dict, List

from .exceptions import ConfigurationError
from .utils import Utils


class ResultComparator:
    """结果比较器"""

    def __init__(self, last_k: int = 10):
        if last_k < 1:
            raise ConfigurationError(f"last_k 必须 >= 1，收到 {last_k}")
        self.last_k = last_k

    def summarize(self, result_dir: str) -> Dict[str, Any]:
        """
        汇总一个输出目录

        每个运行先对最后 last_k 个回合取平均，再跨运行取均值与95%置信半宽。

        Args:
            result_dir: run 命令的输出目录

        Returns:
            汇总字典
        """
        from tools.metrics_store import MetricsStore

        _, records = MetricsStore(result_dir).load_episodes()
        if not records:
            raise ConfigurationError(f"目录中没有回合记录: {result_dir}")

        by_run: Dict[int, List[Dict[str, Any]]] = {}
        for record in records:
            by_run.setdefault(record['run'], []).append(record)

        completion, score = [], []
        for run in sorted(by_run):
            tail = sorted(by_run[run], key=lambda r: r['episode'])[-self.last_k:]
            completion.append(Utils.mean([r['completion_rate'] for r in tail]))
            score.append(Utils.mean([r['final_score'] for r in tail]))

        return {
            'dir': str(result_dir),
            'runs': len(by_run),
            'completion_rate': Utils.mean(completion),
            'completion_rate_ci': Utils.ci_half_width(completion),
            'final_score': Utils.mean(score),
            'final_score_ci': Utils.ci_half_width(score),
        }

    def compare(self, base_dir: str, candidate_dir: str) -> Dict[str, Any]:
        """
        比较两个输出目录

        Args:
            base_dir: 基准目录
            candidate_dir: 候选目录

        Returns:
            两侧汇总与差值（候选 - 基准）
        """
        base = self.summarize(base_dir)
        candidate = self.summarize(candidate_dir)
        return {
            'last_k': self.last_k,
            'base': base,
            'candidate': candidate,
            'completion_rate_diff': candidate['completion_rate'] - base['completion_rate'],
            'final_score_diff': candidate['final_score'] - base['final_score'],
        }

    @staticmethod
    def format_comparison(comparison: Dict[str, Any]) -> str:
        rows = []
        for side in ('base', 'candidate'):
            entry = comparison[side]
            rows.append([
                side, entry['dir'], entry['runs'],
                f"{entry['completion_rate']:.3f} ± {entry['completion_rate_ci']:.3f}",
                f"{entry['final_score']:.3f} ± {entry['final_score_ci']:.3f}",
            ])
        table = Utils.format_table(['side', 'dir', 'runs', 'completion', 'score'], rows)
        return (
            f"最后 {comparison['last_k']} 个回合\n{table}"
            f"完成率差: {comparison['completion_rate_diff']:+.3f}\n"
            f"分数差: {comparison['final_score_diff']:+.3f}\n"
        )
