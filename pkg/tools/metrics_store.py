"""
实验指标存储

按行写入的结构化记录：回合记录、耗时、跨运行汇总
"""

from typing import Any, Dict, Iterator, List, Optional, Tuple
import json
from pathlib import Path

EPISODES_FILE = "episodes.jsonl"
TIMINGS_FILE = "timings.jsonl"
AGGREGATE_FILE = "aggregate.jsonl"
SUMMARY_FILE = "summary.txt"


def _dumps(record: Dict[str, Any]) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True)


class MetricsStore:
    """实验输出目录中的指标文件"""

    def __init__(self, storage_path: str):
        """
        初始化指标存储

        Args:
            storage_path: 输出目录
        """
        self.storage_path = Path(storage_path)
        self.storage_path.mkdir(parents=True, exist_ok=True)

    @property
    def episodes_path(self) -> Path:
        return self.storage_path / EPISODES_FILE

    def start(self, config: Dict[str, Any]):
        """新建指标文件，首行写入完整配置"""
        with open(self.episodes_path, 'w', encoding='utf-8') as f:
            f.write(_dumps({'type': 'header', 'config': config}) + "\n")
        (self.storage_path / TIMINGS_FILE).write_text("", encoding='utf-8')

    def append_episode(self, record: Dict[str, Any]):
        self._append(self.episodes_path, dict(record, type='episode'))

    def append_timing(self, run: int, episode: int, wall_clock: float):
        self._append(self.storage_path / TIMINGS_FILE,
                     {'run': run, 'episode': episode, 'wall_clock': wall_clock})

    def _append(self, path: Path, record: Dict[str, Any]):
        with open(path, 'a', encoding='utf-8') as f:
            f.write(_dumps(record) + "\n")
            f.flush()

    def write_aggregate(self, rows: List[Dict[str, Any]]):
        with open(self.storage_path / AGGREGATE_FILE, 'w', encoding='utf-8') as f:
            for row in rows:
                f.write(_dumps(row) + "\n")

    def write_summary(self, text: str):
        (self.storage_path / SUMMARY_FILE).write_text(text, encoding='utf-8')

    def write_json(self, filename: str, data: Any):
        with open(self.storage_path / filename, 'w', encoding='utf-8') as f:
            json.dump(data, f, ensure_ascii=False, indent=2, sort_keys=True)

    def write_text(self, filename: str, text: str):
        (self.storage_path / filename).write_text(text, encoding='utf-8')

    def load_episodes(self) -> Tuple[Optional[Dict[str, Any]], List[Dict[str, Any]]]:
        """
        读取回合记录

        Returns:
            (配置头, 回合记录列表)
        """
        header = None
        records = []
        for record in self._iter_lines(self.episodes_path):
            if record.get('type') == 'header':
                header = record.get('config')
            elif record.get('type') == 'episode':
                records.append(record)
        return header, records

    def load_aggregate(self) -> List[Dict[str, Any]]:
        return list(self._iter_lines(self.storage_path / AGGREGATE_FILE))

    def _iter_lines(self, path: Path) -> Iterator[Dict[str, Any]]:
        if not path.exists():
            return
        with open(path, 'r', encoding='utf-8') as f:
            for line in f:
                line = line.strip()
                if line:
                    yield json.loads(line)
