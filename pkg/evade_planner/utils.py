"""
工具函数

提供随机流派生、统计量计算和文本渲染等通用辅助功能
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Any, List, Sequence, Union

import numpy as np

from .exceptions import ConfigurationError

CI_Z = 1.96


class SeedSequencer:
    """
    随机流派生器

    每个随机组件的流由 (主种子, 角色, 运行, 回合, 步, ...) 唯一确定，
    没有任何全局随机状态。
    """

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)

    @staticmethod
    def role_id(role: str) -> int:
        return int.from_bytes(hashlib.sha256(role.encode("utf-8")).digest()[:4], "little")

    def sequence(self, role: str, *indices: int) -> np.random.SeedSequence:
        key = (self.role_id(role),) + tuple(int(i) for i in indices)
        return np.random.SeedSequence(entropy=self.master_seed, spawn_key=key)

    def rng(self, role: str, *indices: int) -> np.random.Generator:
        return np.random.default_rng(self.sequence(role, *indices))


class Utils:
    """工具类"""

    @staticmethod
    def ensure_output_dir(path: Union[str, Path]) -> Path:
        """创建输出目录并确认可写，不可写时抛出配置错误"""
        directory = Path(path)
        try:
            directory.mkdir(parents=True, exist_ok=True)
            probe = directory / ".write_probe"
            probe.write_text("", encoding="utf-8")
            probe.unlink()
        except OSError as e:
            raise ConfigurationError(f"输出目录不可写: {directory} ({e})") from e
        return directory

    @staticmethod
    def running_mean(values: Sequence[float], window: int = 5) -> List[float]:
        """滑动平均；前 window-1 个位置使用截断窗口"""
        data = np.asarray(values, dtype=np.float64)
        if data.size == 0:
            return []
        totals = np.concatenate(([0.0], np.cumsum(data)))
        end = np.arange(1, data.size + 1)
        start = np.maximum(0, end - window)
        return ((totals[end] - totals[start]) / (end - start)).tolist()

    @staticmethod
    def ci_half_width(values: Sequence[float]) -> float:
        """95%置信区间半宽（正态近似 1.96*s/sqrt(n)），少于两个值时为0"""
        n = len(values)
        if n < 2:
            return 0.0
        return float(CI_Z * np.std(values, ddof=1) / np.sqrt(n))

    @staticmethod
    def mean(values: Sequence[float]) -> float:
        return float(np.mean(values)) if len(values) else float('nan')

    @staticmethod
    def format_table(headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
        """等宽文本表格"""
        cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
        lines = []
        for index, row in enumerate(cells):
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
            if index == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    @staticmethod
    def render_grid(rows: Sequence[Sequence[int]], mask: Sequence[Sequence[bool]] = None) -> str:
        """把网格渲染为文本，mask 为 False 的格子显示为 '--'"""
        lines = []
        for r, row in enumerate(rows):
            cells = []
            for c, value in enumerate(row):
                visible = mask is None or mask[r][c]
                cells.append(f"{value:>2}" if visible else "--")
            lines.append(" ".join(cells))
        return "\n".join(lines)
