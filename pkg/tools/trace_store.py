"""
布局与回合轨迹的文本格式

布局：25个整数，行优先，空白分隔，'#' 开头的行为注释。
轨迹：每步一行JSON。
"""

from typing import Any, Dict, List, Optional, Sequence
import json
from pathlib import Path


def format_layout(cell_types: Sequence[int], width: int = 5, comment: Optional[str] = None) -> str:
    """把布局格式化为每行 width 个整数的文本"""
    lines = [f"# {comment}"] if comment else []
    for start in range(0, len(cell_types), width):
        lines.append(" ".join(str(int(t)) for t in cell_types[start:start + width]))
    return "\n".join(lines) + "\n"


def parse_layout(text: str) -> List[int]:
    values = []
    for line in text.splitlines():
        line = line.split('#', 1)[0].strip()
        if line:
            values.extend(int(token) for token in line.split())
    return values


def save_layout(path: str, cell_types: Sequence[int], comment: Optional[str] = None):
    Path(path).write_text(format_layout(cell_types, comment=comment), encoding='utf-8')


def load_layout(path: str) -> List[int]:
    """
    读取布局文件

    Args:
        path: 文件路径

    Returns:
        行优先的机器类型列表（未校验）
    """
    return parse_layout(Path(path).read_text(encoding='utf-8'))


class EpisodeTrace:
    """逐步写入的回合轨迹"""

    def __init__(self, path: str):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(self.path, 'w', encoding='utf-8')

    def record(self, t: int, joint_action: Sequence[str], reward: float, components: Dict[str, Any]):
        entry = {'t': t, 'joint_action': list(joint_action), 'reward': reward}
        entry.update(components)
        self._file.write(json.dumps(entry, ensure_ascii=False, sort_keys=True) + "\n")

    def close(self):
        if not self._file.closed:
            self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def load_trace(path: str) -> List[Dict[str, Any]]:
    with open(path, 'r', encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]
