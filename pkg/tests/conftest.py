import os

import pytest


def pytest_collection_modifyitems(config, items):
    if os.getenv("EVADE_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="设置 EVADE_RUN_SLOW=1 运行桌面规模实验")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
