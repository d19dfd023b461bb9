import numpy as np
import pytest
from scipy import stats

from evade_planner.bandits import Mab, MabStack, SlidingWindowBuffer, greedy_action, sample_plan, thompson_select, update_stack
from evade_planner.exceptions import ContractViolation, PlanningError


def _filled(values_per_arm):
    mab = Mab(len(values_per_arm))
    for arm, values in enumerate(values_per_arm):
        for value in values:
            mab.push(arm, value)
    return mab


def test_window_keeps_last_ten():
    buffer = SlidingWindowBuffer()
    for value in range(25):
        buffer.push(value)
    assert buffer.values == list(range(15, 25))
    assert buffer.mean() == sum(range(15, 25)) / 10


def test_window_statistics():
    buffer = SlidingWindowBuffer()
    assert buffer.std() == 0.0
    with pytest.raises(PlanningError):
        buffer.mean()
    for value in [2.0, 4.0, 9.0]:
        buffer.push(value)
    assert buffer.mean() == pytest.approx(5.0)
    assert buffer.std() == pytest.approx(np.std([2.0, 4.0, 9.0], ddof=1))


def test_single_arm_always_zero():
    mab = Mab(1)
    rng = np.random.default_rng(0)
    assert all(thompson_select(mab, rng) == 0 for _ in range(20))


def test_empty_arm_is_forced():
    mab = _filled([[1, 2, 3, 4, 5], []])
    rng = np.random.default_rng(1)
    assert all(mab.thompson_select(rng) == 1 for _ in range(50))


def test_clearly_better_arm_dominates():
    mab = _filled([[10] * 5, [0] * 5])
    rng = np.random.default_rng(2)
    picks = [mab.thompson_select(rng) for _ in range(10_000)]
    assert picks.count(0) / len(picks) >= 0.99


def test_noisy_better_arm_dominates():
    rng = np.random.default_rng(3)
    mab = _filled([list(rng.normal(10, 1, size=10)), list(rng.normal(0, 1, size=10))])
    picks = [mab.thompson_select(rng) for _ in range(10_000)]
    assert picks.count(0) / len(picks) >= 0.99


def test_sample_plan_length():
    assert len(sample_plan(MabStack(4), np.random.default_rng(0))) == 4


def test_dominant_plan_sampled():
    rng = np.random.default_rng(4)
    stack = MabStack(3)
    dominant = [1, 4, 2]
    for depth, mab in enumerate(stack.bandits):
        for arm in range(6):
            centre = 10.0 if arm == dominant[depth] else 0.0
            for value in rng.normal(centre, 1.0, size=10):
                mab.push(arm, value)
    draws = [stack.sample_plan(rng) for _ in range(1000)]
    assert sum(plan == dominant for plan in draws) / len(draws) >= 0.95


def test_fresh_stack_samples_uniformly():
    stack = MabStack(2)
    rng = np.random.default_rng(5)
    counts = np.zeros(36)
    for _ in range(10_000):
        first, second = stack.sample_plan(rng)
        counts[first * 6 + second] += 1
    assert counts.min() > 0
    assert stats.chisquare(counts).pvalue > 0.01


def test_update_stack_window():
    stack = MabStack(2)
    for value in range(11):
        update_stack(stack, [3, 5], float(value))
    assert stack.bandits[0].buffers[3].values == [float(v) for v in range(1, 11)]
    assert stack.bandits[1].buffers[5].values == [float(v) for v in range(1, 11)]
    assert all(len(stack.bandits[0].buffers[a]) == 0 for a in range(6) if a != 3)


def test_update_touches_one_arm_per_depth():
    stack = MabStack(3)
    update_stack(stack, [0, 1, 2], 4.0)
    snapshot = stack.snapshot()
    for depth, arm in enumerate([0, 1, 2]):
        for other in range(6):
            assert snapshot[depth][other] == ([4.0] if other == arm else [])


def test_update_per_depth_returns():
    stack = MabStack(3)
    stack.update([1, 1, 1], [3.0, 2.0, 1.0])
    assert [mab.buffers[1].values for mab in stack.bandits] == [[3.0], [2.0], [1.0]]
    with pytest.raises(ContractViolation):
        stack.update([1, 1, 1], [1.0, 2.0])
    with pytest.raises(ContractViolation):
        stack.update([1, 1], 1.0)


def test_greedy_action():
    stack = MabStack(1)
    for arm, value in enumerate([0.1, 0.9, 0.3]):
        stack.update([arm], value)
    assert greedy_action(stack) == 1

    tie = MabStack(1)
    tie.update([4], 2.0)
    tie.update([2], 2.0)
    tie.update([0], -1.0)
    assert greedy_action(tie) == 2

    with pytest.raises(PlanningError):
        greedy_action(MabStack(2))


def test_thompson_location_equivariance():
    rng = np.random.default_rng(6)
    values = [list(rng.normal(arm, 2.0, size=6)) for arm in range(6)]
    shift = 37.5
    base = _filled(values)
    shifted = _filled([[v + shift for v in arm] for arm in values])
    rng_a, rng_b = np.random.default_rng(99), np.random.default_rng(99)
    for _ in range(200):
        assert base.thompson_select(rng_a) == shifted.thompson_select(rng_b)


def test_greedy_invariant_under_affine_transform():
    rng = np.random.default_rng(7)
    values = [list(rng.normal(size=4)) for _ in range(6)]
    base = MabStack(1)
    scaled = MabStack(1)
    for arm, arm_values in enumerate(values):
        for v in arm_values:
            base.update([arm], v)
            scaled.update([arm], 3.0 * v - 11.0)
    assert base.greedy_action() == scaled.greedy_action()


def test_two_arm_bandit_prefers_better_arm():
    passing = 0
    for seed in range(100):
        mab = Mab(2)
        rng = np.random.default_rng(seed)
        better = 0
        for _ in range(200):
            arm = mab.thompson_select(rng)
            mab.push(arm, 1.0 if arm == 1 else 0.0)
            better += arm == 1
        passing += better / 200 >= 0.8
    assert passing >= 95
