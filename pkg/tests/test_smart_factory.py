import numpy as np
import pytest

from evade_planner.config import FactoryConfig
from evade_planner.exceptions import ContractViolation, ModelValidationError
from evade_planner.smart_factory import AgentState, FactoryAction, FactoryState, MachineGrid, SmartFactory

A = FactoryAction


def _single_agent(factory: SmartFactory, position=(2, 2), tasks=None, enqueued=False) -> FactoryState:
    if tasks is None:
        tasks = [{factory.grid.type_at(position)}]
    return FactoryState.build(factory.grid, [AgentState(0, position, tasks, enqueued)])


def test_default_layout_covers_every_type():
    grid = MachineGrid.generate(2018)
    assert len(grid.cell_types) == 25
    assert set(grid.cell_types) == set(range(15))
    assert len(grid.cells_of_type(9)) == 2
    assert len(grid.cells_of_type(12)) == 1
    assert MachineGrid.generate(2018) == grid


def test_layout_validation():
    with pytest.raises(ModelValidationError):
        MachineGrid(tuple(range(24)))
    with pytest.raises(ModelValidationError):
        MachineGrid(tuple([0] * 25))
    with pytest.raises(ModelValidationError):
        MachineGrid(tuple(list(range(15)) + [15] * 10))


def test_new_factory():
    factory = SmartFactory(FactoryConfig(agent_count=4))
    state = factory.new_factory(np.random.default_rng(7))
    assert len(state.agents) == 4
    assert all(a.open_task_count() == 4 for a in state.agents)
    assert state.score() == -16
    again = factory.new_factory(np.random.default_rng(7))
    assert [a.tasks for a in again.agents] == [a.tasks for a in state.agents]
    assert [a.position for a in again.agents] == [a.position for a in state.agents]


def test_initial_eight_agent_score():
    state = SmartFactory(FactoryConfig(agent_count=8)).new_factory(np.random.default_rng(0))
    assert state.score() == -32


def test_task_example_can_use_either_machine():
    factory = SmartFactory()
    for position in factory.grid.cells_of_type(9):
        state = _single_agent(factory, position, tasks=[{9, 12}, {3, 10}])
        assert state.agents[0].needs(9)


def test_score_components():
    factory = SmartFactory()
    agents = [AgentState(i, (0, 0), []) for i in range(4)]
    state = FactoryState.build(factory.grid, agents)
    state.cost_total, state.tpen_total = 1.0, 2.0
    assert state.score() == pytest.approx(1.0)
    assert state.completion_rate() == 1.0


def test_completion_rate():
    grid = SmartFactory().grid
    agents = [AgentState(i, (0, 0), [] if i < 4 else [{1}]) for i in range(8)]
    assert FactoryState.build(grid, agents).completion_rate() == 0.5
    assert FactoryState.build(grid, [AgentState(0, (0, 0), [{1}])]).completion_rate() == 0.0


def test_successful_processing_reward():
    factory = SmartFactory(FactoryConfig(agent_count=1, machine_failure_prob=0.0))
    position = (2, 2)
    machine = factory.grid.type_at(position)
    other = [t for t in range(15) if t != machine]
    state = _single_agent(factory, position, tasks=[{machine, other[0]}, {other[1], other[2]}])
    assert state.score() == -4
    _, reward, terminal = factory.step(state, [A.ENQUEUE], np.random.default_rng(0))
    assert reward == pytest.approx(0.65)
    assert not terminal


def test_north_at_top_row_is_noop():
    factory = SmartFactory(FactoryConfig(agent_count=1))
    state = _single_agent(factory, (0, 3))
    factory.step(state, [A.NORTH], np.random.default_rng(0))
    assert state.agents[0].position == (0, 3)
    factory.step(state, [A.EAST], np.random.default_rng(0))
    assert state.agents[0].position == (0, 4)


def test_wrong_machine_charges_cost_without_progress():
    factory = SmartFactory(FactoryConfig(agent_count=1, machine_failure_prob=0.0))
    position = (1, 1)
    wanted = (factory.grid.type_at(position) + 1) % 15
    state = _single_agent(factory, position, tasks=[{wanted}])
    _, reward, _ = factory.step(state, [A.ENQUEUE], np.random.default_rng(0))
    assert reward == pytest.approx(-0.25 - 0.1)
    assert state.agents[0].tasks == [{wanted}]
    assert not state.agents[0].enqueued


def test_failure_keeps_agent_queued_without_cost():
    factory = SmartFactory(FactoryConfig(agent_count=1, machine_failure_prob=1.0))
    state = _single_agent(factory)
    factory.step(state, [A.ENQUEUE], np.random.default_rng(0))
    assert state.agents[0].enqueued
    assert state.cost_total == 0.0
    assert state.queues[factory.grid.cell_index((2, 2))] == [0]


def test_second_bucket_is_not_processed_early():
    factory = SmartFactory(FactoryConfig(agent_count=1, machine_failure_prob=0.0))
    position = (3, 3)
    machine = factory.grid.type_at(position)
    first = (machine + 1) % 15
    state = _single_agent(factory, position, tasks=[{first}, {machine}])
    factory.step(state, [A.ENQUEUE], np.random.default_rng(0))
    assert state.agents[0].tasks == [{first}, {machine}]


def test_queue_is_fifo():
    factory = SmartFactory(FactoryConfig(agent_count=2, machine_failure_prob=0.0))
    position = (4, 0)
    machine = factory.grid.type_at(position)
    agents = [AgentState(i, position, [{machine}, {(machine + 1) % 15}]) for i in range(2)]
    state = FactoryState.build(factory.grid, agents)
    factory.step(state, [A.ENQUEUE, A.ENQUEUE], np.random.default_rng(0))
    assert state.agents[0].tasks == [{(machine + 1) % 15}]
    assert state.agents[1].enqueued
    assert state.queues[factory.grid.cell_index(position)] == [1]


def test_step_contract_violations():
    factory = SmartFactory(FactoryConfig(agent_count=1, episode_length=1))
    state = _single_agent(factory)
    with pytest.raises(ContractViolation):
        factory.step(state, [A.NOOP, A.NOOP], np.random.default_rng(0))
    with pytest.raises(ContractViolation):
        factory.step(state, [9], np.random.default_rng(0))
    state = _single_agent(factory)
    _, _, terminal = factory.step(state, [A.NOOP], np.random.default_rng(0))
    assert terminal
    with pytest.raises(ContractViolation):
        factory.step(state, [A.NOOP], np.random.default_rng(0))


def test_machine_failure_frequency():
    factory = SmartFactory(FactoryConfig(agent_count=1))
    rng = np.random.default_rng(2018)
    failures = 0
    trials = 10_000
    for _ in range(trials):
        state = _single_agent(factory, enqueued=True)
        factory.step(state, [A.NOOP], rng)
        failures += state.agents[0].enqueued
    assert 0.09 <= failures / trials <= 0.11


def test_telescoping_over_random_episodes():
    factory = SmartFactory(FactoryConfig(agent_count=4))
    for episode in range(100):
        rng = np.random.default_rng(episode)
        state = factory.new_factory(rng)
        initial = state.score()
        total, terminal = 0.0, False
        while not terminal:
            actions = [int(a) for a in rng.integers(0, 6, size=4)]
            state, reward, terminal = factory.step(state, actions, rng)
            total += reward
        assert state.t <= 50
        assert total == pytest.approx(state.score() - initial, abs=1e-9)


def test_monotone_quantities_and_frozen_complete_agents():
    factory = SmartFactory(FactoryConfig(agent_count=4, machine_failure_prob=0.0))
    rng = np.random.default_rng(9)
    state = factory.new_factory(rng)
    positions = {}
    terminal = False
    while not terminal:
        before = (state.open_tasks(), state.cost_total, state.tpen_total, set(state.complete_set))
        state, _, terminal = factory.step(state, [int(a) for a in rng.integers(0, 6, size=4)], rng)
        assert state.open_tasks() <= before[0]
        assert state.cost_total >= before[1]
        assert state.tpen_total >= before[2]
        assert before[3] <= state.complete_set
        for agent_id in before[3]:
            positions.setdefault(agent_id, state.agents[agent_id].position)
            assert state.agents[agent_id].position == positions[agent_id]


def test_episode_ends_when_all_complete():
    factory = SmartFactory(FactoryConfig(agent_count=1, machine_failure_prob=0.0))
    state = _single_agent(factory)
    _, reward, terminal = factory.step(state, [A.ENQUEUE], np.random.default_rng(0))
    assert terminal
    assert state.t == 1
    assert state.completion_rate() == 1.0
    assert reward == pytest.approx(2.0 - 0.25)


def test_deterministic_without_failures():
    factory = SmartFactory(FactoryConfig(agent_count=1, machine_failure_prob=0.0))
    plan = [A.EAST, A.ENQUEUE, A.SOUTH, A.ENQUEUE, A.WEST]
    results = []
    for seed in (1, 2):
        state = _single_agent(factory, (1, 1), tasks=[{1, 2}, {3, 4}])
        rng = np.random.default_rng(seed)
        rewards = [factory.step(state, [a], rng)[1] for a in plan]
        results.append((rewards, state.agents[0].position, state.agents[0].tasks))
    assert results[0] == results[1]


def test_clone_isolation():
    factory = SmartFactory()
    state = factory.new_factory(np.random.default_rng(1))
    snapshot = (state.t, [a.copy() for a in state.agents], [list(q) for q in state.queues], state.score())
    sandbox = factory.clone_for_simulation(state)
    rng = np.random.default_rng(5)
    for _ in range(50):
        sandbox, _, terminal = factory.step(sandbox, [int(a) for a in rng.integers(0, 6, size=4)], rng)
        if terminal:
            break
    assert state.t == snapshot[0]
    assert state.agents == snapshot[1]
    assert state.queues == snapshot[2]
    assert state.score() == snapshot[3]


def test_clone_matches_original_with_same_stream():
    factory = SmartFactory()
    state = factory.new_factory(np.random.default_rng(3))
    clone = factory.clone(state)
    actions = np.random.default_rng(4).integers(0, 6, size=(20, 4))
    rng_a, rng_b = np.random.default_rng(8), np.random.default_rng(8)
    for row in actions:
        _, ra, _ = factory.step(state, list(row), rng_a)
        _, rb, _ = factory.step(clone, list(row), rng_b)
        assert ra == rb
    assert state.agents == clone.agents


def test_cloned_rollouts_match_analytic_expectation():
    factory = SmartFactory(FactoryConfig(agent_count=1, bucket_count=1, tasks_per_bucket=1))
    root = _single_agent(factory)
    plan = [A.ENQUEUE, A.NOOP, A.NOOP, A.NOOP]
    rng = np.random.default_rng(123)
    returns = []
    for _ in range(1000):
        sandbox = factory.clone_for_simulation(root)
        total = 0.0
        for action in plan:
            sandbox, reward, terminal = factory.step(sandbox, [action], rng)
            total += reward
            if terminal:
                break
        returns.append(total)
    # 第 k 步加工成功：1.75 - 0.1(k-1)；四步都失败：-0.4
    expected = sum(0.9 * 0.1 ** (k - 1) * (1.75 - 0.1 * (k - 1)) for k in range(1, 5)) + 0.1 ** 4 * -0.4
    stderr = np.std(returns, ddof=1) / np.sqrt(len(returns))
    assert abs(np.mean(returns) - expected) <= 3 * stderr


def test_encode_features_task_planes():
    factory = SmartFactory()
    state = _single_agent(factory, (1, 3), tasks=[{9, 12}, {3, 10}])
    planes = factory.encode_features(state)
    assert planes.shape == (5, 5, 35)
    assert planes[1, 3, 5 + 9] == 1 and planes[1, 3, 5 + 12] == 1
    assert planes[1, 3, 20 + 3] == 1 and planes[1, 3, 20 + 10] == 1
    assert planes[:, :, 5:].sum() == 4
    assert planes[:, :, 1:5].sum() == 1
    np.testing.assert_allclose(planes[:, :, 0], np.array(factory.grid.as_rows()) / 14)


def test_encode_features_counts_needed_agents():
    factory = SmartFactory()
    position = (2, 4)
    machine = factory.grid.type_at(position)
    agents = [AgentState(i, position, [{machine}]) for i in range(2)]
    planes = factory.encode_features(FactoryState.build(factory.grid, agents))
    assert planes[2, 4, 2] == 2
    assert planes[:, :, 1:5].sum() == 2


def test_encode_features_without_active_agents():
    factory = SmartFactory()
    state = FactoryState.build(factory.grid, [AgentState(0, (0, 0), [])])
    assert not factory.encode_features(state)[:, :, 1:].any()


def test_first_bucket_plane_sum():
    factory = SmartFactory(FactoryConfig(agent_count=8))
    state = factory.new_factory(np.random.default_rng(21))
    planes = factory.encode_features(state)
    assert planes[:, :, 5:20].sum() == sum(len(a.tasks[0]) for a in state.active_agents())


@pytest.mark.parametrize("position, horizon, expected", [
    ((2, 2), 2, 13),
    ((2, 2), 4, 25),
    ((0, 0), 1, 3),
])
def test_reachable_cells(position, horizon, expected):
    assert len(SmartFactory().reachable_cells(position, horizon)) == expected
