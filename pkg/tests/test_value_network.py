import numpy as np
import pytest

from evade_planner.config import ArchitectureDescriptor, ExperimentConfig, LayerSpec, TrainerConfig
from evade_planner.exceptions import ConfigurationError, ContractViolation, TrainingError
from evade_planner.value_network import AdamOptimizer, ValueNet, adam_update, gradient_check, sample_smooth_inputs


@pytest.fixture
def desk_net():
    return ValueNet(ArchitectureDescriptor.desk(), np.random.default_rng(0))


def test_zero_parameters_predict_zero(desk_net):
    desk_net.zero_parameters()
    rng = np.random.default_rng(1)
    for _ in range(3):
        assert desk_net.predict(rng.uniform(size=(5, 5, 35))) == 0.0


def test_sync_target(desk_net):
    rng = np.random.default_rng(2)
    inputs = rng.uniform(size=(4, 5, 5, 35))
    for p in desk_net.params:
        p += 0.01
    assert not np.allclose(desk_net.predict_batch(inputs), desk_net.predict_batch(inputs, use_target=True))
    desk_net.sync_target()
    np.testing.assert_array_equal(desk_net.predict_batch(inputs), desk_net.predict_batch(inputs, use_target=True))


def test_linear_layer_matches_hand_computation():
    net = ValueNet(ArchitectureDescriptor.linear((1, 1, 3)))
    net.params[0][:] = np.array([[1.0], [2.0], [3.0]])
    net.params[1][:] = 0.5
    assert net.predict(np.array([1.0, 1.0, 2.0]).reshape(1, 1, 3)) == pytest.approx(9.5)


def test_shape_mismatch(desk_net):
    with pytest.raises(ContractViolation):
        desk_net.predict(np.zeros((5, 5, 34)))
    with pytest.raises(ContractViolation):
        desk_net.predict_batch(np.zeros((2, 4, 5, 35)))


def test_batch_and_single_agree(desk_net):
    inputs = np.random.default_rng(3).uniform(size=(3, 5, 5, 35))
    batch = desk_net.predict_batch(inputs)
    assert batch.shape == (3,)
    for i in range(3):
        assert desk_net.predict(inputs[i]) == pytest.approx(batch[i], abs=1e-12)


def test_paper_name_selects_full_preset():
    assert ExperimentConfig(net="paper").architecture() == ArchitectureDescriptor.full()
    assert ArchitectureDescriptor.preset("paper") == ArchitectureDescriptor.preset("full")
    with pytest.raises(ConfigurationError):
        ArchitectureDescriptor.preset("huge")


def test_trainer_steps_per_env_step_positive():
    assert TrainerConfig().gradient_steps_per_env_step == 1
    with pytest.raises(ValueError):
        TrainerConfig(gradient_steps_per_env_step=0)


def test_full_preset_shapes():
    net = ValueNet(ArchitectureDescriptor.full(), np.random.default_rng(0))
    assert net.params[0].shape == (128, 35, 5, 5)
    assert net.params[-2].shape == (256, 1)
    assert np.isfinite(net.predict(np.zeros((5, 5, 35))))


def test_even_kernel_rejected():
    descriptor = ArchitectureDescriptor(layers=[
        LayerSpec(kind="conv", units=2, kernel=2),
        LayerSpec(kind="dense", units=1, activation="linear"),
    ])
    with pytest.raises(ConfigurationError):
        ValueNet(descriptor)


def test_descriptor_requires_scalar_output():
    with pytest.raises(ValueError):
        ArchitectureDescriptor(layers=[LayerSpec(kind="dense", units=2)])


def test_gradient_check_linear():
    net = ValueNet(ArchitectureDescriptor.linear((2, 2, 3)), np.random.default_rng(4))
    rng = np.random.default_rng(5)
    inputs = rng.normal(size=(6, 2, 2, 3))
    assert gradient_check(net, inputs, rng.normal(size=6), rng=rng) <= 1e-8


def test_gradient_check_desk(desk_net):
    rng = np.random.default_rng(6)
    inputs = sample_smooth_inputs(desk_net, rng)
    assert gradient_check(desk_net, inputs, rng.normal(size=len(inputs)), rng=rng) <= 1e-4


def test_smooth_inputs_avoid_elu_kink(desk_net):
    inputs = sample_smooth_inputs(desk_net, np.random.default_rng(7), margin=1e-3)
    assert all(np.min(np.abs(z)) > 1e-3 for z in desk_net.pre_activations(inputs))


def test_adam_quadratic_converges():
    theta = [np.zeros(1)]
    optimizer = AdamOptimizer(theta, learning_rate=0.05)
    for _ in range(2000):
        adam_update(theta, [2.0 * (theta[0] - 3.0)], optimizer)
    assert theta[0][0] == pytest.approx(3.0, abs=1e-3)


def test_adam_zero_gradient_keeps_parameters():
    theta = [np.array([1.5, -2.0])]
    optimizer = AdamOptimizer(theta)
    for _ in range(5):
        optimizer.update(theta, [np.zeros(2)])
    np.testing.assert_array_equal(theta[0], [1.5, -2.0])


def test_adam_is_deterministic():
    rng = np.random.default_rng(8)
    grads = [rng.normal(size=(3, 2)) for _ in range(20)]
    a, b = [np.ones((3, 2))], [np.ones((3, 2))]
    opt_a, opt_b = AdamOptimizer(a), AdamOptimizer(b)
    for g in grads:
        opt_a.update(a, [g])
        opt_b.update(b, [g.copy()])
    np.testing.assert_array_equal(a[0], b[0])


def test_adam_errors():
    theta = [np.zeros(2)]
    optimizer = AdamOptimizer(theta)
    with pytest.raises(TrainingError):
        optimizer.update(theta, [np.array([np.nan, 0.0])])
    with pytest.raises(ContractViolation):
        optimizer.update(theta, [np.zeros(3)])
    assert optimizer.step == 0
