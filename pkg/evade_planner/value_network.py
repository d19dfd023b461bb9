"""
价值网络

纯numpy实现的可微网络：same填充卷积、全连接、ELU激活，
以及ADAM优化器和有限差分梯度检查
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .config import ArchitectureDescriptor, TrainerConfig
from .exceptions import ConfigurationError, ContractViolation, TrainingError

logger = logging.getLogger(__name__)


def elu(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))


def elu_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, 1.0, np.exp(np.minimum(z, 0.0)))


class Layer(ABC):
    """网络层：参数由外部传入，便于在线参数与目标参数共用同一套层"""

    def __init__(self, activation: str):
        self.activation = activation

    @abstractmethod
    def init_params(self, rng: np.random.Generator) -> List[np.ndarray]:
        """按扇入缩放的均匀分布初始化"""

    @abstractmethod
    def forward(self, x: np.ndarray, params: Sequence[np.ndarray]) -> Tuple[np.ndarray, Any]:
        """返回 (输出, 反向传播所需的缓存)"""

    @abstractmethod
    def backward(self, grad_out: np.ndarray, cache: Any,
                 params: Sequence[np.ndarray]) -> Tuple[np.ndarray, List[np.ndarray]]:
        """返回 (对输入的梯度, 对参数的梯度)"""

    def _activate(self, z: np.ndarray) -> np.ndarray:
        return elu(z) if self.activation == "elu" else z

    def _activation_grad(self, grad_out: np.ndarray, z: np.ndarray) -> np.ndarray:
        return grad_out * elu_grad(z) if self.activation == "elu" else grad_out


class Conv2D(Layer):
    """步长1、same填充的二维卷积，输入为 (B, C, H, W)"""

    def __init__(self, in_channels: int, filters: int, kernel: int, activation: str):
        super().__init__(activation)
        if kernel % 2 == 0:
            raise ConfigurationError(f"same填充要求奇数卷积核，收到 {kernel}")
        self.in_channels = in_channels
        self.filters = filters
        self.kernel = kernel

    def init_params(self, rng):
        fan_in = self.in_channels * self.kernel * self.kernel
        bound = 1.0 / np.sqrt(fan_in)
        weight = rng.uniform(-bound, bound, size=(self.filters, self.in_channels, self.kernel, self.kernel))
        return [weight, np.zeros(self.filters)]

    def forward(self, x, params):
        weight, bias = params
        batch, channels, height, width = x.shape
        pad = self.kernel // 2
        padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        windows = sliding_window_view(padded, (self.kernel, self.kernel), axis=(2, 3))
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch * height * width, -1)
        z = cols @ weight.reshape(self.filters, -1).T + bias
        z = z.reshape(batch, height, width, self.filters).transpose(0, 3, 1, 2)
        return self._activate(z), (x.shape, cols, z)

    def backward(self, grad_out, cache, params):
        weight, _ = params
        (batch, channels, height, width), cols, z = cache
        dz = self._activation_grad(grad_out, z)
        dz_cols = dz.transpose(0, 2, 3, 1).reshape(batch * height * width, self.filters)
        d_weight = (dz_cols.T @ cols).reshape(weight.shape)
        d_bias = dz_cols.sum(axis=0)

        k, pad = self.kernel, self.kernel // 2
        d_cols = (dz_cols @ weight.reshape(self.filters, -1)).reshape(batch, height, width, channels, k, k)
        d_padded = np.zeros((batch, channels, height + 2 * pad, width + 2 * pad))
        for i in range(k):
            for j in range(k):
                d_padded[:, :, i:i + height, j:j + width] += d_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return d_padded[:, :, pad:pad + height, pad:pad + width], [d_weight, d_bias]


class Dense(Layer):
    """全连接层，输入为 (B, D)"""

    def __init__(self, in_features: int, units: int, activation: str):
        super().__init__(activation)
        self.in_features = in_features
        self.units = units

    def init_params(self, rng):
        bound = 1.0 / np.sqrt(self.in_features)
        return [rng.uniform(-bound, bound, size=(self.in_features, self.units)), np.zeros(self.units)]

    def forward(self, x, params):
        weight, bias = params
        z = x @ weight + bias
        return self._activate(z), (x, z)

    def backward(self, grad_out, cache, params):
        weight, _ = params
        x, z = cache
        dz = self._activation_grad(grad_out, z)
        return dz @ weight.T, [x.T @ dz, dz.sum(axis=0)]


def build_layers(descriptor: ArchitectureDescriptor) -> List[Layer]:
    """根据结构描述构造层序列"""
    height, width, channels = descriptor.input_shape
    layers: List[Layer] = []
    flat: Optional[int] = None
    for spec in descriptor.layers:
        if spec.kind == "conv":
            layers.append(Conv2D(channels, spec.units, spec.kernel, spec.activation))
            channels = spec.units
        else:
            in_features = flat if flat is not None else height * width * channels
            layers.append(Dense(in_features, spec.units, spec.activation))
            flat = spec.units
    return layers


class ValueNet:
    """
    价值函数近似 V_theta，附带目标参数 theta^-

    输入特征为 (H, W, C) 或批量的 (B, H, W, C)，输出为每个输入一个标量。
    """

    def __init__(self, descriptor: ArchitectureDescriptor, rng: Optional[np.random.Generator] = None):
        """
        初始化网络

        Args:
            descriptor: 结构描述
            rng: 初始化用随机数发生器，缺省为种子0
        """
        self.descriptor = descriptor
        self.layers = build_layers(descriptor)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: List[np.ndarray] = []
        self._slices: List[slice] = []
        for layer in self.layers:
            start = len(self.params)
            self.params.extend(layer.init_params(rng))
            self._slices.append(slice(start, len(self.params)))
        self.target_params = [p.copy() for p in self.params]

    @property
    def input_shape(self) -> Tuple[int, int, int]:
        return tuple(self.descriptor.input_shape)

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params))

    def _as_batch(self, features: np.ndarray) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        if x.shape == self.input_shape:
            x = x[None]
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise ContractViolation(f"特征形状 {np.shape(features)} 与网络输入 {self.input_shape} 不匹配")
        return x.transpose(0, 3, 1, 2)

    def _forward(self, x: np.ndarray, params: Sequence[np.ndarray]):
        caches = []
        for layer, sl in zip(self.layers, self._slices):
            if isinstance(layer, Dense) and x.ndim > 2:
                x = x.reshape(x.shape[0], -1)
            x, cache = layer.forward(x, params[sl])
            caches.append(cache)
        return x[:, 0], caches

    def predict_batch(self, features: np.ndarray, use_target: bool = False) -> np.ndarray:
        params = self.target_params if use_target else self.params
        out, _ = self._forward(self._as_batch(features), params)
        return out

    def predict(self, features: np.ndarray, use_target: bool = False) -> float:
        """单个状态的确定性前向计算"""
        return float(self.predict_batch(features, use_target)[0])

    def gradients(self, features: np.ndarray, grad_output: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        """
        反向传播

        Args:
            features: 批量输入
            grad_output: 损失对每个输出的梯度，形状 (B,)

        Returns:
            (前向输出, 各参数梯度)
        """
        x = self._as_batch(features)
        out, caches = self._forward(x, self.params)
        return out, self._backward(x.shape[0], caches, grad_output)

    def _backward(self, batch: int, caches: List[Any], grad_output: np.ndarray) -> List[np.ndarray]:
        grad = np.asarray(grad_output, dtype=np.float64).reshape(-1, 1)
        grads: List[Optional[np.ndarray]] = [None] * len(self.params)
        height, width = self.input_shape[:2]
        for index in range(len(self.layers) - 1, -1, -1):
            layer, sl = self.layers[index], self._slices[index]
            grad, layer_grads = layer.backward(grad, caches[index], self.params[sl])
            grads[sl] = layer_grads
            previous = self.layers[index - 1] if index > 0 else None
            if isinstance(layer, Dense) and isinstance(previous, Conv2D):
                grad = grad.reshape(batch, previous.filters, height, width)
        return grads

    def mse_loss_and_gradients(self, features: np.ndarray, targets: np.ndarray) -> Tuple[float, List[np.ndarray]]:
        """均方误差及其参数梯度，目标视为常数"""
        targets = np.asarray(targets, dtype=np.float64)
        x = self._as_batch(features)
        out, caches = self._forward(x, self.params)
        residual = out - targets
        loss = float(np.mean(residual ** 2))
        return loss, self._backward(x.shape[0], caches, 2.0 * residual / len(residual))

    def pre_activations(self, features: np.ndarray) -> List[np.ndarray]:
        """每个ELU层的预激活值，用于梯度检查避开不光滑点"""
        _, caches = self._forward(self._as_batch(features), self.params)
        return [cache[-1] for layer, cache in zip(self.layers, caches) if layer.activation == "elu"]

    def sync_target(self):
        self.target_params = [p.copy() for p in self.params]

    def zero_parameters(self):
        for p in self.params:
            p.fill(0.0)


class AdamOptimizer:
    """带偏差修正的ADAM"""

    def __init__(self, params: Sequence[np.ndarray], learning_rate: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    @classmethod
    def from_config(cls, params: Sequence[np.ndarray], cfg: TrainerConfig) -> "AdamOptimizer":
        return cls(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)

    def update(self, params: List[np.ndarray], grads: Sequence[np.ndarray]) -> List[np.ndarray]:
        """
        原地更新参数

        Args:
            params: 参数列表
            grads: 与参数同形状的梯度

        Returns:
            更新后的参数（同一批数组）
        """
        if len(grads) != len(params):
            raise ContractViolation("梯度数量与参数数量不一致")
        for p, g in zip(params, grads):
            if g.shape != p.shape:
                raise ContractViolation(f"梯度形状 {g.shape} 与参数形状 {p.shape} 不一致")
            if not np.all(np.isfinite(g)):
                raise TrainingError("梯度中出现非有限值")

        self.step += 1
        correction1 = 1.0 - self.beta1 ** self.step
        correction2 = 1.0 - self.beta2 ** self.step
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / correction1
            v_hat = self.v[i] / correction2
            p -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)
        return params


def adam_update(params: List[np.ndarray], grads: Sequence[np.ndarray],
                optimizer: AdamOptimizer) -> List[np.ndarray]:
    return optimizer.update(params, grads)


def sample_smooth_inputs(net: ValueNet, rng: np.random.Generator, batch: int = 4,
                         margin: float = 1e-3, attempts: int = 100) -> np.ndarray:
    """抽取预激活值都远离0的输入，避开ELU在0处的不光滑点"""
    for _ in range(attempts):
        inputs = rng.uniform(0.0, 1.0, size=(batch,) + net.input_shape)
        zs = net.pre_activations(inputs)
        if all(np.min(np.abs(z)) > margin for z in zs):
            return inputs
    logger.warning("未能在 %d 次尝试内避开ELU拐点，使用最后一次抽样", attempts)
    return inputs


def gradient_check(net: ValueNet, inputs: np.ndarray, targets: Optional[np.ndarray] = None,
                   perturbation: float = 1e-5, max_checks_per_tensor: int = 30,
                   rng: Optional[np.random.Generator] = None, floor: float = 1e-5) -> float:
    """
    比较解析梯度与中心差分梯度

    损失为均方误差。相对误差的分母下限为 floor，极小的梯度按绝对误差比较。

    Args:
        net: 待检查的网络
        inputs: 批量输入
        targets: 回归目标，缺省为0
        perturbation: 中心差分步长
        max_checks_per_tensor: 每个参数张量最多抽查的元素数
        rng: 抽查位置的随机数发生器

    Returns:
        最大相对误差
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    inputs = np.asarray(inputs, dtype=np.float64)
    batch = 1 if inputs.shape == net.input_shape else inputs.shape[0]
    targets = np.zeros(batch) if targets is None else np.asarray(targets, dtype=np.float64)
    _, analytic = net.mse_loss_and_gradients(inputs, targets)

    def loss() -> float:
        out = net.predict_batch(inputs)
        return float(np.mean((out - targets) ** 2))

    worst = 0.0
    for param, grad in zip(net.params, analytic):
        flat_param = param.reshape(-1)
        flat_grad = grad.reshape(-1)
        count = min(flat_param.size, max_checks_per_tensor)
        for index in rng.choice(flat_param.size, size=count, replace=False):
            original = flat_param[index]
            flat_param[index] = original + perturbation
            upper = loss()
            flat_param[index] = original - perturbation
            lower = loss()
            flat_param[index] = original
            numeric = (upper - lower) / (2.0 * perturbation)
            denominator = max(abs(numeric), abs(flat_grad[index]), floor)
            worst = max(worst, abs(numeric - flat_grad[index]) / denominator)
    return worst
