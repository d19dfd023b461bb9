"""
配置

所有可调参数的pydantic模型，以及配置文件与环境变量的读取
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .exceptions import ConfigurationError

# 加载环境变量
load_dotenv()

MACHINE_TYPE_COUNT = 15
GRID_SIZE = 5
DEFAULT_LAYOUT_SEED = 2018


def default_output_dir() -> str:
    """输出目录默认值，可由 EVADE_OUTPUT_DIR 覆盖"""
    return os.getenv("EVADE_OUTPUT_DIR", "evade_results")


def default_log_level() -> str:
    return os.getenv("EVADE_LOG_LEVEL", "INFO").upper()


class FactoryConfig(BaseModel):
    """智能工厂环境参数"""

    model_config = ConfigDict(extra="forbid")

    agent_count: int = Field(4, ge=1)
    episode_length: int = Field(50, ge=1)
    machine_failure_prob: float = Field(0.1, ge=0.0, le=1.0)
    processing_cost: float = Field(0.25, ge=0.0)
    step_penalty: float = Field(0.1, ge=0.0)
    grid_layout: Optional[List[int]] = None
    layout_seed: int = DEFAULT_LAYOUT_SEED
    bucket_count: int = Field(2, ge=1)
    tasks_per_bucket: int = Field(2, ge=1, le=MACHINE_TYPE_COUNT)

    @field_validator("grid_layout")
    @classmethod
    def _check_layout_length(cls, value: Optional[List[int]]) -> Optional[List[int]]:
        if value is not None and len(value) != GRID_SIZE * GRID_SIZE:
            raise ValueError(f"grid_layout 需要 {GRID_SIZE * GRID_SIZE} 个元素，收到 {len(value)}")
        return value


class TrainerConfig(BaseModel):
    """价值网络训练超参数"""

    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(0.001, gt=0.0)
    gamma: float = Field(0.95, ge=0.0, le=1.0)
    minibatch_size: int = Field(64, ge=1)
    replay_capacity: int = Field(10000, ge=1)
    target_sync_period: int = Field(5000, ge=1)
    warmup_samples: int = Field(5000, ge=0)
    gradient_steps_per_env_step: int = Field(1, ge=1)
    beta1: float = Field(0.9, gt=0.0, lt=1.0)
    beta2: float = Field(0.999, gt=0.0, lt=1.0)
    epsilon: float = Field(1e-8, gt=0.0)

    @model_validator(mode="after")
    def _check_sizes(self) -> "TrainerConfig":
        if self.minibatch_size > self.replay_capacity:
            raise ValueError("minibatch_size 不能超过 replay_capacity")
        if self.warmup_samples > self.replay_capacity:
            raise ValueError("warmup_samples 不能超过 replay_capacity")
        return self


class LayerSpec(BaseModel):
    """网络中的一层"""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["conv", "dense"]
    units: int = Field(..., ge=1)
    kernel: int = Field(1, ge=1)
    activation: Literal["elu", "linear"] = "elu"


class ArchitectureDescriptor(BaseModel):
    """价值网络结构描述，输入形状为 (高, 宽, 通道)"""

    model_config = ConfigDict(extra="forbid")

    name: str = "custom"
    input_shape: Tuple[int, int, int] = (GRID_SIZE, GRID_SIZE, 35)
    layers: List[LayerSpec]

    @model_validator(mode="after")
    def _check_layers(self) -> "ArchitectureDescriptor":
        if not self.layers:
            raise ValueError("layers 不能为空")
        if self.layers[-1].kind != "dense" or self.layers[-1].units != 1:
            raise ValueError("最后一层必须是单输出的全连接层")
        seen_dense = False
        for layer in self.layers:
            if layer.kind == "dense":
                seen_dense = True
            elif seen_dense:
                raise ValueError("卷积层必须位于全连接层之前")
        return self

    @classmethod
    def full(cls) -> "ArchitectureDescriptor":
        """128个滤波器的完整结构"""
        return cls(name="full", layers=[
            LayerSpec(kind="conv", units=128, kernel=5),
            LayerSpec(kind="conv", units=128, kernel=3),
            LayerSpec(kind="conv", units=128, kernel=3),
            LayerSpec(kind="conv", units=128, kernel=3),
            LayerSpec(kind="conv", units=1, kernel=1),
            LayerSpec(kind="dense", units=256),
            LayerSpec(kind="dense", units=1, activation="linear"),
        ])

    @classmethod
    def desk(cls) -> "ArchitectureDescriptor":
        """缩减宽度的桌面规模结构：16/16/16/1 卷积 + 32 全连接"""
        return cls(name="desk", layers=[
            LayerSpec(kind="conv", units=16, kernel=5),
            LayerSpec(kind="conv", units=16, kernel=3),
            LayerSpec(kind="conv", units=16, kernel=3),
            LayerSpec(kind="conv", units=1, kernel=1),
            LayerSpec(kind="dense", units=32),
            LayerSpec(kind="dense", units=1, activation="linear"),
        ])

    @classmethod
    def linear(cls, input_shape: Tuple[int, int, int]) -> "ArchitectureDescriptor":
        """单个线性层，用于表格型对照实验"""
        return cls(name="linear", input_shape=input_shape, layers=[
            LayerSpec(kind="dense", units=1, activation="linear"),
        ])

    @classmethod
    def preset(cls, name: str) -> "ArchitectureDescriptor":
        presets = {"paper": cls.full, "full": cls.full, "desk": cls.desk}
        if name not in presets:
            raise ConfigurationError(f"未知的网络预设: {name}")
        return presets[name]()


class ExperimentConfig(BaseModel):
    """一次实验（若干次运行 x 若干回合）的全部参数"""

    model_config = ConfigDict(extra="forbid")

    algorithm: Literal["dice", "doolp"] = "dice"
    evade_enabled: bool = True
    horizon: int = Field(4, ge=1)
    budget: int = Field(192, ge=1)
    episodes: int = Field(150, ge=1)
    runs: int = Field(10, ge=1)
    gamma: float = Field(0.95, ge=0.0, le=1.0)
    net: Literal["paper", "full", "desk"] = "desk"
    return_mode: Literal["full", "per_depth"] = "full"
    master_seed: int = Field(0, ge=0, lt=2 ** 64)
    output_dir: str = Field(default_factory=default_output_dir)
    warmup_replay_path: Optional[str] = None
    trace_episodes: int = Field(0, ge=0)
    show_progress: bool = True
    factory: FactoryConfig = Field(default_factory=FactoryConfig)
    trainer: TrainerConfig = Field(default_factory=TrainerConfig)

    @model_validator(mode="after")
    def _resolve(self) -> "ExperimentConfig":
        if self.budget // self.horizon < 1:
            raise ValueError(
                f"floor(budget / horizon) 必须 >= 1，收到 budget={self.budget}, horizon={self.horizon}"
            )
        # 规划与学习共用同一个折扣因子
        if self.trainer.gamma != self.gamma:
            self.trainer = self.trainer.model_copy(update={"gamma": self.gamma})
        return self

    @property
    def agent_count(self) -> int:
        return self.factory.agent_count

    @property
    def episode_length(self) -> int:
        return self.factory.episode_length

    @property
    def rollouts_per_decision(self) -> int:
        return self.budget // self.horizon

    def architecture(self) -> ArchitectureDescriptor:
        return ArchitectureDescriptor.preset(self.net)

    def label(self) -> str:
        mode = "evade" if self.evade_enabled else "baseline"
        return f"{self.algorithm}_{mode}_n{self.agent_count}_h{self.horizon}_b{self.budget}"


def load_config_document(path: str) -> Dict[str, Any]:
    """
    读取JSON或YAML配置文件

    Args:
        path: 配置文件路径

    Returns:
        配置字典
    """
    file_path = Path(path)
    try:
        text = file_path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"读取配置文件错误: {e}") from e

    if file_path.suffix.lower() in (".yaml", ".yml"):
        data = yaml.safe_load(text) or {}
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"配置文件不是合法的JSON: {e}") from e

    if not isinstance(data, dict):
        raise ConfigurationError("配置文件顶层必须是键值映射")
    return data


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def build_experiment_config(document: Optional[Dict[str, Any]] = None,
                            overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    合并配置文件与命令行覆盖项并校验

    Args:
        document: 配置文件内容
        overrides: 命令行覆盖项（可嵌套）

    Returns:
        校验后的实验配置
    """
    data = _merge(document or {}, overrides or {})
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"实验配置不合法: {e}") from e
