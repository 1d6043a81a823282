"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/models/__init__.py

Реэкспорт схем: from src.models import TrainConfig вместо from src.models.schemas import TrainConfig.
"""

from .schemas import (
    BackboneConfig,
    BackboneManifest,
    CleanSpec,
    Config,
    DataConfig,
    Degradation,
    DegradationKind,
    ExperimentConfig,
    PathwayConfig,
    PromptVariant,
    SamplerConfig,
    ShapeClass,
    TrainConfig,
    TrainSummary,
    Trajectory,
)
