"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/models/schemas.py

Data Schemas: Строгая типизация и валидация
===========================================

Декларативные модели данных на базе Pydantic. Модуль выполняет роль "контракта"
между текстовым конфигом (TOML), командной строкой и бизнес-логикой сервисов.

Основные возможности:
- Перечисления предметной области: классы фигур, виды деградаций, траектории, варианты промптов.
- Секции конфигурации с документированными значениями по умолчанию.
- Запрет неизвестных ключей (extra="forbid"): опечатка в конфиге - ошибка, а не тихий дефолт.
- Сериализуемые отчёты (манифест бэкбона, сводка обучения промпта).

Классы (Схемы):
- ShapeClass, DegradationKind, Trajectory, PromptVariant (Enum)
- Degradation: вид деградации + сила с проверкой диапазона.
- CleanSpec: параметры генератора чистых изображений.
- DataConfig, PathwayConfig, BackboneConfig, TrainConfig, SamplerConfig, ExperimentConfig
- Config: корневая схема, объединяющая все секции.
- BackboneManifest, TrainSummary: JSON-отчёты рядом с чекпоинтами.

Связи с другими модулями:
- src.core.config: парсит TOML и валидирует через Config.
- src.services.*: принимают секции конфигурации как аргументы.
"""

from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, field_validator, model_validator

# ==========================================
# --- 1. ПЕРЕЧИСЛЕНИЯ ---
# ==========================================


class ShapeClass(str, Enum):
    DISK = "disk"
    BAR = "bar"
    CROSS = "cross"


class DegradationKind(str, Enum):
    VEIL = "veil"      # дымка: alpha * z + (1 - alpha)
    GAMMA = "gamma"    # слабая освещённость: z ** gamma
    BLUR = "blur"      # гауссово размытие, reflect-паддинг
    STRIPE = "stripe"  # вертикальные полосы (шум по столбцам)


class Trajectory(str, Enum):
    NAIVE = "naive"
    DDBM = "ddbm"
    EBR = "ebr"


class PromptVariant(str, Enum):
    TEXT = "text"
    TOKEN = "token"
    EMBEDDING = "embedding"
    RESIDUAL = "residual"


# Допустимые диапазоны силы деградации и значения по умолчанию
SEVERITY_RANGES = {
    DegradationKind.VEIL: (0.2, 1.0),
    DegradationKind.GAMMA: (1.0, 4.0),
    DegradationKind.BLUR: (0.0, 3.0),
    DegradationKind.STRIPE: (0.0, 0.5),
}
DEFAULT_SEVERITY = {
    DegradationKind.VEIL: 0.6,
    DegradationKind.GAMMA: 2.5,
    DegradationKind.BLUR: 1.5,
    DegradationKind.STRIPE: 0.2,
}
# Уровень, при котором оператор тождественен (есть только у veil и gamma)
IDENTITY_SEVERITY = {
    DegradationKind.VEIL: 1.0,
    DegradationKind.GAMMA: 1.0,
}

_STRICT = ConfigDict(extra="forbid")

# ==========================================
# --- 2. ДАННЫЕ ---
# ==========================================


class Degradation(BaseModel):
    """Вид деградации и её сила. Если сила не задана, берётся значение по умолчанию для вида."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: DegradationKind = Field(..., description="Вид деградации")
    severity: Optional[float] = Field(None, description="Сила (alpha, gamma, sigma или амплитуда полос)")

    @model_validator(mode="before")
    @classmethod
    def _default_severity(cls, data):
        if isinstance(data, dict) and data.get("severity") is None and "kind" in data:
            data = {**data, "severity": DEFAULT_SEVERITY[DegradationKind(data["kind"])]}
        return data

    @model_validator(mode="after")
    def _check_severity(self) -> "Degradation":
        low, high = SEVERITY_RANGES[self.kind]
        if not low <= self.severity <= high:
            raise ValueError(f"Сила {self.severity} вне диапазона [{low}, {high}] для '{self.kind.value}'")
        return self

    @property
    def label(self) -> str:
        return self.kind.value


class CleanSpec(BaseModel):
    model_config = _STRICT

    side: PositiveInt = Field(16, description="Сторона квадратного изображения в пикселях")
    shape_class: ShapeClass = Field(ShapeClass.DISK, description="Класс фигуры")
    seed: int = Field(0, description="Зерно генератора")


class DataConfig(BaseModel):
    model_config = _STRICT

    side: PositiveInt = Field(16, description="Сторона изображения; латент = side * side")
    shape_classes: List[ShapeClass] = Field(
        default_factory=lambda: [ShapeClass.DISK, ShapeClass.BAR, ShapeClass.CROSS],
        description="Классы фигур в обучающих и тестовых парах",
    )
    degradation: DegradationKind = Field(DegradationKind.VEIL, description="Деградация по умолчанию")
    severity: Optional[float] = Field(None, description="Сила деградации (None - значение по умолчанию)")
    n_train: PositiveInt = Field(256, description="Число обучающих пар")
    n_test: PositiveInt = Field(64, description="Число тестовых пар")
    seed: int = Field(0, description="Зерно генерации данных")

    @field_validator("shape_classes")
    @classmethod
    def _non_empty(cls, value: List[ShapeClass]) -> List[ShapeClass]:
        if not value:
            raise ValueError("Нужен хотя бы один класс фигур")
        return value


# ==========================================
# --- 3. МОДЕЛИ ---
# ==========================================


class PathwayConfig(BaseModel):
    """Токенизатор и замороженный текстовый энкодер (игрушечные аналоги tau и TE)."""

    model_config = _STRICT

    tokens: PositiveInt = Field(8, description="Число токенов контекста L")
    token_dim: PositiveInt = Field(16, description="Размерность эмбеддинга токена D_in")
    context_dim: PositiveInt = Field(32, description="Размерность контекста D")
    hidden_dim: PositiveInt = Field(32, description="Скрытый слой текстового энкодера")
    seed: int = Field(0, description="Зерно таблицы эмбеддингов и весов энкодера")


class BackboneConfig(BaseModel):
    model_config = _STRICT

    input_dim: PositiveInt = Field(256, description="Размерность латента (16x16)")
    hidden_dim: PositiveInt = Field(128, description="Ширина скрытых слоёв")
    num_layers: PositiveInt = Field(2, description="Число скрытых слоёв после блока внимания")
    context_tokens: PositiveInt = Field(8, description="L: число токенов контекста")
    context_dim: PositiveInt = Field(32, description="D: размерность контекста")
    time_dim: PositiveInt = Field(32, description="Размерность синусоидального эмбеддинга времени (чётная)")
    attn_dim: PositiveInt = Field(32, description="Размерность query/key/value в cross-attention")
    pretrain_steps: PositiveInt = Field(3000, description="Число шагов предобучения")
    pretrain_lr: float = Field(1e-3, gt=0, description="Скорость обучения предобучения")
    batch_size: PositiveInt = Field(32, description="Батч предобучения")
    null_context_fraction: float = Field(0.5, ge=0, le=1, description="Доля шагов с пустым контекстом e_null")
    seed: int = Field(0, description="Зерно инициализации и предобучения")

    @field_validator("time_dim")
    @classmethod
    def _even(cls, value: int) -> int:
        if value % 2:
            raise ValueError("time_dim должен быть чётным")
        return value


class TrainConfig(BaseModel):
    model_config = _STRICT

    trajectory: Trajectory = Field(Trajectory.EBR, description="Конструкция обучающих состояний")
    variant: PromptVariant = Field(PromptVariant.RESIDUAL, description="Путь кондиционирования")
    degradation: DegradationKind = Field(DegradationKind.VEIL, description="Деградация k")
    iterations: PositiveInt = Field(1500, description="Число итераций")
    batch_size: PositiveInt = Field(2, description="Батч (по умолчанию 2; игрушечной задаче можно больше)")
    lr: float = Field(5e-4, gt=0, description="Скорость обучения AdamW")
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    weight_decay: float = Field(0.0, ge=0, description="Развязанный weight decay")
    t0: float = Field(0.4, gt=0, le=1, description="Максимальный уровень шума моста EBR")
    eta: float = Field(1.0, gt=0, description="Масштаб шума моста DDBM")
    residual_rank: PositiveInt = Field(4, description="Ранг остаточного промпта r = A @ B")
    seed: int = Field(0, description="Зерно батчей, времён и шума")


class SamplerConfig(BaseModel):
    model_config = _STRICT

    trajectory: Trajectory = Field(Trajectory.EBR, description="Сэмплер, согласованный с траекторией обучения")
    steps: PositiveInt = Field(20, description="Число шагов N (= NFE на один промпт)")
    t0: float = Field(0.4, gt=0, le=1, description="Стартовое время EBR сэмплера (максимальное время моста)")
    naive_partial_start: Optional[float] = Field(
        None, gt=0, le=1, description="Частичное зашумление наивного старта (None - старт из t = 1)"
    )
    eta: float = Field(1.0, gt=0, description="Масштаб шума моста DDBM")
    ddbm_start: float = Field(0.98, gt=0, lt=1, description="Стартовое время DDBM (sigma_1 = 0)")
    seed: int = Field(0, description="Зерно стартового шума")

    def start_time(self) -> float:
        """Максимальное время траектории: 1 для naive, T0 для ebr, ddbm_start для ddbm."""
        if self.trajectory == Trajectory.DDBM:
            return self.ddbm_start
        if self.trajectory == Trajectory.NAIVE:
            return 1.0 if self.naive_partial_start is None else self.naive_partial_start
        return self.t0

    def time_grid(self) -> np.ndarray:
        """Равномерная убывающая сетка t_N > ... > t_0 = 0."""
        grid = np.linspace(self.start_time(), 0.0, self.steps + 1)
        grid[-1] = 0.0
        return grid


class ExperimentConfig(BaseModel):
    model_config = _STRICT

    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2], description="Зёрна повторов эксперимента")
    t0_candidates: List[float] = Field(
        default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6], description="Кандидаты T0 для перебора"
    )
    diagnostic_pairs: PositiveInt = Field(256, description="M: пары Монте-Карло для маргиналей")
    sanity_tolerance: float = Field(0.05, gt=0, description="Допуск контроля маргинали относительно sqrt(2/pi)")
    mix: List[DegradationKind] = Field(
        default_factory=lambda: [DegradationKind.VEIL, DegradationKind.STRIPE],
        description="Составная деградация для эксперимента со смешиванием",
    )
    progress: bool = Field(True, description="Показывать прогресс-бары tqdm")
    log_level: str = Field("INFO", description="Уровень логирования")
    seed: int = Field(0, description="Общее зерно эксперимента")


class Config(BaseModel):
    """Корневая схема конфигурации: секции повторяют структуру TOML-файла."""

    model_config = _STRICT

    data: DataConfig = Field(default_factory=DataConfig)
    pathway: PathwayConfig = Field(default_factory=PathwayConfig)
    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    experiment: ExperimentConfig = Field(default_factory=ExperimentConfig)

    @model_validator(mode="after")
    def _consistent_dims(self) -> "Config":
        if self.backbone.context_tokens != self.pathway.tokens:
            raise ValueError("backbone.context_tokens должен совпадать с pathway.tokens")
        if self.backbone.context_dim != self.pathway.context_dim:
            raise ValueError("backbone.context_dim должен совпадать с pathway.context_dim")
        if self.backbone.input_dim != self.data.side * self.data.side:
            raise ValueError("backbone.input_dim должен равняться data.side ** 2 (энкодер - тождество)")
        return self

    def with_seed(self, seed: int) -> "Config":
        """Копия конфига, в которой все зёрна заменены одним значением."""
        return self.model_copy(
            update={
                name: getattr(self, name).model_copy(update={"seed": seed})
                for name in ("data", "pathway", "backbone", "train", "sampler", "experiment")
            }
        )


# ==========================================
# --- 4. ОТЧЁТЫ ---
# ==========================================


class BackboneManifest(BaseModel):
    """Манифест рядом с чекпоинтом бэкбона: архитектура и контрольные хеши."""

    backbone: BackboneConfig
    pathway: PathwayConfig
    backbone_hash: str
    pathway_hash: str
    version: str


class TrainSummary(BaseModel):
    trajectory: Trajectory
    variant: PromptVariant
    degradation: DegradationKind
    iterations: int
    batch_size: int
    lr: float
    t0: float
    initial_loss: float
    final_loss: float
    parameter_count: int
    backbone_hash_before: str
    backbone_hash_after: str
    pathway_hash_before: str
    pathway_hash_after: str
    gate_zero_neutral: Optional[bool] = None

    @property
    def frozen_ok(self) -> bool:
        return (
            self.backbone_hash_before == self.backbone_hash_after
            and self.pathway_hash_before == self.pathway_hash_after
        )
