"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/services/evaluation.py

Evaluation: Метрики, агрегирование T0 и диагностика рассогласования траекторий
=============================================================================

Основные возможности:
- MSE/PSNR (пик 1.0). При mse = 0 PSNR = +inf; в средних по выборке такие
  значения исключаются (mean_finite_psnr).
- t0_score: min-max нормализация каждой метрики по кандидатам, переворот метрик
  "меньше - лучше", равновесное среднее. Постоянная колонка даёт 0.5 каждой строке
  (с предупреждением в лог).
- mismatch_diagnostic: средний |z-score| посещённых сэмплером состояний относительно
  маргинали обучающих состояний в тот же момент t (среднее и диагональная дисперсия
  по Монте-Карло на M парах, M >= 30).
- bridge_comparison: таблица MSE/PSNR по траекториям (среднее по зёрнам) и вердикт
  упорядоченности. Разный бюджет плеч -> BudgetMismatchError.

Метрики ограничены искажением (MSE/PSNR): перцептивные метрики требуют
предобученных сетей, поэтому все утверждения об упорядоченности - только по ним.

Классы:
- MetricTable, ArmResult, BridgeReport

Функции:
- mse_psnr(pred, target) -> tuple[float, float]
- mean_finite_psnr(values) -> float
- t0_score(table) -> pd.Series
- training_marginal(trajectory, pairs, t, ...) -> tuple[np.ndarray, np.ndarray]
- mean_abs_zscore(states, mean, std) -> float
- sanity_within(value, tolerance) -> bool
- mismatch_diagnostic(trajectory, contexts, backbone, sampler_config, pairs, inputs, ...) -> pd.DataFrame
- bridge_comparison(results) -> BridgeReport
"""

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from src.core.errors import BudgetMismatchError, ShapeError
from src.core.logger import get_logger
from src.models.schemas import SamplerConfig, Trajectory
from src.services.bridges import training_state
from src.services.sampler import Contexts, SamplerTrace, VelocityField, restore
from src.services.toyworld import PairedSample, stack_pairs

logger = get_logger(__name__)

MIN_MARGINAL_PAIRS = 30
HALF_NORMAL_MEAN = math.sqrt(2.0 / math.pi)

# ==========================================
# --- 1. МЕТРИКИ ---
# ==========================================


def mse_psnr(pred: np.ndarray, target: np.ndarray) -> tuple[float, float]:
    """MSE и PSNR в дБ для пика 1.0; PSNR = +inf при точном совпадении."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_psnr: формы {pred.shape} и {target.shape} не совпадают")
    if target.size and (target.min() < 0.0 or target.max() > 1.0):
        raise ValueError("mse_psnr: эталон должен лежать в [0, 1]")
    mse = float(np.mean((pred - target) ** 2))
    psnr = math.inf if mse == 0.0 else 10.0 * math.log10(1.0 / mse)
    return mse, psnr


def mean_finite_psnr(values: Sequence[float]) -> float:
    finite = [v for v in values if math.isfinite(v)]
    return float(np.mean(finite)) if finite else math.inf


# ==========================================
# --- 2. АГРЕГИРОВАНИЕ T0 ---
# ==========================================


@dataclass
class MetricTable:
    """Строки - кандидаты (например, значения T0), колонки - метрики с ориентацией."""

    frame: pd.DataFrame
    higher_is_better: Mapping[str, bool]

    def __post_init__(self) -> None:
        missing = [c for c in self.frame.columns if c not in self.higher_is_better]
        if missing:
            raise ValueError(f"Не задана ориентация метрик: {missing}")
        if len(self.frame) < 2:
            raise ValueError("Для min-max нормализации нужно не меньше двух кандидатов")
        if self.frame.isna().any().any():
            raise ValueError("В таблице метрик есть пропуски")


def t0_score(table: MetricTable) -> pd.Series:
    """Равновесное среднее нормализованных метрик; больше - лучше."""
    normalized = {}
    for column in table.frame.columns:
        values = table.frame[column].astype(np.float64)
        low, high = values.min(), values.max()
        if high == low:
            logger.warning("Метрика '%s' постоянна по кандидатам: вклад 0.5 в каждую строку", column)
            normalized[column] = pd.Series(0.5, index=values.index)
            continue
        scaled = (values - low) / (high - low)
        normalized[column] = scaled if table.higher_is_better[column] else 1.0 - scaled
    return pd.DataFrame(normalized).mean(axis=1).rename("score")


# ==========================================
# --- 3. ДИАГНОСТИКА РАССОГЛАСОВАНИЯ ---
# ==========================================


def training_marginal(
    trajectory: Trajectory,
    pairs: Sequence[PairedSample],
    t: float,
    t0: float = 0.4,
    eta: float = 1.0,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Среднее и стандартное отклонение (по координатам) обучающих состояний в момент t."""
    if len(pairs) < MIN_MARGINAL_PAIRS:
        raise ValueError(f"Для оценки маргинали нужно M >= {MIN_MARGINAL_PAIRS} пар, получено {len(pairs)}")
    z_clean, z_deg = stack_pairs(pairs)
    eps = np.random.default_rng(seed).standard_normal(z_clean.shape)
    states, _ = training_state(trajectory, z_clean, z_deg, float(t), eps, t0=t0, eta=eta)
    return states.mean(axis=0), states.std(axis=0)


def mean_abs_zscore(states: np.ndarray, mean: np.ndarray, std: np.ndarray) -> float:
    z = (np.atleast_2d(states) - mean) / np.maximum(std, 1e-12)
    return float(np.mean(np.abs(z)))


def sanity_within(value: float, tolerance: float = 0.05) -> bool:
    """Свежие обучающие состояния должны давать средний |z| около sqrt(2/pi)."""
    return abs(value - HALF_NORMAL_MEAN) <= tolerance


def mismatch_diagnostic(
    trajectory: Trajectory,
    contexts: Contexts,
    backbone: VelocityField,
    sampler_config: SamplerConfig,
    pairs: Sequence[PairedSample],
    inputs: np.ndarray,
    t0: float = 0.4,
    eta: float = 1.0,
    seed: int = 0,
) -> pd.DataFrame:
    """
    Кривая расхождения по шагам сэмплирования: средний |z| посещённых состояний
    относительно маргинали обучающих состояний той же траектории в тот же момент t.

    Raises:
        ValueError: M < 30.
    """
    if len(pairs) < MIN_MARGINAL_PAIRS:
        raise ValueError(f"Для оценки маргинали нужно M >= {MIN_MARGINAL_PAIRS} пар, получено {len(pairs)}")
    trace = SamplerTrace()
    restore(np.atleast_2d(inputs), contexts, backbone, sampler_config, trace)

    rows = []
    for step, (t, visited) in enumerate(zip(trace.times, trace.states)):
        mean, std = training_marginal(trajectory, pairs, t, t0=t0, eta=eta, seed=seed + step)
        rows.append({"step": step, "t": t, "divergence": mean_abs_zscore(visited, mean, std)})
    return pd.DataFrame(rows, columns=["step", "t", "divergence"])


# ==========================================
# --- 4. СРАВНЕНИЕ МОСТОВ ---
# ==========================================


@dataclass(frozen=True)
class ArmResult:
    trajectory: Trajectory
    seed: int
    iterations: int
    batch_size: int
    lr: float
    mse: float
    psnr: float


@dataclass
class BridgeReport:
    per_seed: pd.DataFrame
    summary: pd.DataFrame
    verdicts: list[str]
    ebr_beats_naive: bool
    ebr_not_worse_than_ddbm: bool


def bridge_comparison(results: Sequence[ArmResult]) -> BridgeReport:
    """
    Агрегирует результаты трёх плеч (naive, ddbm, ebr) по зёрнам.

    Raises:
        BudgetMismatchError: у плеч разные итерации, батч, lr или набор зёрен.
    """
    if not results:
        raise ValueError("Нет результатов для сравнения")
    budgets = {(r.iterations, r.batch_size, r.lr) for r in results}
    if len(budgets) != 1:
        raise BudgetMismatchError(f"Плечи обучены с разным бюджетом: {sorted(budgets)}")
    seeds_by_arm = {}
    for r in results:
        seeds_by_arm.setdefault(r.trajectory, set()).add(r.seed)
    if set(seeds_by_arm) != set(Trajectory):
        raise ValueError(f"Нужны все три траектории, получено {sorted(t.value for t in seeds_by_arm)}")
    if len({frozenset(s) for s in seeds_by_arm.values()}) != 1:
        raise BudgetMismatchError("Плечи обучены на разных наборах зёрен")
    seeds = sorted(next(iter(seeds_by_arm.values())))
    if len(seeds) < 3:
        logger.warning("Сравнение мостов по %d зёрнам (рекомендуется >= 3)", len(seeds))

    per_seed = pd.DataFrame(
        [{"trajectory": r.trajectory.value, "seed": r.seed, "mse": r.mse, "psnr": r.psnr} for r in results]
    ).sort_values(["trajectory", "seed"], ignore_index=True)
    order = [t.value for t in (Trajectory.NAIVE, Trajectory.DDBM, Trajectory.EBR)]
    summary = (
        per_seed.groupby("trajectory")
        .agg(mse=("mse", "mean"), psnr=("psnr", lambda s: mean_finite_psnr(list(s))))
        .reindex(order)
        .reset_index()
    )

    mse = per_seed.pivot(index="seed", columns="trajectory", values="mse")
    verdicts = [
        f"seed {seed}: MSE(ebr) < MSE(naive) {'held' if row['ebr'] < row['naive'] else 'FAILED'}"
        f" ({row['ebr']:.6f} vs {row['naive']:.6f})"
        for seed, row in mse.iterrows()
    ]
    means = summary.set_index("trajectory")["mse"]
    ebr_beats_naive = bool(means["ebr"] < means["naive"])
    ebr_not_worse = bool(means["ebr"] <= means["ddbm"])
    verdicts.append(
        f"mean: MSE(ebr) < MSE(naive) {'held' if ebr_beats_naive else 'FAILED'}; "
        f"MSE(ebr) <= MSE(ddbm) {'held' if ebr_not_worse else 'FAILED'}"
    )
    return BridgeReport(
        per_seed=per_seed,
        summary=summary,
        verdicts=verdicts,
        ebr_beats_naive=ebr_beats_naive,
        ebr_not_worse_than_ddbm=ebr_not_worse,
    )
