"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/services/sampler.py

Sampler: Детерминированные обратные сэмплеры
============================================

Каждой траектории обучения соответствует свой сэмплер на равномерной сетке
t_N > ... > t_0 = 0 (SamplerConfig.time_grid):

- naive: старт в t = 1 из naive_state(z_deg, 1, eps) = eps (или в naive_partial_start,
  если задано частичное зашумление), затем шаги Эйлера x' = x - (t - t') v(x, t).
- ebr:   старт (1 - T0) z_deg + T0 eps. На каждом шаге: z_hat = x - t v;
  неявный шум eps_hat = (x - (1 - t) m(z_hat, t)) / t, где m - сигнал моста;
  следующий x' = (1 - t') m(z_hat, t') + t' eps_hat. При t' = 0 выходит ровно z_hat.
- ddbm:  старт в t = 0.98 (sigma_1 = 0 делает деление вырожденным), z_clean в
  стартовом состоянии заменён на z_deg. Бэкбону подаётся sigma_t, шаг - тот же
  перенос неявного шума, но по коэффициентам броуновского моста.

Это одна из возможных реализаций детерминированного мостового сэмплера
(DDIM-подобный перенос неявного шума), без стохастического "churn".

Смешивание промптов: скорость усредняется по K контекстам в фиксированном порядке
как v_1 + sum_k (v_k - v_1) / K, поэтому K одинаковых промптов дают ровно v_1.
NFE = N для одного промпта и N * K для смеси.

Классы:
- SamplerTrace: посещённые состояния, времена, предсказания, счётчик NFE.

Функции:
- mix_velocities(contexts, backbone, x, t) -> np.ndarray
- restore_naive / restore_ebr / restore_ddbm (z_deg, contexts, backbone, config, trace)
- restore(z_deg, contexts, backbone, config, trace) - диспетчер по config.trajectory
- prompt_contexts(prompts, pathway, e_null) -> list[np.ndarray]
"""

from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence, Union

import numpy as np

from src.core.errors import ShapeError
from src.models.schemas import SamplerConfig, Trajectory
from src.services.bridges import DdbmSchedule, EbrSchedule, ddbm_sigma, ebr_signal, naive_state
from src.services.prompts import Prompt, TextPathway, encode


class VelocityField(Protocol):
    def velocity(self, z_t: np.ndarray, t, context: np.ndarray) -> np.ndarray: ...


Contexts = Union[np.ndarray, Sequence[np.ndarray]]


@dataclass
class SamplerTrace:
    times: list[float] = field(default_factory=list)
    backbone_times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    predictions: list[np.ndarray] = field(default_factory=list)
    nfe: int = 0

    def visit(self, t: float, backbone_time: float, state: np.ndarray, prediction: np.ndarray) -> None:
        self.times.append(float(t))
        self.backbone_times.append(float(backbone_time))
        self.states.append(state.copy())
        self.predictions.append(prediction.copy())


def _context_list(contexts: Contexts) -> list[np.ndarray]:
    if isinstance(contexts, np.ndarray) and contexts.ndim == 2:
        return [contexts]
    items = list(contexts)
    if not items:
        raise ValueError("Список промптов для сэмплирования пуст")
    shapes = {np.shape(c) for c in items}
    if len(shapes) != 1 or len(next(iter(shapes))) != 2:
        raise ShapeError(f"Контексты должны иметь одинаковую форму L x D, получено {sorted(shapes)}")
    return items


def prompt_contexts(prompts: Sequence[Prompt], pathway: TextPathway, e_null: np.ndarray) -> list[np.ndarray]:
    return [encode(p, pathway, e_null) for p in prompts]


def mix_velocities(contexts: Contexts, backbone: VelocityField, x: np.ndarray, t) -> np.ndarray:
    """(1/K) * sum_k v(x, t; c_k), вычисленное как v_1 + sum_k (v_k - v_1) / K."""
    items = _context_list(contexts)
    first = backbone.velocity(x, t, items[0])
    if len(items) == 1:
        return first
    total = np.zeros_like(first)
    for context in items[1:]:
        total = total + (backbone.velocity(x, t, context) - first)
    return first + total / len(items)


def _start_noise(z_deg: np.ndarray, config: SamplerConfig) -> np.ndarray:
    return np.random.default_rng(config.seed).standard_normal(np.shape(z_deg))


def _check_trajectory(config: SamplerConfig, expected: Trajectory) -> None:
    if config.trajectory != expected:
        raise ValueError(f"Сэмплер '{expected.value}' вызван с конфигом траектории '{config.trajectory.value}'")


# --- 1. NAIVE ---


def restore_naive(
    z_deg: np.ndarray,
    contexts: Contexts,
    backbone: VelocityField,
    config: SamplerConfig,
    trace: Optional[SamplerTrace] = None,
) -> np.ndarray:
    _check_trajectory(config, Trajectory.NAIVE)
    items = _context_list(contexts)
    trace = trace if trace is not None else SamplerTrace()
    grid = config.time_grid()
    x = naive_state(np.asarray(z_deg, dtype=np.float64), float(grid[0]), _start_noise(z_deg, config))
    for t, t_next in zip(grid[:-1], grid[1:]):
        v = mix_velocities(items, backbone, x, t)
        trace.nfe += len(items)
        trace.visit(t, t, x, x - t * v)
        x = x - (t - t_next) * v
    return x


# --- 2. EBR ---


def restore_ebr(
    z_deg: np.ndarray,
    contexts: Contexts,
    backbone: VelocityField,
    config: SamplerConfig,
    trace: Optional[SamplerTrace] = None,
) -> np.ndarray:
    """
    Raises:
        ValueError: t = 0 внутри сетки (деление на t при восстановлении шума).
    """
    _check_trajectory(config, Trajectory.EBR)
    items = _context_list(contexts)
    trace = trace if trace is not None else SamplerTrace()
    schedule = EbrSchedule(config.t0)
    z_deg = np.asarray(z_deg, dtype=np.float64)
    grid = config.time_grid()
    x = (1.0 - schedule.t0) * z_deg + schedule.t0 * _start_noise(z_deg, config)
    for t, t_next in zip(grid[:-1], grid[1:]):
        if t <= 0.0:
            raise ValueError("restore_ebr: нулевое время внутри сетки")
        v = mix_velocities(items, backbone, x, t)
        trace.nfe += len(items)
        z_hat = x - t * v
        trace.visit(t, t, x, z_hat)
        eps_hat = (x - (1.0 - t) * ebr_signal(z_hat, z_deg, t, schedule)) / t
        x = (1.0 - t_next) * ebr_signal(z_hat, z_deg, t_next, schedule) + t_next * eps_hat
    return x


# --- 3. DDBM ---


def restore_ddbm(
    z_deg: np.ndarray,
    contexts: Contexts,
    backbone: VelocityField,
    config: SamplerConfig,
    trace: Optional[SamplerTrace] = None,
) -> np.ndarray:
    """
    Raises:
        ValueError: sigma_t = 0 на внутреннем шаге.
    """
    _check_trajectory(config, Trajectory.DDBM)
    items = _context_list(contexts)
    trace = trace if trace is not None else SamplerTrace()
    schedule = DdbmSchedule(config.eta)
    z_deg = np.asarray(z_deg, dtype=np.float64)
    grid = config.time_grid()

    def signal(z_hat: np.ndarray, t: float) -> np.ndarray:
        return schedule.a(t) * z_deg + schedule.b(t) * z_hat

    sigma = ddbm_sigma(schedule.s(float(grid[0])))
    y = (1.0 - sigma) * signal(z_deg, float(grid[0])) + sigma * _start_noise(z_deg, config)
    for t, t_next in zip(grid[:-1], grid[1:]):
        sigma = ddbm_sigma(schedule.s(float(t)))
        if sigma <= 0.0:
            raise ValueError(f"restore_ddbm: sigma_t = 0 на внутреннем шаге t={t}")
        v = mix_velocities(items, backbone, y, sigma)
        trace.nfe += len(items)
        z_hat = y - sigma * v
        trace.visit(t, sigma, y, z_hat)
        eps_hat = (y - (1.0 - sigma) * signal(z_hat, float(t))) / sigma
        sigma_next = ddbm_sigma(schedule.s(float(t_next)))
        y = (1.0 - sigma_next) * signal(z_hat, float(t_next)) + sigma_next * eps_hat
    return y


_SAMPLERS = {
    Trajectory.NAIVE: restore_naive,
    Trajectory.EBR: restore_ebr,
    Trajectory.DDBM: restore_ddbm,
}


def restore(
    z_deg: np.ndarray,
    contexts: Contexts,
    backbone: VelocityField,
    config: SamplerConfig,
    trace: Optional[SamplerTrace] = None,
) -> np.ndarray:
    """Восстановление сэмплером, согласованным с config.trajectory."""
    return _SAMPLERS[config.trajectory](z_deg, contexts, backbone, config, trace)
