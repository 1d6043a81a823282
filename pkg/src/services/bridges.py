"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/services/bridges.py

Bridges: Конструкции промежуточных состояний
============================================

Три способа построить состояние z_t, на котором обучается промпт и по которому
идёт сэмплер:

- naive: зашумлённый деградированный вход (1 - t) * z_deg + t * eps, t in [0, 1].
- ddbm:  броуновский мост между чистым и деградированным концами
         (a_t = t, b_t = 1 - t, s_t = eta * sqrt(t (1 - t))), переписанный в
         flow-форму y = (1 - sigma) * (a z_deg + b z_clean) + sigma * eps,
         sigma = s / (1 + s). Бэкбону подаётся время sigma.
- ebr:   монотонный мост (1 - t) * [(1 - t/T0) z_clean + (t/T0) z_deg] + t * eps,
         t in [0, T0]. Шум растёт вместе с долей деградированного сигнала.

Каждое состояние имеет вид (1 - sigma) * signal + sigma * eps, где sigma - время,
которое получает бэкбон.

Время может быть скаляром или вектором длины B (по одному t на строку батча B x N).

Функции:
- naive_state, ddbm_sigma, ddbm_state, ebr_state, ebr_signal, ddbm_signal
- noise_coefficient(trajectory, t, ...) -> время бэкбона
- time_range(trajectory, t0) -> (low, high)
- sample_times(trajectory, rng, n, t0) -> np.ndarray
- training_state(trajectory, z_clean, z_deg, t, eps, ...) -> (state, backbone_time)
"""

from dataclasses import dataclass
from typing import Union

import numpy as np

from src.core.errors import ShapeError
from src.models.schemas import Trajectory

Time = Union[float, np.ndarray]

# Сравнение с границей допускает округление при построении сетки времени
_TIME_TOL = 1e-12


@dataclass(frozen=True)
class NaiveSchedule:
    pass


@dataclass(frozen=True)
class DdbmSchedule:
    eta: float = 1.0

    def __post_init__(self) -> None:
        if self.eta <= 0:
            raise ValueError(f"eta должен быть > 0, получено {self.eta}")

    def a(self, t: Time) -> Time:
        return t

    def b(self, t: Time) -> Time:
        return 1.0 - t

    def s(self, t: Time) -> Time:
        t_arr = np.asarray(t, dtype=np.float64)
        value = self.eta * np.sqrt(np.clip(t_arr * (1.0 - t_arr), 0.0, None))
        return value if isinstance(t, np.ndarray) else float(value)


@dataclass(frozen=True)
class EbrSchedule:
    t0: float = 0.4

    def __post_init__(self) -> None:
        if not 0.0 < self.t0 <= 1.0:
            raise ValueError(f"T0 должен лежать в (0, 1], получено {self.t0}")

    def lam(self, t: Time) -> Time:
        return t / self.t0


# --- 1. ПРОВЕРКИ ---


def _check_time(op: str, t: Time, low: float, high: float) -> None:
    t_arr = np.asarray(t, dtype=np.float64)
    if t_arr.ndim > 1:
        raise ShapeError(f"{op}: время должно быть скаляром или вектором, форма {t_arr.shape}")
    if t_arr.size and (np.any(t_arr < low - _TIME_TOL) or np.any(t_arr > high + _TIME_TOL)):
        raise ValueError(f"{op}: время вне диапазона [{low}, {high}]: {t_arr.min()}..{t_arr.max()}")


def _check_shapes(op: str, *tensors: np.ndarray) -> None:
    shapes = {np.shape(x) for x in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"{op}: формы не совпадают {[np.shape(x) for x in tensors]}")


def _col(t: Time, like: np.ndarray) -> Time:
    # Вектор времени (B,) превращается в столбец (B, 1) для батча (B, N)
    if isinstance(t, np.ndarray) and t.ndim == 1:
        if like.ndim != 2 or like.shape[0] != t.shape[0]:
            raise ShapeError(f"Вектор времени {t.shape} не соответствует батчу {like.shape}")
        return t[:, None]
    return t


# --- 2. СОСТОЯНИЯ ---


def naive_state(z_deg: np.ndarray, t: Time, eps: np.ndarray) -> np.ndarray:
    """(1 - t) * z_deg + t * eps."""
    _check_time("naive_state", t, 0.0, 1.0)
    _check_shapes("naive_state", z_deg, eps)
    tc = _col(t, z_deg)
    return (1.0 - tc) * z_deg + tc * eps


def ddbm_sigma(s: Time) -> Time:
    """sigma = s / (1 + s); выполняется тождество (1 - sigma) * s == sigma."""
    s_arr = np.asarray(s, dtype=np.float64)
    if np.any(s_arr < 0):
        raise ValueError(f"ddbm_sigma: s должен быть >= 0, получено {s}")
    sigma = s_arr / (1.0 + s_arr)
    return sigma if isinstance(s, np.ndarray) else float(sigma)


def ddbm_signal(z_clean: np.ndarray, z_deg: np.ndarray, t: Time, schedule: DdbmSchedule) -> np.ndarray:
    tc = _col(t, z_deg)
    return schedule.a(tc) * z_deg + schedule.b(tc) * z_clean


def ddbm_state(
    z_clean: np.ndarray, z_deg: np.ndarray, t: Time, eps: np.ndarray, schedule: DdbmSchedule = DdbmSchedule()
) -> tuple[np.ndarray, Time]:
    """Состояние моста в flow-форме и его эффективный шум sigma (время для бэкбона)."""
    _check_time("ddbm_state", t, 0.0, 1.0)
    _check_shapes("ddbm_state", z_clean, z_deg, eps)
    sigma = ddbm_sigma(schedule.s(t))
    sc = _col(sigma, z_deg)
    return (1.0 - sc) * ddbm_signal(z_clean, z_deg, t, schedule) + sc * eps, sigma


def ebr_signal(z_clean: np.ndarray, z_deg: np.ndarray, t: Time, schedule: EbrSchedule) -> np.ndarray:
    lam = _col(schedule.lam(t), z_deg)
    return (1.0 - lam) * z_clean + lam * z_deg


def ebr_state(
    z_clean: np.ndarray, z_deg: np.ndarray, t: Time, eps: np.ndarray, schedule: EbrSchedule = EbrSchedule()
) -> np.ndarray:
    """(1 - t) * [(1 - t/T0) z_clean + (t/T0) z_deg] + t * eps, t in [0, T0]."""
    _check_time("ebr_state", t, 0.0, schedule.t0)
    _check_shapes("ebr_state", z_clean, z_deg, eps)
    tc = _col(t, z_deg)
    return (1.0 - tc) * ebr_signal(z_clean, z_deg, t, schedule) + tc * eps


# --- 3. ДИСПЕТЧЕРИЗАЦИЯ ПО ТРАЕКТОРИИ ---


def time_range(trajectory: Trajectory, t0: float = 0.4) -> tuple[float, float]:
    """Допустимый отрезок времени обучения: [0, T0] для ebr, [0, 1] для остальных."""
    if trajectory == Trajectory.EBR:
        return 0.0, t0
    return 0.0, 1.0


def sample_times(trajectory: Trajectory, rng: np.random.Generator, n: int, t0: float = 0.4) -> np.ndarray:
    low, high = time_range(trajectory, t0)
    return rng.uniform(low, high, size=n)


def noise_coefficient(trajectory: Trajectory, t: Time, eta: float = 1.0) -> Time:
    """Время, подаваемое бэкбону: t для naive/ebr, sigma_t для ddbm."""
    if trajectory == Trajectory.DDBM:
        return ddbm_sigma(DdbmSchedule(eta).s(t))
    return t


def training_state(
    trajectory: Trajectory,
    z_clean: np.ndarray,
    z_deg: np.ndarray,
    t: Time,
    eps: np.ndarray,
    t0: float = 0.4,
    eta: float = 1.0,
) -> tuple[np.ndarray, Time]:
    """Обучающее состояние выбранной траектории и соответствующее ему время бэкбона."""
    if trajectory == Trajectory.NAIVE:
        _check_shapes("training_state", z_clean, z_deg)
        return naive_state(z_deg, t, eps), t
    if trajectory == Trajectory.DDBM:
        return ddbm_state(z_clean, z_deg, t, eps, DdbmSchedule(eta))
    if trajectory == Trajectory.EBR:
        return ebr_state(z_clean, z_deg, t, eps, EbrSchedule(t0)), t
    raise ValueError(f"Неизвестная траектория: {trajectory!r}")
