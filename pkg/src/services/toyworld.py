"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/services/toyworld.py

Toy World: Процедурные данные и парные деградации
=================================================

Заменяет реальные датасеты: генерирует чистые изображения 16x16 (диск, полоса,
крест) и строит к ним деградированные пары. Энкодер латентов - тождество, поэтому
плоское изображение (256 значений) и есть латент z.

Основные возможности:
- Детерминированная генерация чистых изображений по зерну, значения в [0, 1].
- Четыре оператора деградации: дымка (veil), слабая освещённость (gamma),
  размытие (blur, reflect-паддинг), полосы (stripe). Все остаются в [0, 1].
- Составные деградации (последовательное применение) для экспериментов со смешиванием промптов.
- Сохранение/чтение изображений в бинарном PGM (P5) для визуального контроля.

Статистика генератора (класс disk): фон ~ U(0.1, 0.3), фигура ~ U(0.7, 0.9),
радиус ~ U(3, 5) пикселей. Средняя яркость ≈ 0.2 + 0.6 * pi * E[r^2] / 256 ≈ 0.32;
среднее по большому числу изображений лежит в DISK_MEAN_BAND.

Функции:
- generate_clean(spec: CleanSpec, n: int) -> list[np.ndarray]
- degrade(z_clean, degradation, seed) -> np.ndarray
- degrade_all(z_clean, degradations, seed) -> np.ndarray
- make_pairs(...) -> list[PairedSample]
- stack_pairs(pairs) -> tuple[np.ndarray, np.ndarray]
- save_pgm(path, z) / load_pgm(path) -> np.ndarray

Связи с другими модулями:
- src.services.backbone: чистые изображения для предобучения.
- src.services.training, src.services.experiments: обучающие и тестовые пары.
- src.views.restore_cmd: PGM-вывод восстановленных изображений.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from src.models.schemas import (
    IDENTITY_SEVERITY,
    CleanSpec,
    Degradation,
    DegradationKind,
    ShapeClass,
)

DISK_MEAN_BAND = (0.27, 0.37)

# ==========================================
# --- 1. ЧИСТЫЕ ИЗОБРАЖЕНИЯ ---
# ==========================================


def _soft_band(coord: np.ndarray, center: float, half_width: float) -> np.ndarray:
    # Сглаженная (антиалиасинг) маска полосы шириной 2 * half_width
    return np.clip(half_width + 0.5 - np.abs(coord - center), 0.0, 1.0)


def _draw_image(rng: np.random.Generator, side: int, shape_class: ShapeClass) -> np.ndarray:
    background = rng.uniform(0.1, 0.3)
    foreground = rng.uniform(0.7, 0.9)
    mid = (side - 1) / 2.0
    jitter = side / 8.0
    rows, cols = np.mgrid[0:side, 0:side].astype(np.float64)

    if shape_class == ShapeClass.DISK:
        radius = rng.uniform(3.0, 5.0) * side / 16.0
        cy, cx = mid + rng.uniform(-jitter, jitter, size=2)
        dist = np.hypot(rows - cy, cols - cx)
        mask = np.clip(radius + 0.5 - dist, 0.0, 1.0)
    elif shape_class == ShapeClass.BAR:
        half = rng.uniform(1.0, 2.0) * side / 16.0
        center = mid + rng.uniform(-jitter, jitter)
        coord = rows if rng.uniform() < 0.5 else cols
        mask = _soft_band(coord, center, half)
    elif shape_class == ShapeClass.CROSS:
        half = rng.uniform(1.0, 1.5) * side / 16.0
        cy, cx = mid + rng.uniform(-jitter, jitter, size=2)
        mask = np.maximum(_soft_band(rows, cy, half), _soft_band(cols, cx, half))
    else:
        raise ValueError(f"Неизвестный класс фигуры: {shape_class}")

    image = background + (foreground - background) * mask
    return image.reshape(-1)


def generate_clean(spec: CleanSpec, n: int) -> list[np.ndarray]:
    """
    Генерирует n чистых изображений класса spec.shape_class.

    Returns:
        list[np.ndarray]: плоские векторы длины side * side со значениями в [0, 1].

    Raises:
        ValueError: если n < 1.
    """
    if n < 1:
        raise ValueError(f"Число изображений должно быть >= 1, получено {n}")
    rng = np.random.default_rng(spec.seed)
    return [_draw_image(rng, spec.side, spec.shape_class) for _ in range(n)]


# ==========================================
# --- 2. ДЕГРАДАЦИИ ---
# ==========================================


def _side_of(z: np.ndarray) -> int:
    side = math.isqrt(z.size)
    if side * side != z.size:
        raise ValueError(f"Латент длины {z.size} не является квадратным изображением")
    return side


def _veil(z: np.ndarray, alpha: float, rng: np.random.Generator) -> np.ndarray:
    return alpha * z + (1.0 - alpha) * 1.0


def _gamma(z: np.ndarray, gamma: float, rng: np.random.Generator) -> np.ndarray:
    return np.power(z, gamma)


def _blur(z: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    side = _side_of(z)
    if sigma == 0.0:
        return z.copy()
    blurred = gaussian_filter(z.reshape(side, side), sigma=sigma, mode="reflect", truncate=4.0)
    return np.clip(blurred.reshape(-1), 0.0, 1.0)


def _stripe(z: np.ndarray, amplitude: float, rng: np.random.Generator) -> np.ndarray:
    side = _side_of(z)
    offsets = rng.normal(0.0, amplitude, size=side)
    return np.clip((z.reshape(side, side) + offsets[None, :]).reshape(-1), 0.0, 1.0)


_OPERATORS = {
    DegradationKind.VEIL: _veil,
    DegradationKind.GAMMA: _gamma,
    DegradationKind.BLUR: _blur,
    DegradationKind.STRIPE: _stripe,
}


def degrade(
    z_clean: np.ndarray, degradation: Union[Degradation, DegradationKind, str], seed: int = 0
) -> np.ndarray:
    """
    Применяет оператор деградации. Детерминирован для (вход, деградация, seed).

    Raises:
        ValueError: вход вне [0, 1] или неизвестный вид деградации.
    """
    if not isinstance(degradation, Degradation):
        try:
            degradation = Degradation(kind=DegradationKind(degradation))
        except ValueError as e:
            raise ValueError(f"Неизвестный вид деградации: {degradation!r}") from e
    z = np.asarray(z_clean, dtype=np.float64)
    if z.size and (z.min() < 0.0 or z.max() > 1.0):
        raise ValueError("Вход деградации должен лежать в [0, 1]")

    # Тождественный уровень силы возвращает вход побитово
    if IDENTITY_SEVERITY.get(degradation.kind) == degradation.severity:
        return z.copy()

    operator = _OPERATORS.get(degradation.kind)
    if operator is None:
        raise ValueError(f"Неизвестный вид деградации: {degradation.kind!r}")
    rng = np.random.default_rng(seed)
    return operator(z, degradation.severity, rng)


def degrade_all(z_clean: np.ndarray, degradations: Sequence[Degradation], seed: int = 0) -> np.ndarray:
    """Составная деградация: операторы применяются по порядку, у каждого своё производное зерно."""
    z = np.asarray(z_clean, dtype=np.float64)
    for index, degradation in enumerate(degradations):
        z = degrade(z, degradation, seed=derive_seed(seed, index))
    return z


def derive_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


# ==========================================
# --- 3. ПАРЫ ---
# ==========================================


@dataclass(frozen=True)
class PairedSample:
    z_clean: np.ndarray
    z_deg: np.ndarray
    kinds: tuple[DegradationKind, ...]

    def __post_init__(self) -> None:
        if self.z_clean.shape != self.z_deg.shape:
            raise ValueError(f"Формы пары не совпадают: {self.z_clean.shape} vs {self.z_deg.shape}")

    @property
    def kind(self) -> DegradationKind:
        if len(self.kinds) != 1:
            raise ValueError(f"Составная деградация {self.label} не имеет единственного вида")
        return self.kinds[0]

    @property
    def label(self) -> str:
        return "+".join(k.value for k in self.kinds)


def make_pairs(
    degradations: Sequence[Degradation],
    n: int,
    seed: int,
    side: int = 16,
    shape_classes: Sequence[ShapeClass] = (ShapeClass.DISK, ShapeClass.BAR, ShapeClass.CROSS),
) -> list[PairedSample]:
    """Строит n пар (чистое, деградированное); классы фигур чередуются по кругу."""
    if n < 1:
        raise ValueError(f"Число пар должно быть >= 1, получено {n}")
    if not degradations:
        raise ValueError("Нужна хотя бы одна деградация")
    rng = np.random.default_rng(seed)
    kinds = tuple(d.kind for d in degradations)
    pairs = []
    for index in range(n):
        clean = _draw_image(rng, side, shape_classes[index % len(shape_classes)])
        degraded = degrade_all(clean, degradations, seed=derive_seed(seed, index))
        pairs.append(PairedSample(z_clean=clean, z_deg=degraded, kinds=kinds))
    return pairs


def stack_pairs(pairs: Sequence[PairedSample]) -> tuple[np.ndarray, np.ndarray]:
    """Складывает пары в матрицы (B x N): чистые и деградированные латенты."""
    if not pairs:
        raise ValueError("Пустой набор пар")
    return np.stack([p.z_clean for p in pairs]), np.stack([p.z_deg for p in pairs])


# ==========================================
# --- 4. PGM ---
# ==========================================


def save_pgm(path: Union[str, Path], z: np.ndarray) -> None:
    """Сохраняет латент как 8-битное бинарное PGM (P5)."""
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    side = _side_of(z)
    pixels = np.round(np.clip(z, 0.0, 1.0) * 255.0).astype(np.uint8).reshape(side, side)
    Image.fromarray(pixels).save(Path(path), format="PPM")


def load_pgm(path: Union[str, Path]) -> np.ndarray:
    with Image.open(Path(path)) as image:
        pixels = np.asarray(image.convert("L"), dtype=np.float64)
    return (pixels / 255.0).reshape(-1)
