"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/services/training.py

Training: Обучение промптов над замороженным бэкбоном
=====================================================

Минимизирует ошибку предсказания чистого латента
    || (x_t - tau * v(x_t, tau; context(p))) - z_clean ||^2,
где (x_t, tau) - состояние и время выбранной траектории (src.services.bridges):
naive - зашумлённый деградированный вход; ddbm - броуновский мост, бэкбону
подаётся sigma_t; ebr - монотонный мост на [0, T0].

Меняются только параметры промпта (trainable_parameters). Веса бэкбона и
текстового пути - недифференцируемые read-only листья, их хеши сверяются до и
после обучения. Клиппинга градиентов нет: NaN прерывает обучение с номером итерации.

Классы:
- PromptObjective: граф потерь, построенный один раз на промпт.
- TrainReport: кривая потерь, итоговый промпт, состояние оптимизатора, сводка.

Функции:
- prompt_loss(trajectory, batch, prompt, backbone, pathway, ...) -> float
- train_prompt(config, bank, backbone, pathway, pairs, ...) -> TrainReport
- loss_curve_frame(losses) -> pd.DataFrame

Связи с другими модулями:
- src.views.train_cmd, src.services.experiments.
"""

import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.core.errors import FrozenWeightsError, NonFiniteError
from src.core.logger import get_logger
from src.core.numerics import Graph, OptimizerState, optimizer_step
from src.models.schemas import PromptVariant, TrainConfig, TrainSummary, Trajectory
from src.services.backbone import Backbone, add_velocity_graph, weight_bindings
from src.services.bridges import sample_times, training_state
from src.services.prompts import (
    Prompt,
    PromptBank,
    TextPathway,
    build_context_graph,
    encode,
    init_prompt,
    trainable_parameters,
)
from src.services.toyworld import PairedSample, stack_pairs

logger = get_logger(__name__)


class PromptObjective:
    """Граф потерь для одного промпта: state, time, z_clean -> mse(z_hat_0, z_clean)."""

    def __init__(
        self,
        backbone: Backbone,
        pathway: TextPathway,
        prompt: Prompt,
        trajectory: Trajectory,
        t0: float = 0.4,
        eta: float = 1.0,
    ) -> None:
        self.backbone = backbone
        self.prompt = prompt
        self.trajectory = Trajectory(trajectory)
        self.t0 = t0
        self.eta = eta

        graph = Graph()
        state, times, target = graph.input("state"), graph.input("time"), graph.input("z_clean")
        self.binding = build_context_graph(graph, prompt, pathway, backbone.weights.e_null)
        v = add_velocity_graph(graph, backbone.config, state, times, self.binding.node)
        self.prediction = graph.sub(state, graph.mul(v, times, "col"))
        graph.set_output(graph.mse(self.prediction, target))
        self.graph = graph
        self._constants = weight_bindings(backbone.weights)

    def states(self, z_clean: np.ndarray, z_deg: np.ndarray, times: np.ndarray, eps: np.ndarray):
        return training_state(self.trajectory, z_clean, z_deg, times, eps, t0=self.t0, eta=self.eta)

    def _forward(self, z_clean, z_deg, times, eps) -> float:
        state, backbone_time = self.states(z_clean, z_deg, times, eps)
        inputs = {
            "state": state,
            "time": np.asarray(backbone_time, dtype=np.float64),
            "z_clean": z_clean,
            **self._constants,
            **self.binding.inputs(self.prompt),
        }
        return float(self.graph.forward(inputs))

    def loss(self, z_clean, z_deg, times, eps) -> float:
        return self._forward(z_clean, z_deg, times, eps)

    def loss_and_grads(self, z_clean, z_deg, times, eps) -> tuple[float, dict[str, np.ndarray]]:
        loss = self._forward(z_clean, z_deg, times, eps)
        return loss, self.binding.parameter_grads(self.graph.backward())


def _check_batch(batch: Sequence[PairedSample]) -> None:
    if not batch:
        raise ValueError("Пустой батч")
    kinds = {sample.kinds for sample in batch}
    if len(kinds) != 1:
        raise ValueError(f"Все пары батча должны иметь один вид деградации, получено {sorted(kinds)}")


def prompt_loss(
    trajectory: Trajectory,
    batch: Sequence[PairedSample],
    prompt: Prompt,
    backbone: Backbone,
    pathway: TextPathway,
    *,
    times: Optional[np.ndarray] = None,
    eps: Optional[np.ndarray] = None,
    t0: float = 0.4,
    eta: float = 1.0,
    seed: int = 0,
) -> float:
    """Средняя по батчу квадратичная ошибка предсказания чистого латента."""
    _check_batch(batch)
    z_clean, z_deg = stack_pairs(batch)
    rng = np.random.default_rng(seed)
    if times is None:
        times = sample_times(Trajectory(trajectory), rng, len(batch), t0)
    if eps is None:
        eps = rng.standard_normal(z_clean.shape)
    objective = PromptObjective(backbone, pathway, prompt, trajectory, t0=t0, eta=eta)
    return objective.loss(z_clean, z_deg, np.asarray(times, dtype=np.float64), eps)


@dataclass
class TrainReport:
    losses: list[float]
    prompt: Prompt
    optimizer: OptimizerState
    summary: TrainSummary
    wall_time: float


def window_mean(losses: Sequence[float], head: bool, window: int = 10) -> float:
    """Среднее первых (head=True) или последних `window` значений кривой."""
    values = list(losses[:window] if head else losses[-window:])
    return float(np.mean(values))


def loss_curve_frame(losses: Sequence[float]) -> pd.DataFrame:
    return pd.DataFrame({"iteration": np.arange(len(losses)), "loss": np.asarray(losses, dtype=np.float64)})


def train_prompt(
    config: TrainConfig,
    bank: PromptBank,
    backbone: Backbone,
    pathway: TextPathway,
    pairs: Sequence[PairedSample],
    progress: bool = False,
    prompt: Optional[Prompt] = None,
) -> TrainReport:
    """
    Обучает промпт вида config.degradation и кладёт его в банк.

    Raises:
        ValueError: текстовый вариант или пары другой деградации.
        NonFiniteError: NaN в потере (с номером итерации).
        FrozenWeightsError: хеш бэкбона или текстового пути изменился.
    """
    _check_batch(pairs)
    if pairs[0].kinds != (config.degradation,):
        raise ValueError(f"Пары имеют деградацию {pairs[0].label}, а обучается '{config.degradation.value}'")

    weights = backbone.weights
    weights.verify()
    backbone_before, pathway_before = weights.hash, pathway.content_hash()

    if prompt is None:
        prompt = init_prompt(
            config.variant, config.degradation, pathway, weights.e_null, config.residual_rank, config.seed
        )
    params = trainable_parameters(prompt)

    gate_zero_neutral = None
    if prompt.variant == PromptVariant.RESIDUAL and not np.any(prompt.params["g"]):
        gate_zero_neutral = bool(np.array_equal(encode(prompt, pathway, weights.e_null), weights.e_null))
        logger.info("Нейтральность нулевого гейта: %s", "пройдена" if gate_zero_neutral else "НЕ пройдена")
    if config.batch_size != 2:
        logger.info("Батч обучения промпта: %d (по умолчанию 2)", config.batch_size)

    z_clean_all, z_deg_all = stack_pairs(pairs)
    objective = PromptObjective(backbone, pathway, prompt, config.trajectory, t0=config.t0, eta=config.eta)
    state = OptimizerState(
        lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps, weight_decay=config.weight_decay
    )
    rng = np.random.default_rng([config.seed, 2])
    losses: list[float] = []
    started = time.perf_counter()

    label = f"{config.trajectory.value}/{config.variant.value}/{config.degradation.value}"
    for iteration in tqdm(range(config.iterations), desc=label, disable=not progress):
        index = rng.integers(len(pairs), size=config.batch_size)
        times = sample_times(config.trajectory, rng, config.batch_size, config.t0)
        eps = rng.standard_normal((config.batch_size, z_clean_all.shape[1]))
        try:
            loss, grads = objective.loss_and_grads(z_clean_all[index], z_deg_all[index], times, eps)
            optimizer_step(params, grads, state)
        except NonFiniteError as e:
            raise NonFiniteError(f"Обучение промпта {label}: NaN/Inf на итерации {iteration}: {e}") from e
        losses.append(loss)

    wall_time = time.perf_counter() - started
    weights.verify()
    backbone_after, pathway_after = weights.content_hash(), pathway.content_hash()
    if (backbone_before, pathway_before) != (backbone_after, pathway_after):
        raise FrozenWeightsError(f"Обучение {label} изменило замороженные веса")

    bank.put(prompt)
    summary = TrainSummary(
        trajectory=config.trajectory,
        variant=config.variant,
        degradation=config.degradation,
        iterations=config.iterations,
        batch_size=config.batch_size,
        lr=config.lr,
        t0=config.t0,
        initial_loss=window_mean(losses, head=True),
        final_loss=window_mean(losses, head=False),
        parameter_count=prompt.parameter_count,
        backbone_hash_before=backbone_before,
        backbone_hash_after=backbone_after,
        pathway_hash_before=pathway_before,
        pathway_hash_after=pathway_after,
        gate_zero_neutral=gate_zero_neutral,
    )
    logger.info("%s: loss %.5f -> %.5f за %.1f с", label, summary.initial_loss, summary.final_loss, wall_time)
    return TrainReport(losses=losses, prompt=prompt, optimizer=state, summary=summary, wall_time=wall_time)
