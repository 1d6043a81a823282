"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/services/experiments.py

Experiments: Абляции и сравнительные прогоны
============================================

Собирает обучение промптов, сэмплеры и метрики в воспроизводимые эксперименты.
Каждое плечо получает собственные производные зёрна; все плечи одного
эксперимента обучаются с одинаковым бюджетом (итерации, батч, lr).

Основные возможности:
- bridge_experiment: naive / ddbm / ebr на одной деградации по нескольким зёрнам.
- t0_sweep: один EBR-промпт на каждый кандидат T0, таблица метрик и ранжирование t0_score.
  Значение T0 = 0.4 - конфигурация по умолчанию; оптимум на игрушечном масштабе не утверждается.
- conditioning_comparison: сравнение путей кондиционирования при равном бюджете
  (residual vs embedding: число параметров, итоговая потеря, метрики восстановления;
  token vs embedding: итоговые потери рядом, без порога).
- mixed_restoration: составная деградация, восстановление смесью скоростей и каждым промптом отдельно.
- mismatch_experiment: кривые расхождения naive и ebr на одних и тех же входах.

Классы:
- Workbench: замороженный бэкбон, текстовый путь и конфиг.

Связи с другими модулями:
- src.services.training, src.services.sampler, src.services.evaluation.
- src.views.ablate_cmd, src.views.diagnose_cmd.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src.core.logger import get_logger
from src.models.schemas import (
    Config,
    Degradation,
    DegradationKind,
    PromptVariant,
    Trajectory,
)
from src.services.backbone import Backbone
from src.services.evaluation import (
    ArmResult,
    BridgeReport,
    MetricTable,
    bridge_comparison,
    mean_abs_zscore,
    mean_finite_psnr,
    mismatch_diagnostic,
    mse_psnr,
    t0_score,
    training_marginal,
)
from src.services.prompts import PromptBank, TextPathway, encode
from src.services.sampler import Contexts, restore
from src.services.toyworld import PairedSample, derive_seed, make_pairs, stack_pairs
from src.services.training import TrainReport, train_prompt

logger = get_logger(__name__)


@dataclass
class Workbench:
    backbone: Backbone
    pathway: TextPathway
    config: Config

    @property
    def e_null(self) -> np.ndarray:
        return self.backbone.weights.e_null


# --- 1. ДАННЫЕ ---


def degradation_for(config: Config, kind: DegradationKind) -> Degradation:
    """Сила из [data] применяется к основной деградации, остальные берут значение по умолчанию."""
    severity = config.data.severity if kind == config.data.degradation else None
    return Degradation(kind=kind, severity=severity)


def make_split(
    config: Config, kinds: Sequence[DegradationKind], seed: int, n_train: Optional[int] = None
) -> tuple[list[PairedSample], list[PairedSample]]:
    degradations = [degradation_for(config, k) for k in kinds]
    common = {"side": config.data.side, "shape_classes": config.data.shape_classes}
    train = make_pairs(
        degradations, n_train or config.data.n_train, derive_seed(config.data.seed, seed, 0), **common
    )
    test = make_pairs(degradations, config.data.n_test, derive_seed(config.data.seed, seed, 1), **common)
    return train, test


# --- 2. ОЦЕНКА ВОССТАНОВЛЕНИЯ ---


def evaluate_restoration(
    bench: Workbench, contexts: Contexts, trajectory: Trajectory, test: Sequence[PairedSample], seed: int, t0: float
) -> pd.DataFrame:
    """Метрики по каждой тестовой паре: mse/psnr восстановления и mse входа."""
    sampler = bench.config.sampler.model_copy(update={"trajectory": trajectory, "seed": seed, "t0": t0})
    z_clean, z_deg = stack_pairs(test)
    restored = restore(z_deg, contexts, bench.backbone, sampler)
    rows = []
    for index in range(len(test)):
        mse, psnr = mse_psnr(restored[index], z_clean[index])
        input_mse, _ = mse_psnr(z_deg[index], z_clean[index])
        rows.append({"sample": index, "mse": mse, "psnr": psnr, "input_mse": input_mse})
    return pd.DataFrame(rows)


def _train(
    bench: Workbench,
    train: Sequence[PairedSample],
    trajectory: Trajectory,
    variant: PromptVariant,
    kind: DegradationKind,
    seed: int,
    t0: Optional[float] = None,
    bank: Optional[PromptBank] = None,
) -> TrainReport:
    update = {"trajectory": trajectory, "variant": variant, "degradation": kind, "seed": seed}
    if t0 is not None:
        update["t0"] = t0
    train_config = bench.config.train.model_copy(update=update)
    return train_prompt(
        train_config, bank or PromptBank(), bench.backbone, bench.pathway, train, progress=bench.config.experiment.progress
    )


# --- 3. СРАВНЕНИЕ МОСТОВ ---


def bridge_experiment(bench: Workbench) -> BridgeReport:
    """Три плеча (naive, ddbm, ebr) с равным бюджетом на каждом зерне эксперимента."""
    config = bench.config
    kind = config.train.degradation
    results = []
    for seed in config.experiment.seeds:
        train, test = make_split(config, [kind], seed)
        for trajectory in (Trajectory.NAIVE, Trajectory.DDBM, Trajectory.EBR):
            report = _train(bench, train, trajectory, config.train.variant, kind, seed)
            contexts = encode(report.prompt, bench.pathway, bench.e_null)
            metrics = evaluate_restoration(bench, contexts, trajectory, test, seed, config.train.t0)
            results.append(
                ArmResult(
                    trajectory=trajectory,
                    seed=seed,
                    iterations=report.summary.iterations,
                    batch_size=report.summary.batch_size,
                    lr=report.summary.lr,
                    mse=float(metrics["mse"].mean()),
                    psnr=mean_finite_psnr(list(metrics["psnr"])),
                )
            )
            logger.info("bridge %s seed %d: mse %.6f", trajectory.value, seed, results[-1].mse)
    return bridge_comparison(results)


# --- 4. ПЕРЕБОР T0 ---


def t0_sweep(bench: Workbench, candidates: Optional[Sequence[float]] = None) -> tuple[MetricTable, pd.DataFrame]:
    """
    Обучает EBR-промпт для каждого T0 и ранжирует кандидатов.

    Raises:
        ValueError: меньше двух кандидатов (нормализация не определена).
    """
    config = bench.config
    candidates = list(candidates if candidates is not None else config.experiment.t0_candidates)
    if len(candidates) < 2:
        raise ValueError("Перебор T0 требует не меньше двух кандидатов")
    kind = config.train.degradation
    rows = []
    for t0 in candidates:
        mses, psnrs = [], []
        for seed in config.experiment.seeds:
            train, test = make_split(config, [kind], seed)
            report = _train(bench, train, Trajectory.EBR, config.train.variant, kind, seed, t0=t0)
            contexts = encode(report.prompt, bench.pathway, bench.e_null)
            metrics = evaluate_restoration(bench, contexts, Trajectory.EBR, test, seed, t0)
            mses.append(float(metrics["mse"].mean()))
            psnrs.append(mean_finite_psnr(list(metrics["psnr"])))
        rows.append({"t0": t0, "mse": float(np.mean(mses)), "psnr": float(np.mean(psnrs))})

    frame = pd.DataFrame(rows).set_index("t0")
    table = MetricTable(frame=frame, higher_is_better={"mse": False, "psnr": True})
    scores = t0_score(table)
    ranking = frame.assign(score=scores).reset_index().sort_values("score", ascending=False, kind="stable")
    logger.info("Лучший T0 на игрушечной задаче: %s", ranking.iloc[0]["t0"])
    return table, ranking.reset_index(drop=True)


# --- 5. ПУТИ КОНДИЦИОНИРОВАНИЯ ---


def conditioning_comparison(bench: Workbench, variants: Sequence[PromptVariant]) -> pd.DataFrame:
    """Равный бюджет для каждого варианта промпта; EBR-траектория."""
    config = bench.config
    kind = config.train.degradation
    rows = []
    for seed in config.experiment.seeds:
        train, test = make_split(config, [kind], seed)
        for variant in variants:
            report = _train(bench, train, config.train.trajectory, variant, kind, seed)
            contexts = encode(report.prompt, bench.pathway, bench.e_null)
            metrics = evaluate_restoration(bench, contexts, config.train.trajectory, test, seed, config.train.t0)
            rows.append(
                {
                    "variant": variant.value,
                    "seed": seed,
                    "parameter_count": report.summary.parameter_count,
                    "initial_loss": report.summary.initial_loss,
                    "final_loss": report.summary.final_loss,
                    "mse": float(metrics["mse"].mean()),
                    "psnr": mean_finite_psnr(list(metrics["psnr"])),
                }
            )
    return pd.DataFrame(rows)


# --- 6. СМЕШИВАНИЕ ПРОМПТОВ ---


def mixed_restoration(bench: Workbench, kinds: Optional[Sequence[DegradationKind]] = None) -> pd.DataFrame:
    """
    По промпту на каждую деградацию из kinds, затем восстановление составной
    деградации: каждым промптом отдельно и смесью скоростей всех промптов.
    """
    config = bench.config
    kinds = list(kinds if kinds is not None else config.experiment.mix)
    trajectory = config.train.trajectory
    rows = []
    for seed in config.experiment.seeds:
        bank = PromptBank()
        for kind in kinds:
            train, _ = make_split(config, [kind], seed)
            _train(bench, train, trajectory, config.train.variant, kind, seed, bank=bank)
        _, mixed_test = make_split(config, kinds, seed)
        contexts = {k: encode(bank.get(k), bench.pathway, bench.e_null) for k in kinds}
        arms = {k.value: [contexts[k]] for k in kinds}
        arms["mix"] = [contexts[k] for k in kinds]
        for label, arm in arms.items():
            metrics = evaluate_restoration(bench, arm, trajectory, mixed_test, seed, config.train.t0)
            rows.append(
                {
                    "prompts": label,
                    "seed": seed,
                    "mse": float(metrics["mse"].mean()),
                    "psnr": mean_finite_psnr(list(metrics["psnr"])),
                    "input_mse": float(metrics["input_mse"].mean()),
                }
            )
    return pd.DataFrame(rows)


# --- 7. ДИАГНОСТИКА РАССОГЛАСОВАНИЯ ---


@dataclass
class MismatchResult:
    curves: pd.DataFrame
    sanity: float


def mismatch_experiment(bench: Workbench, seed: Optional[int] = None) -> MismatchResult:
    """
    Кривые расхождения naive- и ebr-обученных промптов по шагам их сэмплеров.

    sanity - средний |z| свежих обучающих EBR-состояний при t = T0 относительно
    маргинали, оценённой на M парах (ожидается около sqrt(2/pi) ≈ 0.798).
    """
    config = bench.config
    seed = config.experiment.seed if seed is None else seed
    kind = config.train.degradation
    t0 = config.train.t0
    train, test = make_split(config, [kind], seed)
    marginal_pairs, _ = make_split(config, [kind], seed + 1, n_train=config.experiment.diagnostic_pairs)
    _, inputs = stack_pairs(test)

    curves = []
    for trajectory in (Trajectory.NAIVE, Trajectory.EBR):
        report = _train(bench, train, trajectory, config.train.variant, kind, seed)
        contexts = encode(report.prompt, bench.pathway, bench.e_null)
        sampler = config.sampler.model_copy(update={"trajectory": trajectory, "seed": seed, "t0": t0})
        curve = mismatch_diagnostic(
            trajectory, contexts, bench.backbone, sampler, marginal_pairs, inputs, t0=t0, eta=config.train.eta, seed=seed
        )
        curves.append(curve.assign(trajectory=trajectory.value))

    mean, std = training_marginal(Trajectory.EBR, marginal_pairs, t0, t0=t0, seed=seed)
    fresh_eps = np.random.default_rng(derive_seed(seed, 7)).standard_normal((len(marginal_pairs), mean.size))
    _, z_deg = stack_pairs(marginal_pairs)
    fresh = (1.0 - t0) * z_deg + t0 * fresh_eps
    sanity = mean_abs_zscore(fresh, mean, std)

    frame = pd.concat(curves, ignore_index=True)
    wide = frame.pivot(index="step", columns="trajectory", values="divergence").reset_index()
    wide.columns.name = None
    for position, trajectory in enumerate((Trajectory.NAIVE, Trajectory.EBR), start=1):
        times = frame[frame["trajectory"] == trajectory.value]["t"].to_numpy()
        wide.insert(position, f"t_{trajectory.value}", times)
    logger.info(
        "Среднее расхождение: naive %.3f, ebr %.3f; контроль маргинали %.3f",
        wide["naive"].mean(), wide["ebr"].mean(), sanity,
    )
    return MismatchResult(curves=wide, sanity=sanity)
