"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/views/diagnose_cmd.py

Diagnose Command: Кривые рассогласования траекторий
===================================================

Обучает naive- и ebr-промпты на одних данных, прогоняет их сэмплеры на одних
входах и сравнивает посещённые состояния с маргиналью обучающих состояний.

Выход в каталоге запуска: divergence.csv (step, t_naive, t_ebr, naive, ebr), divergence.png,
diagnose.pdf. Контроль маргинали (свежие EBR-состояния при t = T0) должен
давать около sqrt(2/pi) ≈ 0.80; отклонение больше [experiment].sanity_tolerance
(по умолчанию 0.05) выводится предупреждением.
"""

from argparse import Namespace
from pathlib import Path

from src.core.logger import get_logger
from src.services.evaluation import HALF_NORMAL_MEAN, sanity_within
from src.services.experiments import mismatch_experiment
from src.services.report_maker import ReportSection, plot_lines, write_pdf
from src.views.common import console, open_run, open_workbench

logger = get_logger(__name__)


def run(args: Namespace) -> None:
    loaded, run_dir = open_run(args)
    bench = open_workbench(loaded, Path(args.backbone))

    result = mismatch_experiment(bench, seed=args.seed)
    curves = result.curves[["step", "t_naive", "t_ebr", "naive", "ebr"]]
    run_dir.write_csv("divergence.csv", curves)
    plot = plot_lines(
        curves, "step", ["naive", "ebr"], run_dir.file("divergence.png"),
        "Distance of visited states to the training family", "mean |z|",
    )

    tolerance = loaded.config.experiment.sanity_tolerance
    if not sanity_within(result.sanity, tolerance):
        logger.warning(
            "Контроль маргинали %.3f далёк от %.3f (допуск %.2f): оценка маргинали ненадёжна",
            result.sanity, HALF_NORMAL_MEAN, tolerance,
        )

    naive_mean, ebr_mean = float(curves["naive"].mean()), float(curves["ebr"].mean())
    console.print(f"[bold]divergence[/bold] naive {naive_mean:.4f}, ebr {ebr_mean:.4f}, sanity {result.sanity:.4f}")
    text = (
        f"Mean divergence over sampling steps: naive **{naive_mean:.4f}**, ebr **{ebr_mean:.4f}**.\n"
        f"Marginal sanity check (fresh training states at t = T0): {result.sanity:.4f} "
        f"(expected about {HALF_NORMAL_MEAN:.3f}).\n"
        "Divergence is the mean absolute z-score of the states a sampler visits, measured against "
        "the Monte Carlo marginal of the training states at the same time."
    )
    write_pdf(
        run_dir.file("diagnose.pdf"),
        "Trajectory mismatch diagnostic",
        [ReportSection("Divergence curves", text, tables=[curves], images=[plot])],
    )
