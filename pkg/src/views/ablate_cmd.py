"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/views/ablate_cmd.py

Ablate Command: Абляции с CSV, графиками и PDF-отчётом
======================================================

Режимы (ровно один):
- --t0-sweep: таблица метрик по кандидатам T0 и ранжирование t0_score;
- --bridge-compare: naive / ddbm / ebr при равном бюджете, вердикт по каждому зерну;
- --residual-compare: residual vs embedding (число параметров, потери, метрики);
- --pathway-compare: token vs embedding (итоговые потери рядом, без порога);
- --mix-compare: восстановление составной деградации смесью промптов и каждым по отдельности.

Каталог запуска эксклюзивный: непустой каталог -> ошибка, если не задан --force.
Рядом с CSV пишется report.pdf.

Функции:
- run(args) -> None
"""

from argparse import Namespace
from pathlib import Path

from src.core.rundir import RunDir
from src.models.schemas import PromptVariant
from src.services.experiments import (
    Workbench,
    bridge_experiment,
    conditioning_comparison,
    mixed_restoration,
    t0_sweep,
)
from src.services.report_maker import ReportSection, frame_preview, plot_lines, write_pdf
from src.views.common import console, open_run, open_workbench

TOY_CAVEAT = (
    "Toy-scale run: a small frozen backbone on procedural 16x16 images. "
    "Only distortion metrics (MSE/PSNR) are reported; orderings are indicative, not benchmark numbers."
)


# --- 1. РЕЖИМЫ ---


def _t0_sweep(bench: Workbench, run_dir: RunDir) -> list[ReportSection]:
    table, ranking = t0_sweep(bench)
    metrics = table.frame.reset_index()
    run_dir.write_csv("t0_metrics.csv", metrics)
    run_dir.write_csv("t0_ranking.csv", ranking)
    psnr_plot = plot_lines(metrics, "t0", ["psnr"], run_dir.file("t0_psnr.png"), "PSNR by T0", "PSNR, dB")
    score_plot = plot_lines(
        ranking.sort_values("t0"), "t0", ["score"], run_dir.file("t0_score.png"), "Aggregated T0 score", "score"
    )
    best = ranking.iloc[0]
    console.print(f"[bold]best T0[/bold] {best['t0']:g} (score {best['score']:.4f})")
    text = (
        f"Best candidate on this run: **T0 = {best['t0']:g}** (score {best['score']:.4f}). "
        "Each metric is min-max normalized across candidates, lower-is-better metrics are flipped, "
        "and the score is their equal-weight mean."
    )
    return [
        ReportSection("T0 sweep", text, tables=[ranking], images=[psnr_plot, score_plot]),
    ]


def _bridge_compare(bench: Workbench, run_dir: RunDir) -> list[ReportSection]:
    report = bridge_experiment(bench)
    run_dir.write_csv("bridge_per_seed.csv", report.per_seed)
    run_dir.write_csv("bridge_summary.csv", report.summary)
    run_dir.file("bridge_verdicts.txt").write_text("\n".join(report.verdicts) + "\n", encoding="utf-8", newline="\n")
    for line in report.verdicts:
        console.print(line)

    wide = report.per_seed.pivot(index="seed", columns="trajectory", values="mse").reset_index()
    wide.columns.name = None
    plot = plot_lines(wide, "seed", ["naive", "ddbm", "ebr"], run_dir.file("bridge_mse.png"), "MSE per seed", "MSE")
    return [
        ReportSection("Bridge comparison", "\n".join(report.verdicts), tables=[report.summary, report.per_seed], images=[plot]),
    ]


def _conditioning(bench: Workbench, run_dir: RunDir, variants: list[PromptVariant], name: str) -> list[ReportSection]:
    frame = conditioning_comparison(bench, variants)
    run_dir.write_csv(f"{name}.csv", frame)
    summary = (
        frame.groupby("variant", sort=False)[["parameter_count", "initial_loss", "final_loss", "mse", "psnr"]]
        .mean()
        .reset_index()
    )
    run_dir.write_csv(f"{name}_summary.csv", summary)
    wide = frame.pivot(index="seed", columns="variant", values="final_loss").reset_index()
    wide.columns.name = None
    plot = plot_lines(
        wide, "seed", [v.value for v in variants], run_dir.file(f"{name}_loss.png"), "Final loss per seed", "loss"
    )
    for row in summary.itertuples(index=False):
        console.print(f"{row.variant}: parameters {int(row.parameter_count)}, final loss {row.final_loss:.6f}")
    title = " vs ".join(v.value for v in variants)
    return [ReportSection(f"Conditioning pathways: {title}", tables=[summary, frame], images=[plot])]


def _mix_compare(bench: Workbench, run_dir: RunDir) -> list[ReportSection]:
    frame = mixed_restoration(bench)
    run_dir.write_csv("mix.csv", frame)
    summary = frame.groupby("prompts", sort=False)[["mse", "psnr", "input_mse"]].mean().reset_index()
    run_dir.write_csv("mix_summary.csv", summary)
    for row in summary.itertuples(index=False):
        console.print(f"{row.prompts}: mse {row.mse:.6f}")
    kinds = "+".join(k.value for k in bench.config.experiment.mix)
    return [ReportSection(f"Prompt mixing on {kinds}", tables=[summary, frame_preview(frame)])]


# --- 2. ТОЧКА ВХОДА ---


def run(args: Namespace) -> None:
    loaded, run_dir = open_run(args, exclusive=True)
    bench = open_workbench(loaded, Path(args.backbone))

    if args.t0_sweep:
        title, sections = "T0 sweep", _t0_sweep(bench, run_dir)
    elif args.bridge_compare:
        title, sections = "Bridge comparison", _bridge_compare(bench, run_dir)
    elif args.residual_compare:
        variants = [PromptVariant.RESIDUAL, PromptVariant.EMBEDDING]
        title, sections = "Residual vs embedding prompts", _conditioning(bench, run_dir, variants, "residual")
    elif args.pathway_compare:
        variants = [PromptVariant.TOKEN, PromptVariant.EMBEDDING]
        title, sections = "Token vs embedding prompts", _conditioning(bench, run_dir, variants, "pathway")
    else:
        title, sections = "Prompt mixing", _mix_compare(bench, run_dir)

    seeds = ", ".join(str(s) for s in loaded.config.experiment.seeds)
    intro = ReportSection("Setup", f"{TOY_CAVEAT}\nSeeds: {seeds}. Config: {loaded.source}.")
    write_pdf(run_dir.file("report.pdf"), title, [intro, *sections])
    console.print(f"  report -> {run_dir.file('report.pdf')}")