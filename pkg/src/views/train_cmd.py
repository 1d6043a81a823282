"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/views/train_cmd.py

Train-Prompt Command: Обучение промпта деградации на замороженном бэкбоне
=========================================================================

Параметры командной строки (--trajectory, --degradation, --variant) переопределяют
секцию [train]. Банк промптов накапливается: если файл банка уже есть, новый
промпт добавляется к сохранённым (промпт того же вида заменяется).

Выход в каталоге запуска:
- prompts.bprm (или путь --bank): банк промптов с состояниями AdamW;
- train_<вид>_<траектория>_<вариант>.csv: кривая потерь (iteration, loss);
- train_<вид>_<траектория>_<вариант>.json: TrainSummary (хеши до/после, проверка нулевого гейта).

Функции:
- run(args) -> None
"""

from argparse import Namespace
from pathlib import Path

from src.core.errors import FrozenWeightsError
from src.models.schemas import TrainConfig
from src.services.experiments import make_split
from src.services.prompts import PromptBank, load_bank, save_bank
from src.services.training import loss_curve_frame, train_prompt
from src.views.common import console, open_run, open_workbench


def run(args: Namespace) -> None:
    loaded, run_dir = open_run(args)
    bench = open_workbench(loaded, Path(args.backbone))

    update = {
        key: value
        for key, value in {"trajectory": args.trajectory, "degradation": args.degradation, "variant": args.variant}.items()
        if value is not None
    }
    train_config = TrainConfig.model_validate({**loaded.config.train.model_dump(), **update})

    bank_path = Path(args.bank) if args.bank else run_dir.file("prompts.bprm")
    bank, states = (load_bank(bank_path, bench.pathway) if bank_path.is_file() else (PromptBank(), {}))

    train_pairs, _ = make_split(loaded.config, [train_config.degradation], train_config.seed)
    report = train_prompt(
        train_config, bank, bench.backbone, bench.pathway, train_pairs, progress=loaded.config.experiment.progress
    )
    states[train_config.degradation] = report.optimizer
    checksum = save_bank(bank_path, bank, bench.pathway, states)

    stem = f"train_{train_config.degradation.value}_{train_config.trajectory.value}_{train_config.variant.value}"
    run_dir.write_csv(f"{stem}.csv", loss_curve_frame(report.losses))
    run_dir.file(f"{stem}.json").write_text(
        report.summary.model_dump_json(indent=2) + "\n", encoding="utf-8", newline="\n"
    )

    summary = report.summary
    console.print(f"[bold]prompt[/bold] {summary.degradation.value} -> {bank_path} (checksum {checksum})")
    console.print(f"  loss {summary.initial_loss:.6f} -> {summary.final_loss:.6f}, parameters {summary.parameter_count}")
    if summary.gate_zero_neutral is not None:
        console.print(f"  gate-zero neutrality: {'passed' if summary.gate_zero_neutral else 'FAILED'}")
    console.print(f"  frozen-hash check: {'passed' if summary.frozen_ok else 'FAILED'}")
    if not summary.frozen_ok:
        raise FrozenWeightsError("Хеш замороженных весов изменился во время обучения")
