"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/views/pretrain_cmd.py

Pretrain Command: Предобучение и заморозка бэкбона
==================================================

Выход в каталоге запуска:
- backbone.bprm + backbone.json: замороженные веса, текстовый путь, хеши;
- pretrain_loss.csv: ровно pretrain_steps строк (step, loss);
- pretrain_loss.png: кривая потерь.

Функции:
- run(args) -> None
"""

from argparse import Namespace

import pandas as pd

from src.services.backbone import pretrain, save_backbone
from src.services.prompts import TextPathway
from src.services.report_maker import plot_lines
from src.views.common import console, open_run


def run(args: Namespace) -> None:
    loaded, run_dir = open_run(args)
    config = loaded.config

    pathway = TextPathway(config.pathway)
    result = pretrain(config.backbone, config.data, pathway, progress=config.experiment.progress)

    checksum = save_backbone(run_dir.file("backbone.bprm"), result.weights, pathway)
    losses = pd.DataFrame({"step": range(len(result.losses)), "loss": result.losses})
    run_dir.write_csv("pretrain_loss.csv", losses)
    plot_lines(losses, "step", ["loss"], run_dir.file("pretrain_loss.png"), "Backbone pretraining", "loss", logy=True)

    console.print(f"[bold]backbone[/bold] {run_dir.file('backbone.bprm')}")
    console.print(f"  checksum {checksum}")
    console.print(f"  hash     {result.weights.hash}")
