"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/views/restore_cmd.py

Restore Command: Восстановление изображений промптами из банка
==============================================================

Входы: PGM-файлы (--inputs, опционально --references для метрик) или
сгенерированный тестовый набор составной деградации --mix k1,k2.
С одним видом в --mix путь совпадает с восстановлением одним промптом.

Выход в каталоге запуска:
- restored/<имя>.pgm: по одному файлу на вход;
- restore_metrics.csv: строка на образец (mse, psnr, input_mse) и итоговая строка
  "mean". Итоговый PSNR - среднее конечных значений: образцы с mse = 0 (+inf)
  в него не входят.

Функции:
- parse_kinds(text) -> list[DegradationKind]
- run(args) -> None
"""

import math
from argparse import Namespace
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from src.core.logger import get_logger
from src.models.schemas import DegradationKind, Trajectory
from src.services.evaluation import mean_finite_psnr, mse_psnr
from src.services.experiments import make_split
from src.services.prompts import encode, load_bank
from src.services.sampler import SamplerTrace, restore
from src.services.toyworld import load_pgm, save_pgm, stack_pairs
from src.views.common import console, open_run, open_workbench

logger = get_logger(__name__)


def parse_kinds(text: str) -> list[DegradationKind]:
    try:
        kinds = [DegradationKind(part.strip()) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ValueError(f"--mix: неизвестный вид деградации в '{text}'") from e
    if not kinds:
        raise ValueError("--mix: пустой список видов деградации")
    return kinds


def _load_inputs(args: Namespace) -> tuple[list[str], np.ndarray, Optional[np.ndarray]]:
    names = [Path(p).stem for p in args.inputs]
    inputs = np.stack([load_pgm(p) for p in args.inputs])
    references = None
    if args.references:
        if len(args.references) != len(args.inputs):
            raise ValueError(f"--references: ожидается {len(args.inputs)} файлов, получено {len(args.references)}")
        references = np.stack([load_pgm(p) for p in args.references])
    return names, inputs, references


def run(args: Namespace) -> None:
    loaded, run_dir = open_run(args)
    config = loaded.config
    bench = open_workbench(loaded, Path(args.backbone))
    bank, _ = load_bank(Path(args.bank), bench.pathway)
    kinds = parse_kinds(args.mix) if args.mix else [config.train.degradation]

    # Отсутствующий вид -> KeyError со списком доступных
    contexts = [encode(bank.get(kind), bench.pathway, bench.e_null) for kind in kinds]

    if args.inputs:
        names, z_deg, z_clean = _load_inputs(args)
    else:
        _, test = make_split(config, kinds, config.sampler.seed)
        z_clean, z_deg = stack_pairs(test)
        names = [f"sample_{i:03d}" for i in range(len(test))]

    trajectory = Trajectory(args.trajectory) if args.trajectory else config.sampler.trajectory
    sampler = config.sampler.model_copy(update={"trajectory": trajectory})
    trace = SamplerTrace()
    restored = restore(z_deg, contexts, bench.backbone, sampler, trace)
    logger.info("Сэмплер %s: %d шагов, NFE = %d", trajectory.value, sampler.steps, trace.nfe)

    rows = []
    for index, name in enumerate(names):
        save_pgm(run_dir.file(f"restored/{name}.pgm"), restored[index])
        row = {"sample": name, "mse": math.nan, "psnr": math.nan, "input_mse": math.nan}
        if z_clean is not None:
            row["mse"], row["psnr"] = mse_psnr(restored[index], z_clean[index])
            row["input_mse"], _ = mse_psnr(np.clip(z_deg[index], 0.0, 1.0), z_clean[index])
        rows.append(row)
    frame = pd.DataFrame(rows, columns=["sample", "mse", "psnr", "input_mse"])

    if z_clean is not None:
        aggregate = {
            "sample": "mean",
            "mse": float(frame["mse"].mean()),
            "psnr": mean_finite_psnr(list(frame["psnr"])),
            "input_mse": float(frame["input_mse"].mean()),
        }
        frame = pd.concat([frame, pd.DataFrame([aggregate])], ignore_index=True)
        console.print(
            f"[bold]restore[/bold] {'+'.join(k.value for k in kinds)} via {trajectory.value}: "
            f"mse {aggregate['mse']:.6f}, psnr {aggregate['psnr']:.3f} dB (input mse {aggregate['input_mse']:.6f})"
        )
    run_dir.write_csv("restore_metrics.csv", frame)
    console.print(f"  {len(names)} images -> {run_dir.file('restored')}")
