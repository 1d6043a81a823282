"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/views/inspect_cmd.py

Inspect Command: заголовок чекпоинта BPRM в виде таблицы (имя, форма, число значений),
контрольная сумма и, если рядом лежит манифест бэкбона, его хеши.
"""

import json
from argparse import Namespace
from pathlib import Path

from rich.table import Table

from src.core.checkpoint import FORMAT_VERSION, file_checksum, read_header
from src.services.backbone import manifest_path
from src.views.common import console


def run(args: Namespace) -> None:
    path = Path(args.checkpoint)
    if not path.is_file():
        raise FileNotFoundError(f"Чекпоинт не найден: {path}")
    headers = read_header(path)

    table = Table(title=f"{path.name} (BPRM v{FORMAT_VERSION})")
    table.add_column("tensor")
    table.add_column("shape")
    table.add_column("values", justify="right")
    for header in headers:
        table.add_row(header.name, "x".join(str(d) for d in header.shape) or "scalar", str(header.size))
    console.print(table)
    console.print(f"tensors {len(headers)}, values {sum(h.size for h in headers)}, checksum {file_checksum(path)}")

    manifest = manifest_path(path)
    if manifest.is_file():
        meta = json.loads(manifest.read_text(encoding="utf-8"))
        console.print(f"backbone hash {meta['backbone_hash']}")
        console.print(f"pathway hash  {meta['pathway_hash']}")
        console.print(f"version       {meta['version']}")
