"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/core/rundir.py

Каталог запуска: всё, что нужно для воспроизведения команды, лежит рядом с её выходами.

Содержимое:
- config.toml - дословное эхо исходного конфига;
- seeds.json  - зёрна всех секций;
- VERSION     - строка в стиле `git describe` (фоллбэк bridgeprompt-<версия>);
- выходы команды (CSV, PGM, PNG, PDF, чекпоинты).

В детерминированные файлы не пишется время выполнения, поэтому повторный
запуск с тем же конфигом даёт побайтно те же файлы.
"""

import json
import shutil
import subprocess
from pathlib import Path
from typing import Union

import pandas as pd

from src import __version__
from src.core.logger import get_logger
from src.models.schemas import Config

logger = get_logger(__name__)

SECTIONS = ("data", "pathway", "backbone", "train", "sampler", "experiment")


def version_string() -> str:
    """Версия кода: `git describe --tags --always --dirty` или bridgeprompt-<__version__>."""
    try:
        result = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
            check=True,
        )
        described = result.stdout.strip()
        if described:
            return described
    except (OSError, subprocess.SubprocessError):
        pass
    return f"bridgeprompt-{__version__}"


class RunDir:
    """Каталог одного запуска команды."""

    def __init__(self, path: Union[str, Path]) -> None:
        self.path = Path(path)

    @classmethod
    def create(cls, path: Union[str, Path], force: bool = False, exclusive: bool = False) -> "RunDir":
        """
        Создаёт каталог запуска.

        exclusive=True запрещает писать в непустой существующий каталог (ablate),
        force=True в этом случае очищает его.

        Raises:
            FileExistsError: каталог занят, а force не задан.
        """
        target = Path(path)
        if exclusive and target.exists() and any(target.iterdir()):
            if not force:
                raise FileExistsError(f"Каталог запуска уже существует и не пуст: {target} (используйте --force)")
            logger.warning("Очищаю существующий каталог запуска %s", target)
            shutil.rmtree(target)
        target.mkdir(parents=True, exist_ok=True)
        return cls(target)

    def file(self, name: str) -> Path:
        path = self.path / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def record(self, config: Config, config_text: str) -> None:
        """Пишет эхо конфига, зёрна и версию."""
        self.file("config.toml").write_text(config_text, encoding="utf-8", newline="\n")
        seeds = {name: getattr(config, name).seed for name in SECTIONS}
        seeds["experiment.seeds"] = list(config.experiment.seeds)
        self.file("seeds.json").write_text(
            json.dumps(seeds, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
        )
        self.file("VERSION").write_text(version_string() + "\n", encoding="utf-8", newline="\n")

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        return write_csv(self.file(name), frame)


def write_csv(path: Union[str, Path], frame: pd.DataFrame) -> Path:
    """CSV: запятая, строка заголовка, UTF-8, LF."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(target, index=False, encoding="utf-8", lineterminator="\n", float_format="%.10g")
    return target
