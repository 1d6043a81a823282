"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/views/common.py

Общие шаги команд CLI: загрузка конфига, открытие каталога запуска,
подъём замороженного бэкбона из чекпоинта.
"""

from argparse import Namespace
from pathlib import Path

from rich.console import Console

from src.core.config import LoadedConfig, load_config
from src.core.logger import get_logger, setup_logging
from src.core.rundir import RunDir
from src.services.backbone import Backbone, load_backbone
from src.services.experiments import Workbench

logger = get_logger(__name__)

console = Console()


def open_run(args: Namespace, exclusive: bool = False) -> tuple[LoadedConfig, RunDir]:
    """Конфиг + каталог запуска с эхом конфига, зёрнами и версией."""
    loaded = load_config(args.config)
    setup_logging(args.log_level or loaded.config.experiment.log_level)
    run = RunDir.create(args.out, force=getattr(args, "force", False), exclusive=exclusive)
    run.record(loaded.config, loaded.text)
    logger.info("Конфиг: %s, каталог запуска: %s", loaded.source, run.path)
    return loaded, run


def open_workbench(loaded: LoadedConfig, backbone_path: Path) -> Workbench:
    weights, pathway = load_backbone(backbone_path)
    if weights.config != loaded.config.backbone:
        logger.warning("Архитектура из манифеста %s отличается от секции [backbone] конфига", backbone_path)
    return Workbench(backbone=Backbone(weights), pathway=pathway, config=loaded.config)
