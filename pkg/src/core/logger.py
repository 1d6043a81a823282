"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/core/logger.py

Единая настройка логирования: стандартный logging с выводом через rich.

Функции:
- setup_logging(level: str = "INFO") -> None
    Один раз подключает RichHandler к корневому логгеру пакета.
- get_logger(name: str) -> logging.Logger
    Возвращает дочерний логгер пакета "bridgeprompt".
"""

import logging

from rich.logging import RichHandler

ROOT_LOGGER = "bridgeprompt"

# Флаг, чтобы не навешивать обработчик повторно (main.py и тесты вызывают setup несколько раз)
_CONFIGURED = False


def setup_logging(level: str = "INFO") -> None:
    global _CONFIGURED
    logger = logging.getLogger(ROOT_LOGGER)
    logger.setLevel(level.upper())
    if _CONFIGURED:
        return
    handler = RichHandler(show_path=False, rich_tracebacks=True, markup=False)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    logger.addHandler(handler)
    logger.propagate = True
    _CONFIGURED = True


def get_logger(name: str) -> logging.Logger:
    # src.services.training -> bridgeprompt.services.training
    short = name.removeprefix("src.")
    return logging.getLogger(f"{ROOT_LOGGER}.{short}")
