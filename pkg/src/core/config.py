"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/core/config.py

Configuration Service: Загрузка и проверка конфигурации
=======================================================

Читает TOML-конфиг эксперимента, валидирует его через pydantic-схему Config и
применяет переопределения из окружения. Все обращения к переменным окружения
собраны здесь, в одном месте.

Основные возможности:
- Разбор TOML (tomllib, на Python < 3.11 - tomli).
- Неизвестный ключ или значение вне диапазона -> ConfigError с точечным путём ключа
  (например, `backbone.hiden_dim`).
- Подгрузка .env через python-dotenv; BRIDGEPROMPT_SEED заменяет все зёрна конфига.
- Сохранение исходного текста конфига для дословного эха в каталог запуска.

Переменные:
- Внешние (переменные окружения):
    - BRIDGEPROMPT_SEED: целое число, переопределяет seed во всех секциях.

Классы:
- LoadedConfig: провалидированный Config + исходный текст файла.

Функции:
- load_config(path: str | Path | None) -> LoadedConfig
- parse_config(text: str, source: str) -> Config
- seed_override() -> Optional[int]

Связи с другими модулями:
- main.py и src.views.*: загружают конфиг перед выполнением команды.
- src.core.rundir: пишет LoadedConfig.text в config.toml каталога запуска.
"""

import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from dotenv import load_dotenv
from pydantic import ValidationError

from src.core.errors import ConfigError
from src.core.logger import get_logger
from src.models.schemas import Config

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = get_logger(__name__)

SEED_ENV = "BRIDGEPROMPT_SEED"


@dataclass(frozen=True)
class LoadedConfig:
    config: Config
    text: str
    source: str


# --- 1. ОКРУЖЕНИЕ ---


def seed_override() -> Optional[int]:
    """
    Читает BRIDGEPROMPT_SEED из окружения (и из .env, если он есть).

    Raises:
        ConfigError: если значение не является целым числом.
    """
    load_dotenv(override=False)
    raw = os.getenv(SEED_ENV)
    if raw is None or not raw.strip():
        return None
    try:
        return int(raw.strip())
    except ValueError as e:
        raise ConfigError(f"{SEED_ENV}: ожидается целое число, получено '{raw}'") from e


# --- 2. РАЗБОР И ВАЛИДАЦИЯ ---


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        key = ".".join(str(p) for p in item["loc"]) or "<root>"
        if item["type"] == "extra_forbidden":
            parts.append(f"{key}: неизвестный ключ")
        else:
            parts.append(f"{key}: {item['msg']}")
    return "; ".join(parts)


def parse_config(text: str, source: str = "<string>") -> Config:
    """Разбирает текст TOML и возвращает провалидированный Config (без переопределений окружения)."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{source}: синтаксическая ошибка TOML: {e}") from e
    try:
        return Config.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"{source}: {_describe(e)}") from e


def load_config(path: Union[str, Path, None] = None) -> LoadedConfig:
    """
    Загружает конфиг из файла. Без пути возвращаются значения по умолчанию.

    Raises:
        ConfigError: файл не найден, синтаксическая ошибка, неизвестный ключ или значение вне диапазона.
    """
    if path is None:
        text, source = "", "<defaults>"
    else:
        file_path = Path(path)
        if not file_path.is_file():
            raise ConfigError(f"Файл конфигурации не найден: {file_path}")
        text, source = file_path.read_text(encoding="utf-8"), str(file_path)

    config = parse_config(text, source)
    seed = seed_override()
    if seed is not None:
        logger.info("%s=%d переопределяет все зёрна конфигурации", SEED_ENV, seed)
        config = config.with_seed(seed)
    return LoadedConfig(config=config, text=text, source=source)
