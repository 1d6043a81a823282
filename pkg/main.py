"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: main.py

Главный файл (точка входа) исследовательского стенда: обучение промптов
восстановления изображений на замороженном flow-matching бэкбоне.
Разбирает командную строку (argparse), передаёт управление модулю команды из
src/views и превращает доменные ошибки в код возврата.

Команды:
- pretrain      : предобучение и заморозка бэкбона (чекпоинт + CSV потерь).
- train-prompt  : обучение промпта одной деградации (банк промптов + отчёт).
- restore       : восстановление PGM-файлов или тестового набора (--mix k1,k2).
- ablate        : --t0-sweep | --bridge-compare | --residual-compare | --pathway-compare | --mix-compare.
- diagnose      : кривые рассогласования траекторий naive / ebr.
- inspect       : заголовок чекпоинта BPRM.

Коды возврата:
- 0 : успех;
- 2 : ошибка конфигурации (ConfigError), сообщение называет ключ;
- 1 : любая другая доменная ошибка (форма, NaN, заморозка, контрольная сумма, нет промпта, занятый каталог).

Уровень логирования (по убыванию приоритета):
- --log-level из командной строки;
- [experiment].log_level из конфига (применяется в open_run сразу после загрузки конфига);
- WARNING до загрузки конфига и для команд без конфига (inspect).

Переменные окружения (в .env или в окружении):
- BRIDGEPROMPT_SEED : переопределяет все зёрна конфига.

Связи с другими модулями:
- src.views.*_cmd: реализация команд.
- src.core.logger: настройка логирования (rich).
"""

import argparse
import sys
from typing import Callable, Optional, Sequence

from src import __version__
from src.core.errors import ConfigError
from src.core.logger import get_logger, setup_logging
from src.models.schemas import DegradationKind, PromptVariant, Trajectory

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_DOMAIN_ERROR = 1
EXIT_CONFIG_ERROR = 2

BOOTSTRAP_LOG_LEVEL = "WARNING"

# ==========================================
# 1. РАЗБОР КОМАНДНОЙ СТРОКИ
# ==========================================


def _common(parser: argparse.ArgumentParser, needs_backbone: bool = True) -> None:
    parser.add_argument("--config", help="TOML-файл конфигурации (без него - значения по умолчанию)")
    parser.add_argument("--out", required=True, help="Каталог запуска")
    if needs_backbone:
        parser.add_argument("--backbone", required=True, help="Чекпоинт бэкбона (backbone.bprm)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bridgeprompt", description="Prompt-only restoration on a frozen backbone")
    parser.add_argument("--version", action="version", version=f"bridgeprompt {__version__}")
    parser.add_argument("--log-level", default=None, help="Уровень логирования (по умолчанию из [experiment])")
    commands = parser.add_subparsers(dest="command", required=True)

    pretrain = commands.add_parser("pretrain", help="Предобучить и заморозить бэкбон")
    _common(pretrain, needs_backbone=False)

    train = commands.add_parser("train-prompt", help="Обучить промпт одной деградации")
    _common(train)
    train.add_argument("--trajectory", choices=[t.value for t in Trajectory])
    train.add_argument("--degradation", choices=[k.value for k in DegradationKind])
    train.add_argument("--variant", choices=[v.value for v in PromptVariant if v != PromptVariant.TEXT])
    train.add_argument("--bank", help="Файл банка промптов (по умолчанию <out>/prompts.bprm)")

    restore = commands.add_parser("restore", help="Восстановить изображения")
    _common(restore)
    restore.add_argument("--bank", required=True, help="Файл банка промптов")
    restore.add_argument("--trajectory", choices=[t.value for t in Trajectory])
    restore.add_argument("--mix", help="Виды деградаций через запятую, например veil,stripe")
    restore.add_argument("--inputs", nargs="+", help="Входные PGM (без них - сгенерированный тестовый набор)")
    restore.add_argument("--references", nargs="+", help="Чистые PGM для метрик, в том же порядке")

    ablate = commands.add_parser("ablate", help="Абляции с отчётом")
    _common(ablate)
    ablate.add_argument("--force", action="store_true", help="Перезаписать непустой каталог запуска")
    mode = ablate.add_mutually_exclusive_group(required=True)
    mode.add_argument("--t0-sweep", action="store_true")
    mode.add_argument("--bridge-compare", action="store_true")
    mode.add_argument("--residual-compare", action="store_true")
    mode.add_argument("--pathway-compare", action="store_true")
    mode.add_argument("--mix-compare", action="store_true")

    diagnose = commands.add_parser("diagnose", help="Кривые рассогласования траекторий")
    _common(diagnose)
    diagnose.add_argument("--seed", type=int, default=None, help="Зерно (по умолчанию experiment.seed)")

    inspect = commands.add_parser("inspect", help="Показать заголовок чекпоинта")
    inspect.add_argument("checkpoint")
    return parser


def _handler(command: str) -> Callable[[argparse.Namespace], None]:
    # Ленивый импорт: inspect не тянет matplotlib и reportlab
    if command == "pretrain":
        from src.views.pretrain_cmd import run
    elif command == "train-prompt":
        from src.views.train_cmd import run
    elif command == "restore":
        from src.views.restore_cmd import run
    elif command == "ablate":
        from src.views.ablate_cmd import run
    elif command == "diagnose":
        from src.views.diagnose_cmd import run
    else:
        from src.views.inspect_cmd import run
    return run


# ==========================================
# 2. ЗАПУСК
# ==========================================


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level or BOOTSTRAP_LOG_LEVEL)
    try:
        _handler(args.command)(args)
    except ConfigError as e:
        logger.error("Ошибка конфигурации: %s", e)
        return EXIT_CONFIG_ERROR
    except KeyError as e:
        logger.error("%s", e.args[0] if e.args else e)
        return EXIT_DOMAIN_ERROR
    except (ValueError, RuntimeError, FloatingPointError, OSError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_DOMAIN_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
