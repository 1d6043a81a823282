"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/core/errors.py

Доменные исключения. Все наследуются от встроенных типов, поэтому вызывающий
код может ловить как точный класс, так и стандартный ValueError/RuntimeError.
"""


class ShapeError(ValueError):
    """Несовместимые формы тензоров (сообщение содержит имя операции и формы)."""


class NonFiniteError(FloatingPointError):
    """В тензоре или в функции потерь появились NaN/Inf."""


class FrozenWeightsError(RuntimeError):
    """Попытка изменить замороженные веса или нарушение контрольного хеша."""


class ChecksumError(ValueError):
    """Повреждённый или чужой файл чекпоинта."""


class ConfigError(ValueError):
    """Некорректная конфигурация (неизвестный ключ, значение вне диапазона)."""


class BudgetMismatchError(ValueError):
    """Плечи сравнительного эксперимента обучены с разным бюджетом."""
