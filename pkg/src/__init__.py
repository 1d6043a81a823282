"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/__init__.py

=====================================

Корневой пакет исследовательского стенда: обучение промптов восстановления
над замороженным flow-matching бэкбоном.
"""

__version__ = "1.0.0"
