"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/core/__init__.py

=====================================

Инфраструктура: вычислительный движок, конфигурация, формат чекпоинтов, каталоги запусков, логирование, ошибки.
"""
