"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/views/__init__.py

=====================================

Команды CLI: по одному модулю на глагол (pretrain, train-prompt, restore, ablate, diagnose, inspect).
"""
