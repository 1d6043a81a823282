"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/services/__init__.py

=====================================

Предметная логика: игрушечные данные, бэкбон, мосты, промпты, обучение, сэмплеры, оценка, эксперименты, отчёты.
"""
