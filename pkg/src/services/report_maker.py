"""
Проект: BridgePrompt
Версия: 1.0
Статус: Исследовательский стенд

Модуль: src/services/report_maker.py

Report Maker: PDF-отчёты экспериментов и графики
================================================

Собирает итоги абляций и диагностики в PDF (ReportLab Platypus) и рисует
кривые в PNG (matplotlib, backend Agg). Документ строится в оперативной памяти
(BytesIO) и записывается одним вызовом.

Основные возможности:
- Разметка текста: строки '## ' - подзаголовки, **жирный**, *курсив*.
- Таблицы pandas.DataFrame -> Table с форматированием чисел.
- Встраивание PNG-графиков.
- invariant=1: повторная сборка даёт побайтно тот же файл (без даты создания).

Шрифт - встроенный Helvetica, поэтому текст отчётов на английском.

Функции:
- plot_lines(frame, x, columns, path, title, ylabel, logy) -> Path
- generate_pdf(title, sections) -> bytes
- write_pdf(path, title, sections) -> Path

Связи с другими модулями:
- src.views.ablate_cmd, src.views.diagnose_cmd, src.views.pretrain_cmd.
"""

import re
from dataclasses import dataclass, field
from io import BytesIO
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
from reportlab.lib import colors  # noqa: E402
from reportlab.lib.enums import TA_CENTER, TA_JUSTIFY, TA_LEFT  # noqa: E402
from reportlab.lib.pagesizes import A4  # noqa: E402
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet  # noqa: E402
from reportlab.platypus import Image, Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle  # noqa: E402

FONT_REGULAR = "Helvetica"
FONT_BOLD = "Helvetica-Bold"

# --- 1. ГРАФИКИ ---


def plot_lines(
    frame: pd.DataFrame,
    x: str,
    columns: Sequence[str],
    path: Union[str, Path],
    title: str,
    ylabel: str,
    logy: bool = False,
) -> Path:
    """Линейный график нескольких колонок против x; сохраняется как PNG."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.0, 3.6), dpi=100)
    for column in columns:
        ax.plot(frame[x], frame[column], marker="o" if len(frame) <= 30 else None, markersize=3, label=column)
    ax.set_title(title)
    ax.set_xlabel(x)
    ax.set_ylabel(ylabel)
    if logy:
        ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    if len(columns) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(target, format="png", metadata={"Software": None})
    plt.close(fig)
    return target


# --- 2. РАЗМЕТКА ---


def _md_to_html_tags(text: str) -> str:
    """Базовый Markdown -> теги ReportLab: **жирный**, *курсив*."""
    text = text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    text = re.sub(r"\*\*(.*?)\*\*", r"<b>\1</b>", text)
    return re.sub(r"\*(.*?)\*", r"<i>\1</i>", text)


def _format_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


@dataclass
class ReportSection:
    heading: str
    text: str = ""
    tables: list[pd.DataFrame] = field(default_factory=list)
    images: list[Path] = field(default_factory=list)


# --- 3. ГЕНЕРАТОР PDF ---


def generate_pdf(title: str, sections: Sequence[ReportSection]) -> bytes:
    """Собирает PDF в памяти и возвращает байты."""
    buffer = BytesIO()
    doc = SimpleDocTemplate(
        buffer,
        pagesize=A4,
        rightMargin=50,
        leftMargin=50,
        topMargin=50,
        bottomMargin=50,
        title=title,
        invariant=1,
    )

    styles = getSampleStyleSheet()
    title_style = ParagraphStyle(
        "ReportTitle", parent=styles["Title"], fontName=FONT_BOLD, fontSize=18, spaceAfter=20, alignment=TA_CENTER
    )
    h2_style = ParagraphStyle(
        "ReportH2", parent=styles["Heading2"], fontName=FONT_BOLD, fontSize=14, spaceBefore=15, spaceAfter=10,
        alignment=TA_LEFT,
    )
    body_style = ParagraphStyle(
        "ReportBody", parent=styles["Normal"], fontName=FONT_REGULAR, fontSize=10, spaceAfter=6, leading=14,
        alignment=TA_JUSTIFY,
    )
    table_style = TableStyle(
        [
            ("FONTNAME", (0, 0), (-1, 0), FONT_BOLD),
            ("FONTNAME", (0, 1), (-1, -1), FONT_REGULAR),
            ("FONTSIZE", (0, 0), (-1, -1), 8),
            ("BACKGROUND", (0, 0), (-1, 0), colors.lightgrey),
            ("GRID", (0, 0), (-1, -1), 0.25, colors.grey),
            ("ALIGN", (0, 0), (-1, -1), "RIGHT"),
        ]
    )

    story = [Paragraph(_md_to_html_tags(title), title_style)]
    for section in sections:
        story.append(Paragraph(_md_to_html_tags(section.heading), h2_style))
        for para in section.text.split("\n"):
            para = para.strip()
            if not para:
                continue
            if para.startswith("##"):
                story.append(Paragraph(_md_to_html_tags(para.lstrip("#").strip()), h2_style))
            else:
                story.append(Paragraph(_md_to_html_tags(para), body_style))
        for frame in section.tables:
            data = [list(map(str, frame.columns))] + [[_format_cell(v) for v in row] for row in frame.itertuples(index=False)]
            table = Table(data, repeatRows=1)
            table.setStyle(table_style)
            story.append(table)
            story.append(Spacer(1, 10))
        for image in section.images:
            story.append(Image(str(image), width=420, height=252))
            story.append(Spacer(1, 10))
        story.append(Spacer(1, 15))

    doc.build(story)
    pdf_bytes = buffer.getvalue()
    buffer.close()
    return pdf_bytes


def write_pdf(path: Union[str, Path], title: str, sections: Sequence[ReportSection]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(generate_pdf(title, sections))
    return target


def frame_preview(frame: pd.DataFrame, limit: Optional[int] = 40) -> pd.DataFrame:
    """Первые limit строк таблицы для вставки в PDF."""
    return frame if limit is None or len(frame) <= limit else frame.head(limit)
