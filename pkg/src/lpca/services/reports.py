from __future__ import annotations

from io import BytesIO
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

try:
    # Optional dependency. PDF rendering raises a clear error if missing.
    from reportlab.lib.pagesizes import LETTER, landscape
    from reportlab.lib.units import inch
    from reportlab.pdfgen import canvas

    _HAS_REPORTLAB = True
except Exception:  # pragma: no cover
    canvas = None  # type: ignore[assignment]
    LETTER = None  # type: ignore[assignment]
    landscape = None  # type: ignore[assignment]
    inch = None  # type: ignore[assignment]
    _HAS_REPORTLAB = False


def format_cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def table_lines(rows: Sequence[dict], columns: Optional[Sequence[str]] = None) -> list[str]:
    """Fixed-width text table, header first."""
    if not rows:
        return []
    cols = list(columns) if columns is not None else list(rows[0].keys())
    cells = [[format_cell(row.get(c)) for c in cols] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in cells)) for i, c in enumerate(cols)]
    out = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    out.append("  ".join("-" * w for w in widths))
    out.extend("  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in cells)
    return out


def render_table_pdf(*, title: str, lines: Iterable[str], subtitle: str = "") -> bytes:
    """Render a simple landscape PDF with one line per row.

    The caller computes the content; this function only renders.
    """
    if not _HAS_REPORTLAB or canvas is None or LETTER is None or inch is None:
        raise RuntimeError("ReportLab is not installed. Add it with: poetry add reportlab")

    pagesize = landscape(LETTER)
    buf = BytesIO()
    c = canvas.Canvas(buf, pagesize=pagesize)
    _width, height = pagesize

    x = 0.6 * inch
    y = height - 0.6 * inch

    c.setFont("Helvetica-Bold", 14)
    c.drawString(x, y, title)
    y -= 0.3 * inch
    if subtitle:
        c.setFont("Helvetica", 9)
        c.drawString(x, y, subtitle[:200])
        y -= 0.3 * inch

    c.setFont("Courier", 8)
    line_height = 0.15 * inch

    for line in lines:
        if y < 0.6 * inch:
            c.showPage()
            y = height - 0.6 * inch
            c.setFont("Courier", 8)
        c.drawString(x, y, str(line)[:200])
        y -= line_height

    c.showPage()
    c.save()
    return buf.getvalue()


def write_table_pdf(path: Union[str, Path], *, title: str, rows: Sequence[dict], subtitle: str = "") -> None:
    Path(path).write_bytes(render_table_pdf(title=title, lines=table_lines(rows), subtitle=subtitle))
