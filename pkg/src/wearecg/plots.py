"""Plain-SVG 12-lead strips (real vs. reconstructed) on an ECG-paper style grid."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .leads import LEAD_NAMES

# 25 mm/s and 10 mm/mV at 4 px per mm
PX_PER_MM = 4.0
MM_PER_S = 25.0
MM_PER_MV = 10.0
ROW_MM = 20.0
LABEL_MM = 12.0


def _polyline(y_mv: np.ndarray, fs: int, baseline_px: float, color: str, width: float) -> str:
    t_px = LABEL_MM * PX_PER_MM + np.arange(len(y_mv)) / fs * MM_PER_S * PX_PER_MM
    v_px = baseline_px - y_mv * MM_PER_MV * PX_PER_MM
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(t_px, v_px))
    return f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{pts}"/>'


def render_strips(real: np.ndarray, recon: np.ndarray | None, fs: int, title: str = "",
                  lead_names=LEAD_NAMES, highlight: set[str] | None = None) -> str:
    """Return an SVG document with one row per lead; ``recon`` is overlaid in red."""
    real = np.asarray(real, dtype=np.float64)
    n_leads, n = real.shape
    width_mm = LABEL_MM + n / fs * MM_PER_S
    height_mm = ROW_MM * n_leads + 8.0
    w, h = width_mm * PX_PER_MM, height_mm * PX_PER_MM
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
           f'viewBox="0 0 {w:.0f} {h:.0f}">',
           f'<rect width="{w:.0f}" height="{h:.0f}" fill="#fff"/>']
    # 1 mm minor / 5 mm major grid
    for mm in np.arange(0.0, width_mm + 1e-9, 1.0):
        x = mm * PX_PER_MM
        major = round(mm) % 5 == 0
        out.append(f'<line x1="{x:.1f}" y1="0" x2="{x:.1f}" y2="{h:.0f}" stroke="{"#f4a6a6" if major else "#fbe1e1"}" '
                   f'stroke-width="{0.8 if major else 0.4}"/>')
    for mm in np.arange(0.0, height_mm + 1e-9, 1.0):
        y = mm * PX_PER_MM
        major = round(mm) % 5 == 0
        out.append(f'<line x1="0" y1="{y:.1f}" x2="{w:.0f}" y2="{y:.1f}" stroke="{"#f4a6a6" if major else "#fbe1e1"}" '
                   f'stroke-width="{0.8 if major else 0.4}"/>')
    if title:
        out.append(f'<text x="4" y="{6 * PX_PER_MM:.0f}" font-family="monospace" font-size="14">{escape(title)}</text>')
    for i in range(n_leads):
        base = (8.0 + ROW_MM * i + ROW_MM / 2) * PX_PER_MM
        name = lead_names[i]
        weight = "bold" if highlight and name in highlight else "normal"
        out.append(f'<text x="4" y="{base:.1f}" font-family="monospace" font-size="12" '
                   f'font-weight="{weight}">{escape(name)}</text>')
        out.append(_polyline(real[i], fs, base, "#000", 1.0))
        if recon is not None:
            out.append(_polyline(np.asarray(recon[i], dtype=np.float64), fs, base, "#d00", 0.8))
    out.append("</svg>")
    return "\n".join(out) + "\n"
