"""CSV, SVG and manifest writers for command outputs."""

from __future__ import annotations

import json
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    if value is None:
        return ""
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """UTF-8, comma separated, header row, floats with 17 significant digits."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_quote(fmt(v)) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _quote(s: str) -> str:
    if any(ch in s for ch in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    dashed: bool = False


def svg_line_chart(path: Path, series: Sequence[Series], *, title: str = "", xlabel: str = "",
                   ylabel: str = "", logy: bool = False, width: int = 640, height: int = 400) -> Path:
    """A plain line chart written directly as SVG."""
    ml, mr, mt, mb = 70, 20, 30, 50
    pw, ph = width - ml - mr, height - mt - mb
    prepared = []
    for s in series:
        x = np.asarray(s.x, dtype=float)
        y = np.asarray(s.y, dtype=float)
        if logy:
            keep = y > 0
            x, y = x[keep], np.log10(y[keep])
        keep = np.isfinite(x) & np.isfinite(y)
        prepared.append((s, x[keep], y[keep]))
    xs = np.concatenate([p[1] for p in prepared]) if prepared else np.zeros(1)
    ys = np.concatenate([p[2] for p in prepared]) if prepared else np.zeros(1)
    if xs.size == 0:
        xs = ys = np.zeros(1)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def py(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{_esc(title)}</text>')
    for k in range(5):
        xv = x0 + (x1 - x0) * k / 4
        yv = y0 + (y1 - y0) * k / 4
        ylab = f"1e{yv:.3g}" if logy else f"{yv:.4g}"
        out.append(f'<text x="{px(xv):.1f}" y="{mt + ph + 16}" text-anchor="middle" font-size="10">{xv:.4g}</text>')
        out.append(f'<text x="{ml - 6}" y="{py(yv) + 3:.1f}" text-anchor="end" font-size="10">{ylab}</text>')
    if xlabel:
        out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="12">{_esc(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{mt + ph / 2:.1f}" text-anchor="middle" font-size="12" '
                   f'transform="rotate(-90 14 {mt + ph / 2:.1f})">{_esc(ylabel)}</text>')
    for n, (s, x, y) in enumerate(prepared):
        color = PALETTE[n % len(PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        dash = ' stroke-dasharray="5,3"' if s.dashed else ""
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{pts}"/>')
        out.append(f'<text x="{ml + pw - 4}" y="{mt + 14 + 14 * n}" text-anchor="end" font-size="11" '
                   f'fill="{color}">{_esc(s.label)}</text>')
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    parameters: dict
    tolerances: dict
    outputs: list[str] = field(default_factory=list)
    wall_clock: float = math.nan
    status: str = ""
    exit_code: int = 0

    def versions(self) -> dict:
        import scipy

        from . import __version__

        return {"lattice_kpp": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                "python": platform.python_version()}

    def write(self, out_dir: Path, name: str = "manifest.json") -> Path:
        path = out_dir / name
        files = sorted({p.name for p in out_dir.iterdir() if p.is_file()} | {name})
        self.outputs = files
        doc = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "parameters": self.parameters,
            "tolerances": self.tolerances,
            "versions": self.versions(),
            "outputs": self.outputs,
            "wall_clock_seconds": self.wall_clock,
            "status": self.status,
            "exit_code": self.exit_code,
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n",
                        encoding="utf-8")
        return path


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return str(obj)
