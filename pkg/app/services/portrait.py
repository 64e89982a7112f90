from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import matplotlib

matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402
from matplotlib.patches import Circle as CirclePatch  # noqa: E402
import numpy as np  # noqa: E402

from app.services import analysis  # noqa: E402
from app.services.construct import VectorField  # noqa: E402
from app.services.errors import RealizationError  # noqa: E402

log = logging.getLogger(__name__)

GRID = 12
INFLATE = 0.25
STREAM_TOL = 1e-9
STREAM_MAX_STEPS = 4000

# фиксированная соль для id в SVG -> побайтно одинаковый вывод
matplotlib.rcParams["svg.hashsalt"] = "limit-cycles"


@dataclass
class Portrait:
    svg: str
    streamlines: List[np.ndarray] = field(default_factory=list)
    skipped: List[Tuple[float, float, str]] = field(default_factory=list)


def bounding_box(v: VectorField) -> Tuple[float, float, float, float]:
    xs, ys = [], []
    for c in v.circles:
        a, b, r = c.as_floats()
        xs += [a - r, a + r]
        ys += [b - r, b + r]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    dx, dy = (x1 - x0) * INFLATE / 2, (y1 - y0) * INFLATE / 2
    return x0 - dx, x1 + dx, y0 - dy, y1 + dy


def _seeds(box: Tuple[float, float, float, float]) -> List[Tuple[float, float]]:
    x0, x1, y0, y1 = box
    gx = np.linspace(x0, x1, GRID + 2)[1:-1]
    gy = np.linspace(y0, y1, GRID + 2)[1:-1]
    return [(float(x), float(y)) for y in gy for x in gx]


def _streamline(v: VectorField, seed, span: float, box, guard: float) -> np.ndarray:
    x0, x1, y0, y1 = box
    w, h = x1 - x0, y1 - y0
    zones = [(float(a), float(b)) for a, b in v.singular_zones]

    def _stop(step) -> Optional[float]:
        x, y = step.y1
        if not (x0 - w <= x <= x1 + w and y0 - h <= y <= y1 + h):
            return step.t1
        if any(math.hypot(x - a, y - b) < guard for a, b in zones):
            return step.t1
        return None

    parts = []
    for t_end in (span, -span):
        traj = analysis.integrate_orbit(v, seed, t_end, STREAM_TOL, stop=_stop, max_steps=STREAM_MAX_STEPS)
        parts.append(traj.states)
    back = parts[1][::-1]
    return np.vstack([back[:-1], parts[0]])


def render_portrait(v: VectorField, *, span: Optional[float] = None) -> Portrait:
    """Cycles, helper circles (dashed), holes, primary centers and streamlines
    from a fixed seed grid."""
    box = bounding_box(v)
    x0, x1, y0, y1 = box
    guard = 1e-3 * max(x1 - x0, y1 - y0)
    if span is None:
        span = 1.5 * max(analysis.quadrature_period(v, c) for c in v.circles[: v.base_count])

    portrait = Portrait(svg="")
    for seed in _seeds(box):
        near = [p for p in v.singular_zones if math.hypot(seed[0] - float(p[0]), seed[1] - float(p[1])) < guard]
        if near:
            portrait.skipped.append((seed[0], seed[1], "near singular point"))
            continue
        try:
            portrait.streamlines.append(_streamline(v, seed, span, box, guard))
        except RealizationError as exc:
            portrait.skipped.append((seed[0], seed[1], exc.code))

    fig = Figure(figsize=(6, 6))
    ax = fig.add_subplot(1, 1, 1)
    for line in portrait.streamlines:
        ax.plot(line[:, 0], line[:, 1], color="0.6", linewidth=0.5)
    for k, c in enumerate(v.circles):
        a, b, r = c.as_floats()
        extra = k >= v.base_count
        ax.add_patch(
            CirclePatch(
                (a, b),
                r,
                fill=False,
                linestyle="--" if extra else "-",
                linewidth=0.8 if extra else 1.6,
                edgecolor="tab:orange" if extra else "tab:blue",
            )
        )
    if v.holes:
        ax.plot([float(p[0]) for p in v.holes], [float(p[1]) for p in v.holes], "o", color="tab:red", markersize=3)
    if v.primary_centers:
        ax.plot(
            [float(p[0]) for p in v.primary_centers],
            [float(p[1]) for p in v.primary_centers],
            "x",
            color="black",
            markersize=4,
        )
    ax.set_xlim(x0, x1)
    ax.set_ylim(y0, y1)
    ax.set_aspect("equal")
    ax.set_title(f"mode {v.mode.value}, degree {v.degree}")

    skipped = "; ".join(f"({x:.6g}, {y:.6g}): {why}" for x, y, why in portrait.skipped) or "none"
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Description": f"skipped seeds: {skipped}"})
    portrait.svg = buf.getvalue()
    log.debug("portrait: %s streamlines, %s skipped", len(portrait.streamlines), len(portrait.skipped))
    return portrait
