"""
CSV and SVG output for evaluation artifacts.

``render(artifact, path)`` always writes ``path.csv``; plots go to
``path.svg``. Figures are built without pyplot and saved with a fixed SVG
hash salt and no date, so identical inputs give identical files.
"""

import csv
from contextlib import contextmanager
from functools import singledispatch
from pathlib import Path
from typing import Iterable, Iterator, List, Sequence

import matplotlib as mpl
import numpy as np
from matplotlib.figure import Figure

from .exceptions import ArgumentError, UsageError
from .logging_config import setup_logger
from .models import (
    MetricsTable,
    ProjectionReport,
    SingularValueSpectra,
    TrajectoryOverlay,
    VectorFieldGrid,
)

logger = setup_logger()

RC_PARAMS = {
    "svg.hashsalt": "conns",
    "svg.fonttype": "none",
    "font.family": "sans-serif",
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
}
SERIES_STYLES = ("-", "--", ":", "-.")


def fmt(value: float) -> str:
    return format(float(value), ".17g")


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path).with_suffix(".csv")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise UsageError(f"Cannot write {path}: {e}") from e
    return path


@contextmanager
def _figure(**kwargs) -> Iterator[Figure]:
    with mpl.rc_context(RC_PARAMS):
        yield Figure(**kwargs)


def _save_svg(fig: Figure, path: Path) -> Path:
    path = Path(path).with_suffix(".svg")
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        raise UsageError(f"Cannot write {path}: {e}") from e
    return path


@singledispatch
def render(artifact, path: Path, **options) -> List[Path]:
    """Write ``artifact`` next to ``path`` and return the files written."""
    raise ArgumentError(f"Cannot render objects of type {type(artifact).__name__}")


def _metric_rows(tables: Iterable[MetricsTable]) -> Iterator[List[str]]:
    for table in tables:
        for method, split, metric, state, value in table.rows():
            yield [method, split, metric, state, fmt(value)]


@render.register
def _(artifact: MetricsTable, path: Path, **options) -> List[Path]:
    return [_write_csv(path, ("method", "split", "metric", "state", "value"), _metric_rows([artifact]))]


@render.register
def _(artifact: list, path: Path, **options) -> List[Path]:
    if not all(isinstance(table, MetricsTable) for table in artifact):
        raise ArgumentError("Only lists of MetricsTable can be rendered together")
    return [_write_csv(path, ("method", "split", "metric", "state", "value"), _metric_rows(artifact))]


@render.register
def _(artifact: ProjectionReport, path: Path, **options) -> List[Path]:
    rows = [[layer, fmt(before), fmt(after), fmt(change)] for layer, before, after, change in artifact.rows()]
    return [_write_csv(path, ("layer", "sv_before", "sv_after", "frob_change"), rows)]


@render.register
def _(artifact: TrajectoryOverlay, path: Path, **options) -> List[Path]:
    """Long-format CSV ``series,t,state,value`` and one panel per state."""
    records = list(artifact.series.items())
    names = list(artifact.state_names) or (list(records[0][1].state_names) if records else [])
    rows = []
    for label, record in records:
        state_names = names or [f"x{i + 1}" for i in range(record.n)]
        for t, state in zip(record.times, record.states):
            rows.extend([label, fmt(t), name, fmt(v)] for name, v in zip(state_names, state))
    csv_path = _write_csv(path, ("series", "t", "state", "value"), rows)

    panels = max(len(names), 1)
    with _figure(figsize=(6.0, 1.8 * panels + 0.6)) as fig:
        axes = fig.subplots(panels, 1, sharex=True, squeeze=False)[:, 0]
        for k, ax in enumerate(axes):
            for s, (label, record) in enumerate(records):
                ax.plot(record.times, record.states[:, k], SERIES_STYLES[s % len(SERIES_STYLES)], label=label, lw=1.2)
            ax.set_ylabel(names[k] if names else "")
        axes[-1].set_xlabel("t [s]")
        if records:
            axes[0].legend(loc="upper right", fontsize=8)
        if artifact.title:
            fig.suptitle(artifact.title)
        fig.tight_layout()
        svg_path = _save_svg(fig, path)
    return [csv_path, svg_path]


@render.register
def _(artifact: VectorFieldGrid, path: Path, arrow_scale: float = 1.0, **options) -> List[Path]:
    """CSV ``k2_i,k2_j,dx,dy,mag`` with unscaled data; ``arrow_scale`` only affects the plot."""
    mag = artifact.magnitudes
    rows = [
        [fmt(a), fmt(b), fmt(c), fmt(d), fmt(e)]
        for a, b, c, d, e in zip(
            artifact.k_i.ravel(), artifact.k_j.ravel(), artifact.dx.ravel(), artifact.dy.ravel(), mag.ravel()
        )
    ]
    csv_path = _write_csv(path, ("k2_i", "k2_j", "dx", "dy", "mag"), rows)

    i, j = artifact.axes
    with _figure(figsize=(4.5, 4.0)) as fig:
        ax = fig.add_subplot(1, 1, 1)
        ax.quiver(
            artifact.k_i,
            artifact.k_j,
            arrow_scale * artifact.dx,
            arrow_scale * artifact.dy,
            mag,
            angles="xy",
            scale_units="xy",
            scale=1.0,
            cmap="viridis",
        )
        ax.plot(artifact.fixed_point[i], artifact.fixed_point[j], "o", color="tab:blue", ms=6)
        ax.set_xlabel(f"k2[{i}]")
        ax.set_ylabel(f"k2[{j}]")
        ax.set_aspect("equal")
        fig.tight_layout()
        svg_path = _save_svg(fig, path)
    return [csv_path, svg_path]


@render.register
def _(artifact: SingularValueSpectra, path: Path, bins: int = 30, **options) -> List[Path]:
    """All singular values per layer; the histogram uses a logarithmic count axis."""
    rows = [[layer, str(k), fmt(v)] for layer, values in artifact.spectra.items() for k, v in enumerate(values)]
    csv_path = _write_csv(path, ("layer", "index", "value"), rows)

    with _figure(figsize=(5.0, 3.5)) as fig:
        ax = fig.add_subplot(1, 1, 1)
        values = [np.asarray(v) for v in artifact.spectra.values()]
        if values and any(v.size for v in values):
            ax.hist(values, bins=bins, label=list(artifact.spectra), stacked=True)
            ax.set_yscale("log")
            ax.legend(fontsize=8)
        ax.axvline(1.0, color="black", lw=0.8, ls="--")
        ax.set_xlabel("singular value")
        ax.set_ylabel("count")
        if artifact.title:
            ax.set_title(artifact.title)
        fig.tight_layout()
        svg_path = _save_svg(fig, path)
    return [csv_path, svg_path]
