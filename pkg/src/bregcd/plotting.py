"""Objective and stationarity curves from trace CSVs (matplotlib, file output only)."""

from __future__ import annotations

import glob
import os
import re

import numpy as np

_LABEL = re.compile(r"^(?P<problem>[a-z]+)_(?P<solver>[a-z-]+?)(?:_g(?P<gamma>[0-9.e+-]+))?_s(?P<seed>-?\d+)\.csv$")


def _collect(directory: str) -> dict:
    from .experiment import read_trace_csv

    curves: dict = {}
    for path in sorted(glob.glob(os.path.join(directory, "*.csv"))):
        m = _LABEL.match(os.path.basename(path))
        if not m:
            continue
        label = m["solver"].upper() + (f" (gamma={m['gamma']})" if m["gamma"] else "")
        tr = read_trace_csv(path)
        if not tr.records:
            continue
        curves.setdefault((m["problem"], label), []).append(tr)
    return curves


def _median_curve(traces, column: str):
    length = max(len(t.records) for t in traces)
    vals = np.full((len(traces), length), np.nan)
    for row, t in enumerate(traces):
        col = np.array([getattr(r, column) for r in t.records], dtype=float)
        vals[row, : col.size] = col
    epochs = np.arange(1, length + 1)
    with np.errstate(all="ignore"):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            med = np.nanmedian(vals, axis=0)
    return epochs, med


def render_figures(directory: str, out_dir: str | None = None) -> list[str]:
    """Median-over-seeds curves per solver; one PNG per problem and column."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = out_dir or directory
    curves = _collect(directory)
    written = []
    for problem in sorted({k[0] for k in curves}):
        for column, ylabel in (("objective", "objective F(x)"), ("stationarity", "D_H(T(x), x)")):
            fig, ax = plt.subplots(figsize=(6, 4))
            for (prob, label), traces in sorted(curves.items()):
                if prob != problem:
                    continue
                epochs, med = _median_curve(traces, column)
                if np.all(~np.isfinite(med)):
                    continue
                ax.plot(epochs, med, label=f"{label} [{len(traces)}]")
            ax.set_yscale("log")
            ax.set_xlabel("epoch")
            ax.set_ylabel(ylabel)
            ax.set_title(f"{problem}: median over seeds")
            ax.legend(fontsize=8)
            fig.tight_layout()
            path = os.path.join(out_dir, f"{problem}_{column}.png")
            fig.savefig(path, dpi=100)
            plt.close(fig)
            written.append(path)
    return written
