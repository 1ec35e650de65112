"""Static SVG figures for traces, controller comparisons and sweeps.

Figures are drawn on standalone :class:`matplotlib.figure.Figure` objects
(no pyplot state) and saved with a fixed SVG hash salt and no date
metadata, so the same input always produces the same bytes.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Mapping, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib.figure import Figure

from .export import atomic_write

FIGURE_KINDS = (
    "queues-per-link",
    "max-queue-comparison",
    "avg-queue-comparison",
    "sweep-multiplier-bar",
)

_RC = {
    "svg.hashsalt": "bpsignal",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig: Figure, path: Union[str, Path, None]) -> bytes:
    buf = io.BytesIO()
    with matplotlib.rc_context({"svg.hashsalt": _RC["svg.hashsalt"], "svg.fonttype": "path"}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    data = buf.getvalue()
    if path is not None:
        atomic_write(path, data)
    return data


def _figure(width: float = 6.4, height: float = 3.6) -> Figure:
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(width, height))
        fig.add_subplot(1, 1, 1)
    return fig


def queues_per_link(trace, path=None, links: Sequence[int] = None) -> bytes:
    """Queue length against slot for every non-exit link (one line each)."""
    if trace.horizon == 0:
        raise ValueError("cannot plot an empty trace")
    with matplotlib.rc_context(_RC):
        fig = _figure()
        ax = fig.axes[0]
        t = np.arange(trace.queues.shape[0])
        chosen = links if links is not None else [trace.link_ids[k] for k in trace.interior_links()]
        for a in chosen:
            k = trace.link_ids.index(a)
            style = dict(marker="o", markersize=3) if len(t) <= 2 else {}
            ax.plot(t, trace.queues[:, k], linewidth=0.8, label=f"link {a}", **style)
        finite = [] if trace.capacity is None else sorted({float(c) for c in trace.capacity if np.isfinite(c)})
        for c in finite:
            ax.axhline(c, color="0.4", linestyle="--", linewidth=0.8)
        ax.set_xlabel("slot")
        ax.set_ylabel("queue (vehicles)")
        ax.set_title(f"{trace.controller}: queue per link")
        ax.legend(fontsize=6, ncol=4, loc="upper left")
        fig.tight_layout()
    return _save(fig, path)


def queue_comparison(summary: Mapping[str, tuple], kind: str, path=None) -> bytes:
    """Grouped bars of per-link max or average queue, one series per controller.

    ``summary`` maps a controller name to ``(link_ids, max_q, avg_q)``.
    """
    if kind not in ("max", "avg"):
        raise ValueError("kind must be 'max' or 'avg'")
    if not summary:
        raise ValueError("nothing to compare")
    names = list(summary)
    links = list(summary[names[0]][0])
    if not links:
        raise ValueError("cannot plot an empty comparison")
    with matplotlib.rc_context(_RC):
        fig = _figure()
        ax = fig.axes[0]
        x = np.arange(len(links))
        width = 0.8 / len(names)
        for i, name in enumerate(names):
            vals = np.asarray(summary[name][1 if kind == "max" else 2], dtype=float)
            ax.bar(x + (i - (len(names) - 1) / 2) * width, vals, width, label=name)
        ax.set_xticks(x)
        ax.set_xticklabels([str(a) for a in links])
        ax.set_xlabel("link")
        ax.set_ylabel(("maximum" if kind == "max" else "average") + " queue (vehicles)")
        ax.legend(fontsize=7)
        fig.tight_layout()
    return _save(fig, path)


def sweep_multiplier_bar(results, path=None) -> bytes:
    """One bar per controller: the largest multiplier meeting the criterion."""
    results = list(results)
    if not results:
        raise ValueError("no sweep results to plot")
    with matplotlib.rc_context(_RC):
        fig = _figure(4.8, 3.4)
        ax = fig.axes[0]
        x = np.arange(len(results))
        vals = [r.rho_hat for r in results]
        bars = ax.bar(x, vals, 0.6, color=[f"C{i}" for i in range(len(results))])
        for b, r in zip(bars, results):
            tag = f"{r.rho_hat:.2f}" + ("+" if r.at_upper_bound else "")
            ax.annotate(tag, (b.get_x() + b.get_width() / 2, b.get_height()),
                        ha="center", va="bottom", fontsize=8)
        ax.set_xticks(x)
        ax.set_xticklabels([r.controller for r in results])
        ax.set_ylabel("demand multiplier")
        ax.set_title("largest sustainable demand multiplier")
        fig.tight_layout()
    return _save(fig, path)


def queue_summary(trace) -> tuple:
    """``(link_ids, max_q, avg_q)`` over the non-exit links of a trace."""
    keep = trace.interior_links()
    q = trace.queues[:, keep]
    return [trace.link_ids[k] for k in keep], q.max(axis=0), q.mean(axis=0)
