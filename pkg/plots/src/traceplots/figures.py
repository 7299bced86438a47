"""Figure rendering for trace bundles.

Output is deterministic: fixed style, a pinned SVG hash salt, and no
timestamp metadata, so identical inputs give byte-identical files.
"""

import matplotlib

matplotlib.use("Agg", force=True)

import matplotlib.pyplot as plt
import numpy as np

from .io import TraceBundle

__all__ = ["plot_adaptation", "plot_overall", "plot_lockin"]

_STYLE = {
    "figure.figsize": (7.0, 4.5),
    "figure.dpi": 100,
    "svg.hashsalt": "traceplots",
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
}
_COLORS = plt.rcParams["axes.prop_cycle"].by_key()["color"]


def _aligned(entries, column):
    """Stack one column across seeds, truncated to the shortest trace."""
    n = min(len(getattr(e.trace, column)) for e in entries)
    values = np.stack([getattr(e.trace, column)[:n] for e in entries])
    times = np.stack([e.trace.t_ms[:n] for e in entries])
    return times, values


def _render_groups(bundle, column, group_key, label_fn, ylabel, out_path,
                   mode="mean", lockin_markers=False):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for i, (key, entries) in enumerate(bundle.groups(group_key).items()):
            color = _COLORS[i % len(_COLORS)]
            times, values = _aligned(entries, column)
            if lockin_markers:
                values = np.maximum.accumulate(values, axis=1)
            if mode == "mean":
                for t, v in zip(times, values):
                    ax.plot(t, v, color=color, alpha=0.25, lw=0.8)
                ax.plot(times.mean(axis=0), values.mean(axis=0), color=color,
                        lw=1.8, label=label_fn(entries[0]))
            elif mode == "seeds":
                for j, (t, v) in enumerate(zip(times, values)):
                    ax.plot(t, v, color=color, lw=1.2,
                            label=label_fn(entries[0]) if j == 0 else None)
            else:
                raise ValueError(f"unknown mode {mode!r}")
            if lockin_markers or column == "alpha_overall":
                for e in entries:
                    ax.axvline(e.trace.best_t_ms, color=color, ls="--", lw=0.8, alpha=0.6)
        ax.set_xlabel("time [ms]")
        ax.set_ylabel(ylabel)
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        fig.savefig(out_path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return fig


def plot_adaptation(bundle: TraceBundle, out_path, mode="mean"):
    """Adaptation score against time, one curve per (omega, preset) label."""
    return _render_groups(bundle, "alpha_ada",
                          group_key=lambda e: (e.omega, e.preset),
                          label_fn=lambda e: f"{e.omega_label} {e.preset}",
                          ylabel="adaptation score", out_path=out_path, mode=mode)


def plot_overall(bundle: TraceBundle, out_path, mode="mean"):
    """Overall score trajectories with a lock-in marker at each best iterate."""
    return _render_groups(bundle, "alpha_overall",
                          group_key=lambda e: (e.omega, e.lambda_, e.preset),
                          label_fn=lambda e: f"{e.omega_label} {e.lambda_label} {e.preset}",
                          ylabel="overall resilience score", out_path=out_path, mode=mode)


def plot_lockin(bundle: TraceBundle, out_path, mode="mean"):
    """Running best overall score (the value locked in by the selector)."""
    return _render_groups(bundle, "alpha_overall",
                          group_key=lambda e: (e.omega, e.lambda_, e.preset),
                          label_fn=lambda e: f"{e.omega_label} {e.lambda_label} {e.preset}",
                          ylabel="best score so far", out_path=out_path, mode=mode,
                          lockin_markers=True)
