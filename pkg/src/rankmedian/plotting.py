"""Report figures. Rendering uses the Agg backend and strips PNG metadata so
reruns produce identical files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SAVE = {"dpi": 120, "metadata": {"Software": None}}

plt.rcParams.update(
    {
        "font.size": 9,
        "axes.spines.top": False,
        "axes.spines.right": False,
        "svg.hashsalt": "rankmedian",
    }
)


def plot_table1(records: list[dict], path: str | Path) -> Path:
    """One panel per setting: bars of mean test risk per (n, phi, method) with the oracle floor as a tick."""
    settings = sorted({r["setting"] for r in records}, key=[r["setting"] for r in records].index)
    methods = sorted({r["method"] for r in records}, key=[r["method"] for r in records].index)
    fig, axes = plt.subplots(1, len(settings), figsize=(4.2 * len(settings), 3.4), squeeze=False)
    width = 0.8 / max(1, len(methods))
    for ax, setting in zip(axes[0], settings):
        rows = [r for r in records if r["setting"] == setting]
        configs = list(dict.fromkeys((r["n"], r["phi"]) for r in rows))
        x = np.arange(len(configs))
        for m, method in enumerate(methods):
            vals = {(r["n"], r["phi"]): r for r in rows if r["method"] == method}
            mean = [vals[c]["mean_risk"] if c in vals else np.nan for c in configs]
            err = [vals[c]["std_risk"] if c in vals else 0.0 for c in configs]
            ax.bar(x + (m - (len(methods) - 1) / 2) * width, mean, width, yerr=err, capsize=2, label=method)
            published = [vals[c].get("published_value") if c in vals else None for c in configs]
            if any(p is not None for p in published):
                ax.plot(
                    x + (m - (len(methods) - 1) / 2) * width,
                    [np.nan if p is None else p for p in published],
                    "k.",
                    ms=4,
                    label="published" if m == 0 else None,
                )
        floors = [next(r["oracle_risk"] for r in rows if (r["n"], r["phi"]) == c) for c in configs]
        ax.hlines(floors, x - 0.45, x + 0.45, colors="crimson", lw=1.2, label="oracle floor")
        ax.set_xticks(x)
        ax.set_xticklabels([f"n={n}\nphi={p}" for n, p in configs], fontsize=7)
        ax.set_title(setting)
        ax.set_ylabel("mean test risk")
    axes[0][0].legend(fontsize=7, frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_convergence(records: list[dict], path: str | Path) -> Path:
    """Mean risk (or excess risk) against sample size, log-scaled N."""
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    N = np.array([r["N"] for r in records], dtype=float)
    mean = np.array([r["mean"] for r in records])
    se = np.array([r["std"] / np.sqrt(max(1, r["trials"])) for r in records])
    label = records[0]["method"] if records else ""
    ax.errorbar(N, mean, yerr=se, marker="o", ms=3, capsize=2, label=label)
    if records and records[0]["study"] == "rmr":
        ax.axhline(records[0]["oracle_risk"], color="crimson", lw=1, ls="--", label="oracle floor")
        ax.set_ylabel("mean test risk")
    else:
        ax.set_ylabel("mean excess risk")
        rec = [r["recovery_rate"] for r in records]
        ax2 = ax.twinx()
        ax2.plot(N, rec, "s:", ms=3, color="grey", label="recovery rate")
        ax2.set_ylim(0, 1.02)
        ax2.set_ylabel("recovery rate")
    ax.set_xscale("log")
    ax.set_xlabel("N")
    ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path
