"""CSV I/O for aggregate series and SVG figures rendered from those CSVs."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

CSV_HEADER = ("k", "mean", "std", "n_runs", "n_diverged")

# fixed ids and no timestamp so identical data gives identical SVG bytes
_RC = {"svg.hashsalt": "ttsa", "svg.fonttype": "none", "font.size": 9}


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(path, agg) -> None:
    """Write an aggregate as ``k,mean,std,n_runs,n_diverged`` (shortest round-trip floats)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for k, m, s, n, nd in agg.rows():
            w.writerow((int(k), _fmt(m), _fmt(s), int(n), int(nd)))


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    cols = list(zip(*rows[1:]))
    return {
        "k": np.array(cols[0], dtype=np.int64),
        "mean": np.array(cols[1], dtype=float),
        "std": np.array(cols[2], dtype=float),
        "n_runs": np.array(cols[3], dtype=np.int64),
        "n_diverged": np.array(cols[4], dtype=np.int64),
    }


def plot_csvs(curves, out_path, title: str = "", ylabel: str = "residual",
              overlays=None) -> Path:
    """Render mean +- one std per CSV on log-log and semi-log axes.

    Parameters
    ----------
    curves : list of (label, csv_path)
    overlays : dict label -> (exponent, k_cal), optional
        Adds ``C/(k+1)**exponent`` calibrated to the CSV mean at ``k_cal``.
    """
    overlays = overlays or {}
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, 2, figsize=(10, 4))
        any_positive = False
        k_max = 1
        for i, (label, path) in enumerate(curves):
            data = read_csv(path)
            k, m, s = data["k"], data["mean"], data["std"]
            color = f"C{i % 10}"
            any_positive |= bool(np.any(np.isfinite(m) & (m > 0)))
            k_max = max(k_max, int(k.max()))
            for ax, loglog in zip(axes, (True, False)):
                x = k + 1 if loglog else k
                ax.plot(x, m, color=color, lw=1.2, label=label)
                lo = np.maximum(m - s, np.nanmin(m[m > 0]) * 1e-3 if np.any(m > 0) else 1e-300)
                ax.fill_between(x, lo, m + s, color=color, alpha=0.2, lw=0)
                if label in overlays:
                    p, k_cal = overlays[label]
                    j = np.searchsorted(k, k_cal)
                    if j < k.size and k[j] == k_cal and m[j] > 0:
                        C = m[j] * (k_cal + 1.0) ** p
                        ax.plot(x, C / (k + 1.0) ** p, color=color, ls="--", lw=0.9,
                                label=f"{label}: C/(k+1)^{p:.3g}")
        axes[0].set_xscale("log")
        axes[0].set_xlim(1, k_max + 1)
        axes[0].set_xlabel("k + 1")
        axes[1].set_xlabel("k")
        # a log axis needs at least one positive point, e.g. not when every run diverged
        if any_positive:
            axes[0].set_yscale("log")
            axes[1].set_yscale("log")
        else:
            axes[0].text(0.5, 0.5, "no finite positive values", transform=axes[0].transAxes,
                         ha="center")
        for ax in axes:
            ax.set_ylabel(ylabel)
            ax.grid(True, which="both", lw=0.3, alpha=0.5)
        axes[0].legend(fontsize=7, loc="best")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        out_path = Path(out_path)
        fig.savefig(out_path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return out_path
