"""Figure rendering for result tables.

Reads the versioned results CSV, aggregates trials, writes the aggregate
table next to the figures.  The CSV stays the canonical output; figures are
a convenience rendering of it.
"""

from collections import defaultdict
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .results import read_rows, write_summary  # noqa: E402

_MARKERS = ("o", "s", "^", "v", "D", "x", "*", "P")


def _mean_table(rows, x_attr: str) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """method -> (sorted x values, mean nmse per x)."""
    acc: dict[str, dict[float, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in rows:
        acc[r.method][getattr(r, x_attr)].append(r.nmse_db)
    table = {}
    for method, cells in acc.items():
        xs = np.array(sorted(cells))
        ys = np.array([np.mean(cells[x]) for x in xs])
        table[method] = (xs, ys)
    return table


def _line_figure(table, xlabel: str, path: Path, xlog: bool = False) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for idx, (method, (xs, ys)) in enumerate(sorted(table.items())):
        ax.plot(xs, ys, marker=_MARKERS[idx % len(_MARKERS)], label=method)
    if xlog:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("NMSE (dB)")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_results(csv_path: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Render NMSE curves for whichever axes vary in the results file.

    Returns the list of files written (figures plus one aggregate CSV per
    varying axis).
    """
    csv_path = Path(csv_path)
    out_dir = Path(out_dir) if out_dir is not None else csv_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = read_rows(csv_path)
    if not rows:
        return []
    stem = csv_path.stem
    written: list[Path] = []

    axes = [("snr_db", "SNR (dB)", "snr", False),
            ("K", "inference steps K", "steps", True),
            ("alpha", "pilot ratio", "alpha", False)]
    varying = [spec for spec in axes if len({getattr(r, spec[0]) for r in rows}) > 1]
    if not varying:  # single-cell table: still render the SNR view
        varying = [axes[0]]
    for attr, xlabel, tag, xlog in varying:
        table = _mean_table(rows, attr)
        fig_path = out_dir / f"{stem}_nmse_vs_{tag}.png"
        _line_figure(table, xlabel, fig_path, xlog=xlog)
        written.append(fig_path)
        agg_path = out_dir / f"{stem}_mean_by_{tag}.csv"
        agg_rows = [[method, float(x), float(y)]
                    for method, (xs, ys) in sorted(table.items())
                    for x, y in zip(xs, ys)]
        write_summary(agg_path, ["method", attr, "mean_nmse_db"], agg_rows)
        written.append(agg_path)
    return written


def render_losses(losses_csv: str | Path, out_dir: str | Path | None = None) -> Path:
    """Training/test loss curves from the trainer's per-epoch log."""
    losses_csv = Path(losses_csv)
    out_dir = Path(out_dir) if out_dir is not None else losses_csv.parent
    data = np.genfromtxt(losses_csv, delimiter=",", names=True, skip_header=1)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(data["epoch"], data["train_loss"], label="train")
    ax.plot(data["epoch"], data["test_loss"], label="test")
    ax.set_xlabel("epoch")
    ax.set_ylabel("denoising loss")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    path = out_dir / (losses_csv.stem + ".png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
