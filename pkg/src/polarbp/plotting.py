"""Render error-rate and latency curves from sweep results to image files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["render_report"]

_MARKERS = ("o", "s", "^", "v", "D", "x")


def _as_dicts(rows) -> list[dict]:
    out = []
    for r in rows:
        out.append(r if isinstance(r, dict) else r.__dict__ if hasattr(r, "__dict__") else vars(r))
    return out


def _grouped(rows):
    groups: dict[str, list[dict]] = {}
    for row in rows:
        label = f"{row['decoder']} N={row['N']}"
        groups.setdefault(label, []).append(row)
    for label in groups:
        groups[label].sort(key=lambda r: r["ebno_db"])
    return groups


def _rate_axes(ax, ylabel):
    ax.set_xlabel("Eb/N0 (dB)")
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", linestyle="--", alpha=0.6)


def render_report(rows, out_dir, stem: str = "results") -> list[Path]:
    """Write FER, BER and average-iteration figures; returns the file paths.

    `rows` are result dicts (see `simulate.read_results_csv`) or SweepStats.
    Zero-rate points are omitted from the logarithmic plots.
    """
    rows = _as_dicts(rows)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups = _grouped(rows)
    paths = []

    for metric, ylabel, logy in (
        ("fer", "Frame error rate", True),
        ("ber", "Bit error rate", True),
        ("avg_iters", "Average iterations", False),
    ):
        fig, ax = plt.subplots(figsize=(6.0, 4.2))
        for i, (label, pts) in enumerate(sorted(groups.items())):
            x = [p["ebno_db"] for p in pts]
            y = [p[metric] for p in pts]
            marker = _MARKERS[i % len(_MARKERS)]
            if logy:
                keep = [(a, b) for a, b in zip(x, y) if b > 0]
                if not keep:
                    continue
                xs, ys = zip(*keep)
                ax.semilogy(xs, ys, marker=marker, label=label)
                if metric == "fer":
                    lo = [max(p["fer_lo"], 1e-12) for p in pts if p["fer"] > 0]
                    hi = [p["fer_hi"] for p in pts if p["fer"] > 0]
                    ax.fill_between(xs, lo, hi, alpha=0.15)
            else:
                ax.plot(x, y, marker=marker, label=label)
        _rate_axes(ax, ylabel)
        ax.legend()
        fig.tight_layout()
        path = out_dir / f"{stem}_{metric}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths
