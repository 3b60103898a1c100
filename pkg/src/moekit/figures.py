"""Figure rendering for the report path.

Matplotlib is imported lazily with the Agg backend so the core library
never pays for it and everything works headless. Each function writes one
PNG file and returns its path.
"""

from __future__ import annotations

from pathlib import Path


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def save_hit_rate_figure(series: dict[str, "object"], path, title: str = "Per-layer hit rate") -> Path:
    """Line chart of per-layer hit rates, one series per label."""
    plt = _plt()
    path = Path(path)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for label, rates in series.items():
        ax.plot(range(len(rates)), rates, marker="o", markersize=3, label=label)
    ax.set_xlabel("layer")
    ax.set_ylabel("hit rate")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if series:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_latency_figure(reports: dict[str, "object"], path) -> Path:
    """Two panels: per-layer latency per plan, and the decision mix."""
    plt = _plt()
    path = Path(path)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
    for label, report in reports.items():
        ax1.plot(
            range(report.layers),
            report.per_layer_latency_ms,
            marker="o",
            markersize=3,
            label=f"{label} (total {report.total_latency_ms:.1f} ms)",
        )
    ax1.set_xlabel("layer")
    ax1.set_ylabel("latency (ms)")
    ax1.set_title("Per-layer latency")
    ax1.grid(True, alpha=0.3)
    ax1.legend(fontsize=8)

    kinds: list[str] = []
    for report in reports.values():
        for kind in report.decisions:
            if kind not in kinds:
                kinds.append(kind)
    width = 0.8 / max(len(reports), 1)
    for i, (label, report) in enumerate(reports.items()):
        xs = [j + i * width for j in range(len(kinds))]
        ax2.bar(
            xs,
            [report.decisions.get(k, 0) for k in kinds],
            width=width,
            label=label,
        )
    ax2.set_xticks([j + 0.4 - width / 2 for j in range(len(kinds))])
    ax2.set_xticklabels(kinds, rotation=20, ha="right", fontsize=8)
    ax2.set_ylabel("decisions")
    ax2.set_title("Decision mix")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_sweep_figure(rows: list[dict], path) -> Path:
    """Mean and std hit rate against token count, one line per strategy and
    budget combination. ``rows`` are the sweep CSV rows as dicts."""
    plt = _plt()
    path = Path(path)
    combos: dict[tuple[str, int], list[tuple[int, float, float]]] = {}
    for row in rows:
        key = (str(row["strategy"]), int(row["budget"]))
        combos.setdefault(key, []).append(
            (int(row["tokens"]), float(row["mean_hit_rate"]), float(row["std_hit_rate"]))
        )
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
    for (strategy, budget), points in sorted(combos.items()):
        points.sort()
        xs = [p[0] for p in points]
        label = f"{strategy} b={budget}"
        ax1.plot(xs, [p[1] for p in points], marker="o", label=label)
        ax2.plot(xs, [p[2] for p in points], marker="o", label=label)
    for ax, name in ((ax1, "mean hit rate"), (ax2, "hit rate std")):
        ax.set_xlabel("tokens")
        ax.set_ylabel(name)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
    ax1.set_title("Mean hit rate by input length")
    ax2.set_title("Hit rate spread by input length")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
