"""Plot tables from episode logs and their matplotlib renderings.

Table builders only read the fields they need, so logs written by newer
versions (extra keys) still work.
"""

from __future__ import annotations

from collections import defaultdict

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.2),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.4,
    "lines.markersize": 3.5,
}


def _rounds(records) -> list:
    rounds = (r for r in records if isinstance(r, dict) and r.get("type") == "round" and "round" in r)
    return sorted(rounds, key=lambda r: r["round"])


def _summary(records) -> dict:
    return next((r for r in records if isinstance(r, dict) and r.get("type") == "summary"), {})


def log_strategy(records) -> str:
    name = _summary(records).get("strategy")
    if name is None:
        rounds = _rounds(records)
        name = rounds[0].get("strategy", "unknown") if rounds else "unknown"
    return str(name)


def accuracy_rows(logs: list) -> list:
    """Mean validation top-1 per strategy and round over all logs given.

    Exactly one row per round a strategy's logs cover.
    """
    acc = defaultdict(list)
    size = {}
    for records in logs:
        name = log_strategy(records)
        for r in _rounds(records):
            top1 = (r.get("g") or {}).get("top1")
            if top1 is None:
                continue
            key = (name, int(r["round"]))
            acc[key].append(float(top1))
            size.setdefault(key, r.get("labeled_size"))
    return [
        {"strategy": s, "round": t, "labeled_size": size[(s, t)],
         "top1": float(np.mean(v)), "n_logs": len(v)}
        for (s, t), v in sorted(acc.items())
    ]


def phi_rows(logs: list) -> list:
    """Mean Shapley share per strategy, round and modality."""
    acc = defaultdict(list)
    for records in logs:
        name = log_strategy(records)
        for r in _rounds(records):
            for m, value in enumerate(r.get("phi") or []):
                acc[(name, int(r["round"]), m)].append(float(value))
    return [
        {"strategy": s, "round": t, "modality": m, "phi": float(np.mean(v))}
        for (s, t, m), v in sorted(acc.items())
    ]


def weight_rows(logs: list) -> list:
    acc = defaultdict(list)
    for records in logs:
        name = log_strategy(records)
        for r in _rounds(records):
            for m, value in enumerate(r.get("w") or []):
                acc[(name, int(r["round"]), m)].append(float(value))
    return [
        {"strategy": s, "round": t, "modality": m, "w": float(np.mean(v))}
        for (s, t, m), v in sorted(acc.items())
    ]


def reward_rows(logs: list) -> list:
    """Reward traces of every log that has them, keyed by reward mode."""
    acc = defaultdict(lambda: defaultdict(list))
    for records in logs:
        for r in _rounds(records):
            trace = r.get("reward")
            if not trace:
                continue
            bucket = acc[(str(trace.get("mode", "unknown")), int(r["round"]))]
            for field in ("raw", "smoothed", "baseline", "advantage"):
                if trace.get(field) is not None:
                    bucket[field].append(float(trace[field]))
    rows = []
    for (mode, t), fields in sorted(acc.items()):
        row = {"mode": mode, "round": t}
        for field in ("raw", "smoothed", "baseline", "advantage"):
            row[field] = float(np.mean(fields[field])) if fields[field] else None
        rows.append(row)
    return rows


def trajectory_rows(records) -> list:
    """Per-round weights, gaps, modality top-1 and Shapley shares of one log."""
    rows = []
    for r in _rounds(records):
        row = {"round": r["round"], "top1": (r.get("g") or {}).get("top1")}
        for field in ("w", "delta", "per_modality_top1", "phi"):
            for m, value in enumerate(r.get(field) or []):
                row[f"{field}_{m}"] = value
        rows.append(row)
    return rows


def _series(rows, group, x, y) -> dict:
    out = defaultdict(lambda: ([], []))
    for row in rows:
        if row[y] is None:
            continue
        xs, ys = out[row[group]]
        xs.append(row[x])
        ys.append(row[y])
    return dict(out)


def _legend(ax) -> None:
    if ax.get_legend_handles_labels()[0]:
        ax.legend()


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_accuracy(rows, path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, (xs, ys) in _series(rows, "strategy", "labeled_size", "top1").items():
            ax.plot(xs, ys, marker="o", label=name)
        ax.set_xlabel("labeled instances")
        ax.set_ylabel("validation top-1")
        _legend(ax)
        _save(fig, path)


def plot_phi(rows, path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        keyed = [dict(r, series=f"{r['strategy']} m{r['modality']}") for r in rows]
        for name, (xs, ys) in _series(keyed, "series", "round", "phi").items():
            ax.plot(xs, ys, marker="o", label=name)
        ax.set_xlabel("round")
        ax.set_ylabel("Shapley share of top-1")
        _legend(ax)
        _save(fig, path)


def plot_rewards(rows, path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, (xs, ys) in _series(rows, "mode", "round", "smoothed").items():
            ax.plot(xs, ys, marker="o", label=f"{name} (smoothed)")
        for name, (xs, ys) in _series(rows, "mode", "round", "advantage").items():
            ax.plot(xs, ys, linestyle="--", label=f"{name} (advantage)")
        ax.axhline(0.0, color="0.6", linewidth=0.8)
        ax.set_xlabel("round")
        ax.set_ylabel("reward")
        _legend(ax)
        _save(fig, path)
