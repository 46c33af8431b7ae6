"""On-disk formats: dataset text files, baseline curves and episode logs.

Dataset file::

    M,C,N
    d_1,...,d_M
    id,label,x^(1)_1,...,x^(1)_{d_1},...,x^(M)_{d_M}

Labels are written 1-based (empty for unlabeled rows); values use Python's
shortest round-trip float repr so a write/read cycle is exact.

Curve file: header ``round,top1`` then one row per round ``1..T``.

Episode log: JSON lines, one ``{"type": "round", ...}`` object per round and
a terminal ``{"type": "summary", ...}`` record.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import InvalidInputError, MultimodalDataset

TIMING_KEYS = ("Pred", "Sel", "Train", "Val", "Policy Update")


def write_dataset(path, data: MultimodalDataset) -> None:
    lines = [f"{data.n_modalities},{data.n_classes},{len(data)}", ",".join(str(d) for d in data.dims)]
    feats = np.hstack(data.features)
    for i in range(len(data)):
        label = "" if data.labels[i] < 0 else str(int(data.labels[i]) + 1)
        row = [str(int(data.ids[i])), label] + [repr(float(v)) for v in feats[i]]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_dataset(path) -> MultimodalDataset:
    with open(path, encoding="ascii") as fh:
        rows = [line.strip() for line in fh if line.strip()]
    if len(rows) < 2:
        raise InvalidInputError(f"{path}: missing header")
    try:
        m, c, n = (int(v) for v in rows[0].split(","))
        dims = [int(v) for v in rows[1].split(",")]
    except ValueError as exc:
        raise InvalidInputError(f"{path}: malformed header") from exc
    if len(dims) != m:
        raise InvalidInputError(f"{path}: expected {m} dims, got {len(dims)}")
    body = rows[2:]
    if len(body) != n:
        raise InvalidInputError(f"{path}: header says {n} rows, found {len(body)}")
    width = sum(dims)
    ids = np.empty(n, dtype=np.int64)
    labels = np.empty(n, dtype=np.int64)
    feats = np.empty((n, width))
    for i, line in enumerate(body):
        parts = line.split(",")
        if len(parts) != width + 2:
            raise InvalidInputError(f"{path}: row {i + 1} has {len(parts)} fields, expected {width + 2}")
        ids[i] = int(parts[0])
        labels[i] = int(parts[1]) - 1 if parts[1] else -1
        feats[i] = [float(v) for v in parts[2:]]
    bounds = np.cumsum([0] + dims)
    features = [feats[:, bounds[k]:bounds[k + 1]] for k in range(m)]
    return MultimodalDataset(ids=ids, labels=labels, features=features, n_classes=c)


def write_curve(path, top1_by_round) -> None:
    rounds = sorted(top1_by_round)
    lines = ["round,top1"] + [f"{r},{float(top1_by_round[r])!r}" for r in rounds]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_curve(path) -> dict:
    """Parse a ``round,top1`` file; rounds must be exactly ``1..T``."""
    with open(path, encoding="ascii") as fh:
        rows = [line.strip() for line in fh if line.strip()]
    if not rows or rows[0].replace(" ", "") != "round,top1":
        raise InvalidInputError(f"{path}: expected header 'round,top1'")
    curve = {}
    for line in rows[1:]:
        r_text, v_text = line.split(",")
        r, v = int(r_text), float(v_text)
        if r in curve:
            raise InvalidInputError(f"{path}: round {r} listed twice")
        if not 0.0 <= v <= 1.0:
            raise InvalidInputError(f"{path}: top1 {v} outside [0, 1]")
        curve[r] = v
    if sorted(curve) != list(range(1, len(curve) + 1)):
        raise InvalidInputError(f"{path}: rounds must run 1..T without gaps")
    return curve


def read_curves(paths) -> dict:
    return {Path(p).stem: read_curve(p) for p in paths}


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_episode_log(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(_jsonable(rec), sort_keys=True) + "\n")


def read_episode_log(path) -> list:
    """Records of a JSONL episode log; blank lines are skipped."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    return records


def strip_timings(records) -> list:
    """Copies of ``records`` without the wall-clock fields."""
    out = []
    for rec in records:
        rec = dict(rec)
        rec.pop("timings", None)
        rec.pop("elapsed", None)
        out.append(rec)
    return out
