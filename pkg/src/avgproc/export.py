"""Deterministic CSV / JSON writers.

Floats are written with ``repr`` (shortest round-trip form) and rows come out
in a fixed order, so identical runs produce byte-identical files.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SNAPSHOT_COLUMNS = ("replica_id", "t", "vertex", "opinion", "xi")
XJ_COLUMNS = ("replica_id", "t", "j", "count")
PAIRING_COLUMNS = ("t", "G_name", "simulated", "reference", "stderr")
DENSITY_COLUMNS = ("t", "u", "rho")
MOMENT_COLUMNS = ("t", "mass", "mean", "variance")
ATOM_COLUMNS = ("t", "k", "J", "value", "mass", "snapped_mass_total")
REPORT_COLUMNS = ("experiment_id", "t", "metric_name", "value", "tolerance", "pass_flag")


def torus_columns(d: int) -> tuple[str, ...]:
    return ("replica_id", "t", *(f"i{a}" for a in range(d)), "opinion")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def snapshot_rows(runs) -> Iterable[tuple]:
    """Complete-graph snapshots ordered by (replica, t, vertex); t=0 included."""
    for rid, r in enumerate(runs):
        times = [0.0] + [t for t, _ in r.snapshots if t != 0.0]
        for t in times:
            cfg, xi = r.snapshot(t)
            for v, (op, c) in enumerate(zip(cfg.opinions.tolist(), xi.tolist())):
                yield (rid, t, v, op, c)


def xj_rows(runs, times: Sequence[float]) -> list[tuple]:
    """X_j counts for every replica and time; j runs over a common range 0..jmax."""
    from .sim_complete import xj_counts

    stats = [[xj_counts(r, t) for t in times] for r in runs]
    jmax = max((len(s.counts) for row in stats for s in row), default=1) - 1
    out = []
    for rid, row in enumerate(stats):
        for t, s in zip(times, row):
            counts = np.zeros(jmax + 1, dtype=np.int64)
            counts[: len(s.counts)] = s.counts
            out.extend((rid, t, j, int(c)) for j, c in enumerate(counts))
    return out


def torus_rows(runs) -> Iterable[tuple]:
    for rid, r in enumerate(runs):
        for t, cfg in [(0.0, r.initial)] + [s for s in r.snapshots if s[0] != 0.0]:
            for idx in np.ndindex(cfg.opinions.shape):
                yield (rid, t, *idx, float(cfg.opinions[idx]))


def density_rows(snapshots) -> Iterable[tuple]:
    for g in snapshots:
        for u, r in zip(g.nodes.tolist(), g.values.tolist()):
            yield (g.time, u, r)


def moment_rows(snapshots) -> list[tuple]:
    from .limit_pde import moments

    return [(g.time, *moments(g)) for g in snapshots]


def atom_rows(snapshots, min_mass: float = 0.0) -> Iterable[tuple]:
    for mu in snapshots:
        for k, v, m in zip(mu.numerators.tolist(), mu.values.tolist(), mu.masses.tolist()):
            if m > min_mass or k == 0:
                yield (mu.time, k, mu.level, v, m, mu.snapped_mass_total)


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def clean(o):
        if isinstance(o, dict):
            return {str(k): clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, float) and not math.isfinite(o):
            return repr(o)
        return o

    path.write_text(json.dumps(clean(payload), indent=2, sort_keys=True) + "\n")
    return path
