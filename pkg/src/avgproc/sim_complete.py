"""Continuous-time averaging process on the complete graph.

All N^2 ordered pairs ring at rate 1/N, so one exponential clock of rate N
drives the process and each event picks (x, y) uniformly with replacement.
Self-pairs leave the opinions alone but still count as an interaction
attempt of x, which gives every vertex Poisson(2t(1 - 1/2N)) attempts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .core import (
    AvgProcError,
    EventLog,
    EventStream,
    InitialDistribution,
    OpinionConfig,
    ReplayError,
    RngStream,
    ScheduleError,
    _check_vertex,
    sample_initial,
)


class MissingSnapshotError(AvgProcError, KeyError):
    pass


@njit(cache=True, nogil=True)
def _apply_events(omega, xi, xs, ys, start, stop):
    for k in range(start, stop):
        x = xs[k]
        y = ys[k]
        if x == y:
            xi[x] += 1
        else:
            m = (omega[x] + omega[y]) / 2.0
            omega[x] = m
            omega[y] = m
            xi[x] += 1
            xi[y] += 1


@dataclass
class CompleteGraphRun:
    config: OpinionConfig
    xi: np.ndarray
    snapshot_times: list
    snapshots: list  # (t, OpinionConfig)
    xi_snapshots: list  # aligned with snapshots
    initial: OpinionConfig
    rng: RngStream
    horizon: float
    n_events: int = 0
    n_self_events: int = 0

    @property
    def n(self) -> int:
        return self.config.n_vertices

    def snapshot(self, t: float) -> tuple[OpinionConfig, np.ndarray]:
        for (s, cfg), xi in zip(self.snapshots, self.xi_snapshots):
            if s == t:
                return cfg, xi
        if t == 0:
            return self.initial.copy(), np.zeros(self.n, dtype=np.int64)
        raise MissingSnapshotError(f"time {t} was not snapshotted")

    def event_log(self) -> EventLog:
        return EventLog.record(self.n, self.rng, self.horizon)


@dataclass
class XjStatistic:
    """counts[j] = number of vertices with exactly j interaction attempts by time t."""

    counts: np.ndarray
    t: float
    n: int

    def __post_init__(self):
        assert int(self.counts.sum()) == self.n


class ReplayResult(NamedTuple):
    original: float
    perturbed: float
    j: int


def next_event(n: int, gen: np.random.Generator) -> tuple[float, int, int]:
    """One draw of the aggregate clock; the block simulator uses the same law."""
    w = gen.standard_exponential() / n
    x = int(gen.integers(0, n))
    y = int(gen.integers(0, n))
    return w, x, y


def _check_schedule(snapshot_times, horizon) -> list:
    if horizon < 0:
        raise ScheduleError("horizon must be nonnegative")
    times = sorted(set(float(s) for s in (snapshot_times or [])))
    for s in times:
        if not (0 <= s <= horizon) or math.isnan(s):
            raise ScheduleError(f"snapshot time {s} outside [0, {horizon}]")
    return times


def run(
    dist: InitialDistribution | None,
    n: int,
    horizon: float,
    snapshot_times: Sequence[float] | None,
    rng: RngStream,
    initial: OpinionConfig | None = None,
) -> CompleteGraphRun:
    """Simulate up to ``horizon``; snapshots hold the state after the last event <= t."""
    snaps = _check_schedule(snapshot_times, horizon)
    if initial is None:
        initial = sample_initial(dist, n, rng)
    elif initial.n_vertices != n:
        raise ValueError("initial configuration has the wrong size")
    omega = initial.opinions.copy()
    xi = np.zeros(n, dtype=np.int64)
    snapshots, xi_snaps = [], []
    idx = 0
    n_events = 0
    n_self = 0
    t = 0.0
    for waits, xs, ys in EventStream(n, rng).blocks():
        times = t + np.cumsum(waits)
        end = int(np.searchsorted(times, horizon, side="right"))
        pos = 0
        while idx < len(snaps):
            k = int(np.searchsorted(times, snaps[idx], side="right"))
            if k >= len(times):
                break
            _apply_events(omega, xi, xs, ys, pos, k)
            pos = k
            snapshots.append((snaps[idx], OpinionConfig(omega, snaps[idx], initial.support_bound)))
            xi_snaps.append(xi.copy())
            idx += 1
        _apply_events(omega, xi, xs, ys, pos, end)
        n_events += end
        n_self += int(np.count_nonzero(xs[:end] == ys[:end]))
        if end < len(times):
            break
        t = times[-1]
    return CompleteGraphRun(
        config=OpinionConfig(omega, horizon, initial.support_bound),
        xi=xi,
        snapshot_times=snaps,
        snapshots=snapshots,
        xi_snapshots=xi_snaps,
        initial=initial,
        rng=rng,
        horizon=float(horizon),
        n_events=n_events,
        n_self_events=n_self,
    )


def run_replicas(dist, n, horizon, snapshot_times, seed: int, replicas: int) -> list[CompleteGraphRun]:
    return [run(dist, n, horizon, snapshot_times, RngStream(seed, r)) for r in range(replicas)]


def xj_counts(run: CompleteGraphRun, t: float) -> XjStatistic:
    _, xi = run.snapshot(t)
    return XjStatistic(np.bincount(xi, minlength=1), t, run.n)


def expected_xj(n: int, t: float, j: int) -> float:
    """Mean of X_j^t: N times the Poisson(2t(1 - 1/2N)) mass at j."""
    if t == 0:
        return float(n) if j == 0 else 0.0
    lam = 2.0 * t * (1.0 - 1.0 / (2.0 * n))
    return n * math.exp(j * math.log(lam) - lam - math.lgamma(j + 1))


def replay(initial: OpinionConfig, log: EventLog, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Re-apply the events of ``log`` up to time t; returns (opinions, xi)."""
    if log.n != initial.n_vertices:
        raise ReplayError("log and configuration disagree on N")
    if t > log.horizon:
        raise ReplayError(f"log covers [0, {log.horizon}] but replay asked for t={t}")
    k = int(np.searchsorted(log.times, t, side="right"))
    omega = initial.opinions.copy()
    xi = np.zeros(log.n, dtype=np.int64)
    _apply_events(omega, xi, log.xs, log.ys, 0, k)
    return omega, xi


def perturbed_replay(
    source: CompleteGraphRun | EventLog,
    x: int,
    delta: float,
    t: float,
    initial: OpinionConfig | None = None,
    exact: bool = True,
) -> ReplayResult:
    """Replay one event log twice, once with opinion x shifted by ``delta``.

    With ``exact`` the replay runs in rational arithmetic on the exact values
    of the floats, so the comparison against delta/2^j involves no rounding.
    """
    if isinstance(source, CompleteGraphRun):
        log = source.event_log()
        initial = source.initial if initial is None else initial
    else:
        log = source
        if initial is None:
            raise ReplayError("an initial configuration is required with a bare EventLog")
    x = _check_vertex(initial.n_vertices, x)
    if log.n != initial.n_vertices:
        raise ReplayError("log and configuration disagree on N")
    if t > log.horizon:
        raise ReplayError(f"log covers [0, {log.horizon}] but replay asked for t={t}")
    k = int(np.searchsorted(log.times, t, side="right"))
    xs, ys = log.xs[:k].tolist(), log.ys[:k].tolist()
    j = sum(1 for a, b in zip(xs, ys) if a == x or b == x)

    if exact:
        d = Fraction(delta)
        w = {}
        w_hat = {}

        def val(store, v, shift):
            if v in store:
                return store[v]
            base = Fraction(float(initial.opinions[v]))
            return base + shift if v == x else base

        for a, b in zip(xs, ys):
            if a == b:
                continue
            m = (val(w, a, 0) + val(w, b, 0)) / 2
            mh = (val(w_hat, a, d) + val(w_hat, b, d)) / 2
            w[a] = w[b] = m
            w_hat[a] = w_hat[b] = mh
        return ReplayResult(val(w, x, 0), val(w_hat, x, d), j)

    omega = initial.opinions.copy()
    hat = omega.copy()
    hat[x] += delta
    xi = np.zeros(log.n, dtype=np.int64)
    _apply_events(omega, xi, log.xs, log.ys, 0, k)
    xi[:] = 0
    _apply_events(hat, xi, log.xs, log.ys, 0, k)
    return ReplayResult(float(omega[x]), float(hat[x]), j)
