"""Shared types for the averaging process: configurations, initial laws, randomness.

Vertices are 0-based everywhere in this package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np


class AvgProcError(Exception):
    """Base class for all errors raised by this package."""


class InvalidVertexError(AvgProcError, IndexError):
    pass


class InvalidDistributionError(AvgProcError, ValueError):
    pass


class ScheduleError(AvgProcError, ValueError):
    pass


class ReplayError(AvgProcError):
    pass


# ---------------------------------------------------------------------------
# Configurations


@dataclass
class OpinionConfig:
    """Opinion vector of a complete-graph run at process time ``time``.

    ``support_bound`` is the bound M of the initial law, carried along so
    that range checks do not depend on the sample.
    """

    opinions: np.ndarray
    time: float = 0.0
    support_bound: float = math.inf

    def __post_init__(self):
        self.opinions = np.array(self.opinions, dtype=np.float64, copy=True).reshape(-1)
        if self.time < 0:
            raise ValueError("time must be nonnegative")

    @property
    def n_vertices(self) -> int:
        return self.opinions.shape[0]

    def copy(self, time: float | None = None) -> "OpinionConfig":
        return OpinionConfig(self.opinions, self.time if time is None else time, self.support_bound)


def _check_vertex(n: int, v: int) -> int:
    v = int(v)
    if not 0 <= v < n:
        raise InvalidVertexError(f"vertex {v} outside [0, {n - 1}]")
    return v


def apply_average(config: OpinionConfig, x: int, y: int) -> OpinionConfig:
    """Return a new configuration where x and y both hold their mean opinion."""
    n = config.n_vertices
    x, y = _check_vertex(n, x), _check_vertex(n, y)
    out = config.copy()
    if x != y:
        m = (out.opinions[x] + out.opinions[y]) / 2.0
        out.opinions[x] = m
        out.opinions[y] = m
    return out


# ---------------------------------------------------------------------------
# Initial distributions

_KINDS = ("point_mass", "bernoulli", "uniform", "linear_2x", "cauchy", "piecewise_linear_density")


@dataclass(frozen=True)
class InitialDistribution:
    """Law of the i.i.d. initial opinions.

    Density kinds (uniform, linear_2x, piecewise_linear_density) are stored as
    piecewise-linear densities on knots; ``cauchy`` is heavy tailed and only
    meant as initial data for the limit solver.
    """

    kind: str
    params: tuple = ()
    knots: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidDistributionError(f"unknown distribution kind {self.kind!r}")
        if self.kind in ("uniform", "linear_2x", "piecewise_linear_density"):
            us = np.array([k[0] for k in self.knots], dtype=float)
            fs = np.array([k[1] for k in self.knots], dtype=float)
            if len(us) < 2 or not np.all(np.isfinite(us)) or not np.all(np.isfinite(fs)):
                raise InvalidDistributionError("piecewise density needs >= 2 finite knots")
            if np.any(np.diff(us) <= 0):
                raise InvalidDistributionError("knots must be strictly increasing")
            if np.any(fs < 0):
                raise InvalidDistributionError("density values must be nonnegative")
            z = float(np.sum(np.diff(us) * (fs[1:] + fs[:-1]) / 2))
            if not z > 0:
                raise InvalidDistributionError("density is not normalizable")
        if self.kind == "bernoulli" and not 0 <= self.params[0] <= 1:
            raise InvalidDistributionError("bernoulli parameter must lie in [0, 1]")
        if self.kind == "cauchy" and not self.params[0] > 0:
            raise InvalidDistributionError("cauchy scale must be positive")

    # constructors ---------------------------------------------------------

    @classmethod
    def point_mass(cls, c: float) -> "InitialDistribution":
        return cls("point_mass", (float(c),))

    @classmethod
    def bernoulli(cls, p: float) -> "InitialDistribution":
        return cls("bernoulli", (float(p),))

    @classmethod
    def uniform(cls, a: float, b: float) -> "InitialDistribution":
        if not b > a:
            raise InvalidDistributionError("uniform needs a < b")
        h = 1.0 / (b - a)
        return cls("uniform", (float(a), float(b)), ((a, h), (b, h)))

    @classmethod
    def linear_2x(cls) -> "InitialDistribution":
        return cls("linear_2x", (), ((0.0, 0.0), (1.0, 2.0)))

    @classmethod
    def cauchy(cls, a: float = 1.0) -> "InitialDistribution":
        return cls("cauchy", (float(a),))

    @classmethod
    def piecewise_linear(cls, knots) -> "InitialDistribution":
        knots = tuple((float(u), float(f)) for u, f in knots)
        return cls("piecewise_linear_density", (), knots)

    @classmethod
    def parse(cls, text: str) -> "InitialDistribution":
        """Parse the compact command-line form, e.g. ``ber:0.5`` or ``uniform:-1:1``.

        Piecewise densities are written ``pwl:u0/f0,u1/f1,...``.
        """
        name, _, rest = text.strip().partition(":")
        args = [a for a in rest.split(":") if a] if rest else []
        try:
            if name in ("point", "point_mass", "delta"):
                return cls.point_mass(float(args[0]))
            if name in ("ber", "bernoulli"):
                return cls.bernoulli(float(args[0]) if args else 0.5)
            if name == "uniform":
                return cls.uniform(float(args[0]), float(args[1]))
            if name in ("linear2x", "linear_2x"):
                return cls.linear_2x()
            if name == "cauchy":
                return cls.cauchy(float(args[0]) if args else 1.0)
            if name in ("pwl", "piecewise"):
                pairs = [p.split("/") for p in rest.split(",")]
                return cls.piecewise_linear([(float(u), float(f)) for u, f in pairs])
        except (IndexError, ValueError) as exc:
            raise InvalidDistributionError(f"cannot parse distribution {text!r}: {exc}") from exc
        raise InvalidDistributionError(f"unknown distribution {text!r}")

    # properties -----------------------------------------------------------

    @property
    def label(self) -> str:
        if self.kind == "point_mass":
            return f"point:{self.params[0]!r}"
        if self.kind == "bernoulli":
            return f"ber:{self.params[0]!r}"
        if self.kind == "uniform":
            return f"uniform:{self.params[0]!r}:{self.params[1]!r}"
        if self.kind == "linear_2x":
            return "linear2x"
        if self.kind == "cauchy":
            return f"cauchy:{self.params[0]!r}"
        return "pwl:" + ",".join(f"{u!r}/{f!r}" for u, f in self.knots)

    @property
    def is_density(self) -> bool:
        return self.kind not in ("point_mass", "bernoulli")

    @property
    def support_bound(self) -> float:
        if self.kind == "point_mass":
            return abs(self.params[0])
        if self.kind == "bernoulli":
            return 1.0
        if self.kind == "cauchy":
            return math.inf
        us = self._knot_arrays()[0]
        return float(max(abs(us[0]), abs(us[-1])))

    @property
    def support(self) -> tuple[float, float]:
        """Smallest closed interval carrying the law."""
        if self.kind == "point_mass":
            return (self.params[0], self.params[0])
        if self.kind == "bernoulli":
            p = self.params[0]
            return (0.0 if p < 1 else 1.0, 1.0 if p > 0 else 0.0)
        if self.kind == "cauchy":
            return (-math.inf, math.inf)
        us = self._knot_arrays()[0]
        return (float(us[0]), float(us[-1]))

    def _knot_arrays(self):
        us = np.array([k[0] for k in self.knots], dtype=float)
        fs = np.array([k[1] for k in self.knots], dtype=float)
        z = np.sum(np.diff(us) * (fs[1:] + fs[:-1]) / 2)
        fs = fs / z
        cum = np.concatenate([[0.0], np.cumsum(np.diff(us) * (fs[1:] + fs[:-1]) / 2)])
        return us, fs, cum

    def mean(self) -> float:
        if self.kind == "point_mass":
            return self.params[0]
        if self.kind == "bernoulli":
            return self.params[0]
        if self.kind == "cauchy":
            return math.nan
        us, fs, _ = self._knot_arrays()
        w = np.diff(us)
        # exact integral of u*f(u) for linear f on each cell
        a, b, fa, fb = us[:-1], us[1:], fs[:-1], fs[1:]
        return float(np.sum(w * (fa * (2 * a + b) + fb * (a + 2 * b)) / 6))

    def variance(self) -> float:
        if self.kind == "point_mass":
            return 0.0
        if self.kind == "bernoulli":
            p = self.params[0]
            return p * (1 - p)
        if self.kind == "cauchy":
            return math.nan
        us, fs, _ = self._knot_arrays()
        a, b, fa, fb = us[:-1], us[1:], fs[:-1], fs[1:]
        w = b - a
        m2 = np.sum(w * (fa * (3 * a * a + 2 * a * b + b * b) + fb * (a * a + 2 * a * b + 3 * b * b)) / 12)
        return float(m2 - self.mean() ** 2)

    # evaluation -----------------------------------------------------------

    def cdf(self, u):
        """Right-continuous distribution function, vectorized."""
        u = np.asarray(u, dtype=float)
        if self.kind == "point_mass":
            return (u >= self.params[0]).astype(float)
        if self.kind == "bernoulli":
            p = self.params[0]
            return np.where(u < 0, 0.0, np.where(u < 1, 1 - p, 1.0))
        if self.kind == "cauchy":
            return 0.5 + np.arctan(u / self.params[0]) / np.pi
        us, fs, cum = self._knot_arrays()
        i = np.clip(np.searchsorted(us, u, side="right") - 1, 0, len(us) - 2)
        s = np.clip(u - us[i], 0.0, us[i + 1] - us[i])
        k = (fs[i + 1] - fs[i]) / (us[i + 1] - us[i])
        val = cum[i] + fs[i] * s + 0.5 * k * s * s
        return np.where(u < us[0], 0.0, np.where(u >= us[-1], 1.0, val))

    def density(self, u):
        """Density at u, taking the mean of one-sided limits at jumps.

        The midpoint convention keeps trapezoidal quadrature on a grid through
        the jump exact for piecewise-linear densities.
        """
        if not self.is_density:
            raise InvalidDistributionError(f"{self.kind} has no density")
        u = np.asarray(u, dtype=float)
        if self.kind == "cauchy":
            a = self.params[0]
            return a / (np.pi * (a * a + u * u))
        us, fs, _ = self._knot_arrays()
        inner = np.interp(u, us, fs)
        out = np.where((u > us[0]) & (u < us[-1]), inner, 0.0)
        out = np.where(u == us[0], fs[0] / 2, out)
        return np.where(u == us[-1], fs[-1] / 2, out)

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "point_mass":
            return np.full(n, self.params[0])
        if self.kind == "bernoulli":
            return (gen.random(n) < self.params[0]).astype(np.float64)
        if self.kind == "cauchy":
            return self.params[0] * np.tan(np.pi * (gen.random(n) - 0.5))
        us, fs, cum = self._knot_arrays()
        r = gen.random(n)
        i = np.clip(np.searchsorted(cum, r, side="right") - 1, 0, len(us) - 2)
        rem = r - cum[i]
        k = (fs[i + 1] - fs[i]) / (us[i + 1] - us[i])
        disc = np.sqrt(np.maximum(fs[i] ** 2 + 2 * k * rem, 0.0))
        denom = fs[i] + disc
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(denom > 0, 2 * rem / denom, 0.0)
        return np.clip(us[i] + s, us[i], us[i + 1])


# ---------------------------------------------------------------------------
# Randomness

_PURPOSES = {"initial": 0, "events": 1, "aux": 2}


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by (seed, stream_id).

    Each purpose draws from its own Philox key, so the event sequence of a
    replica does not depend on how many initial values were sampled.
    """

    seed: int
    stream_id: int = 0

    def generator(self, purpose: str = "events") -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=int(self.seed) & 0xFFFFFFFFFFFFFFFF,
            spawn_key=(int(self.stream_id) & 0xFFFFFFFFFFFFFFFF, _PURPOSES[purpose]),
        )
        return np.random.Generator(np.random.Philox(ss))

    def replica(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


def sample_initial(dist: InitialDistribution, n: int, rng: RngStream) -> OpinionConfig:
    if n < 1:
        raise ValueError("n must be >= 1")
    values = dist.sample(rng.generator("initial"), n)
    return OpinionConfig(values, 0.0, dist.support_bound)


# ---------------------------------------------------------------------------
# Event streams

EVENT_BLOCK = 1 << 16


class EventStream:
    """Virtual event log: regenerates the complete-graph events from the seed.

    Events are drawn in fixed-size blocks; the block size is part of the
    stream definition and must not change between recording and replay.
    """

    def __init__(self, n: int, rng: RngStream, rate: float | None = None, n_choices: int | None = None):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.n = n
        self.rate = float(n if rate is None else rate)
        self.n_choices = n if n_choices is None else n_choices
        self.rng = rng

    def blocks(self) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        gen = self.rng.generator("events")
        scale = 1.0 / self.rate
        while True:
            waits = gen.standard_exponential(EVENT_BLOCK) * scale
            xs = gen.integers(0, self.n_choices, EVENT_BLOCK, dtype=np.int64)
            ys = gen.integers(0, self.n_choices, EVENT_BLOCK, dtype=np.int64)
            yield waits, xs, ys


@dataclass
class EventLog:
    """Materialized sequence of (waiting_time, x, y) covering [0, horizon]."""

    n: int
    waits: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    horizon: float

    def __post_init__(self):
        self.waits = np.asarray(self.waits, dtype=np.float64)
        self.xs = np.asarray(self.xs, dtype=np.int64)
        self.ys = np.asarray(self.ys, dtype=np.int64)
        if not (len(self.waits) == len(self.xs) == len(self.ys)):
            raise ReplayError("event arrays have different lengths")
        if np.any(self.waits <= 0):
            raise ReplayError("waiting times must be strictly positive")
        for arr in (self.xs, self.ys):
            if len(arr) and (arr.min() < 0 or arr.max() >= self.n):
                raise InvalidVertexError("event vertex out of range")

    def __len__(self) -> int:
        return len(self.waits)

    @property
    def times(self) -> np.ndarray:
        """Event times, accumulated block by block exactly as the live stream does."""
        out = np.empty_like(self.waits)
        t = 0.0
        for start in range(0, len(self.waits), EVENT_BLOCK):
            chunk = t + np.cumsum(self.waits[start:start + EVENT_BLOCK])
            out[start:start + len(chunk)] = chunk
            t = chunk[-1]
        return out

    @classmethod
    def record(cls, n: int, rng: RngStream, horizon: float) -> "EventLog":
        """Materialize every event of the stream with time <= horizon."""
        waits, xs, ys = [], [], []
        t = 0.0
        for w, x, y in EventStream(n, rng).blocks():
            times = t + np.cumsum(w)
            k = int(np.searchsorted(times, horizon, side="right"))
            waits.append(w[:k])
            xs.append(x[:k])
            ys.append(y[:k])
            if k < len(w):
                break
            t = times[-1]
        return cls(n, np.concatenate(waits), np.concatenate(xs), np.concatenate(ys), float(horizon))
