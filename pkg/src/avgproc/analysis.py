"""Pairings of measures with test functions, W1 distances and martingale residuals."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import comb

from ._conv import autoconvolve
from .core import AvgProcError, ScheduleError


class InvalidMeasureError(AvgProcError, ValueError):
    pass


class SizeCapError(AvgProcError, ValueError):
    pass


EXACT_CONV_CAP = 20_000


@dataclass
class EmpiricalMeasure:
    """Finite signed measure sum_i w_i delta_{v_i}.

    ``weights=None`` means the uniform probability weights 1/n; keeping them
    implicit lets pairings use ``np.mean`` so that constant test functions
    pair to exactly 1.  ``values`` may be (n,) or (n, d).
    """

    values: np.ndarray
    weights: np.ndarray | None = None
    normalized: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.shape[0] != self.values.shape[0]:
                raise InvalidMeasureError("weights and values differ in length")
            if self.normalized and abs(math.fsum(self.weights) - 1.0) > 1e-12:
                raise InvalidMeasureError("normalized measure must have total weight 1")
        elif not self.normalized:
            raise InvalidMeasureError("implicit weights are always normalized")

    @classmethod
    def from_opinions(cls, opinions) -> "EmpiricalMeasure":
        return cls(np.asarray(opinions, dtype=np.float64))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def weight_array(self) -> np.ndarray:
        if self.weights is None:
            return np.full(len(self), 1.0 / len(self))
        return self.weights

    @property
    def total_mass(self) -> float:
        return 1.0 if self.weights is None else math.fsum(self.weights)

    def _reduce(self, g: np.ndarray) -> float:
        if self.weights is None:
            return float(np.mean(g))
        return float(np.dot(self.weights, g))


@dataclass
class TestFunction:
    """Test function G(t, u) with its time derivative.

    ``poly`` optionally lists time-independent polynomial coefficients
    (constant term first); exact convolution pairings then reduce to moments.
    """

    name: str
    evaluate: Callable
    time_derivative: Callable | None = None
    poly: tuple | None = field(default=None)

    __test__ = False  # not a pytest class

    def __call__(self, t, u):
        return self.evaluate(t, u)

    def dt(self, t, u):
        if self.time_derivative is None:
            return np.zeros(np.shape(u)[:1] if np.ndim(u) > 1 else np.shape(u))
        return self.time_derivative(t, u)

    @classmethod
    def polynomial(cls, coeffs: Sequence[float], name: str | None = None) -> "TestFunction":
        coeffs = tuple(float(c) for c in coeffs)

        def f(t, u):
            u = np.asarray(u, dtype=float)
            return np.polynomial.polynomial.polyval(u, coeffs) * np.ones_like(u)

        return cls(name or f"poly{coeffs}", f, None, coeffs)

    @classmethod
    def constant(cls, c: float = 1.0) -> "TestFunction":
        return cls.polynomial([c], name=f"const{c!r}")


IDENTITY = TestFunction.polynomial([0.0, 1.0], "u")
SQUARE = TestFunction.polynomial([0.0, 0.0, 1.0], "u^2")


def pair(mu: EmpiricalMeasure, G: TestFunction, t: float = 0.0) -> float:
    """<mu, G_t> = sum of weight * G(t, value)."""
    return mu._reduce(np.asarray(G(t, mu.values), dtype=float))


def _moments(mu: EmpiricalMeasure, k: int) -> list[float]:
    v = mu.values
    out = []
    p = np.ones_like(v)
    for _ in range(k + 1):
        out.append(mu._reduce(p))
        p = p * v
    return out


def pair_convolution(
    mu: EmpiricalMeasure,
    G: TestFunction,
    t: float = 0.0,
    method: str = "auto",
    rng: np.random.Generator | None = None,
) -> float:
    """<mu * mu, G_t(. / 2)> = sum_{x,y} w_x w_y G(t, (v_x + v_y) / 2).

    ``method`` is ``exact``, ``binned:B``, ``subsample:K`` or ``auto``
    (exact up to 2*10^4 atoms, binned:4096 above).
    """
    if mu.values.ndim != 1:
        raise InvalidMeasureError("convolution pairing needs scalar atoms")
    kind, _, arg = method.partition(":")
    if kind == "auto":
        kind, arg = ("exact", "") if len(mu) <= EXACT_CONV_CAP or G.poly is not None else ("binned", "4096")
    if kind == "exact":
        if G.poly is not None:
            deg = len(G.poly) - 1
            m = _moments(mu, deg)
            total = 0.0
            for k, c in enumerate(G.poly):
                if c == 0.0:
                    continue
                s = sum(comb(k, i, exact=True) * m[i] * m[k - i] for i in range(k + 1))
                total += c * s / 2.0**k
            return float(total)
        n = len(mu)
        if n > EXACT_CONV_CAP:
            raise SizeCapError(f"exact convolution pairing is capped at {EXACT_CONV_CAP} atoms, got {n}")
        v = mu.values
        w = mu.weight_array
        acc = 0.0
        step = max(1, 4_000_000 // max(n, 1))
        for start in range(0, n, step):
            block = np.asarray(G(t, (v[start:start + step, None] + v[None, :]) / 2.0), dtype=float)
            acc += float(w[start:start + step] @ (block @ w))
        return acc
    if kind == "binned":
        bins = int(arg) if arg else 4096
        v = mu.values
        w = mu.weight_array
        lo, hi = float(v.min()), float(v.max())
        mass = float(w.sum())
        if hi == lo:
            return float(G(t, np.array([lo]))[0]) * mass * mass
        width = (hi - lo) / bins
        idx = np.minimum(((v - lo) / width).astype(np.int64), bins - 1)
        masses = np.bincount(idx, weights=w, minlength=bins)
        conv = autoconvolve(masses)
        mids = (2 * lo + (np.arange(2 * bins - 1) + 1) * width) / 2.0
        return float(np.dot(conv, G(t, mids)))
    if kind == "subsample":
        k = int(arg) if arg else 10_000
        if rng is None:
            raise ValueError("subsample method needs an rng")
        w = mu.weight_array
        if np.any(w < 0):
            raise InvalidMeasureError("subsampling needs nonnegative weights")
        mass = float(w.sum())
        p = None if mu.weights is None else w / mass
        i = rng.choice(len(mu), size=k, p=p)
        j = rng.choice(len(mu), size=k, p=p)
        vals = G(t, (mu.values[i] + mu.values[j]) / 2.0)
        return float(np.mean(vals)) * mass * mass
    raise ValueError(f"unknown convolution method {method!r}")


# ---------------------------------------------------------------------------
# Wasserstein-1


@dataclass
class QuadraticCDF:
    """CDF that is quadratic on each cell [nodes[i], nodes[i+1]].

    F(nodes[i] + s) = F[i] + a[i] s + b[i] s^2; F is 0 left of the first
    node and 1 right of the last.
    """

    nodes: np.ndarray
    F: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @classmethod
    def from_density(cls, nodes, density) -> "QuadraticCDF":
        """Trapezoidal accumulation of a nodal density, normalized to mass 1."""
        u = np.asarray(nodes, dtype=float)
        f = np.asarray(density, dtype=float)
        h = np.diff(u)
        cell = h * (f[1:] + f[:-1]) / 2
        mass = cell.sum()
        if not mass > 0:
            raise InvalidMeasureError("reference density has no mass")
        F = np.concatenate([[0.0], np.cumsum(cell)]) / mass
        a = f[:-1] / mass
        b = (f[1:] - f[:-1]) / (2 * h) / mass
        return cls(u, F, a, b)

    @classmethod
    def from_callable(cls, cdf: Callable, lo: float, hi: float, points: int = 200_001, breakpoints=()) -> "QuadraticCDF":
        u = np.union1d(np.linspace(lo, hi, points), np.asarray(breakpoints, dtype=float))
        u = u[(u >= lo) & (u <= hi)]
        F = np.asarray(cdf(u), dtype=float)
        a = np.diff(F) / np.diff(u)
        return cls(u, F, a, np.zeros_like(a))

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        i = np.clip(np.searchsorted(self.nodes, u, side="right") - 1, 0, len(self.nodes) - 2)
        s = u - self.nodes[i]
        val = self.F[i] + self.a[i] * s + self.b[i] * s * s
        return np.where(u < self.nodes[0], 0.0, np.where(u >= self.nodes[-1], 1.0, val))

    def mean_variance(self) -> tuple[float, float]:
        """Exact moments of the piecewise-linear density a + 2 b s on each cell."""
        x, h = self.nodes[:-1], np.diff(self.nodes)
        a, b = self.a, self.b
        # integrals of s^k (a + 2 b s) over [0, h]
        i0 = a * h + b * h**2
        i1 = a * h**2 / 2 + 2 * b * h**3 / 3
        i2 = a * h**3 / 3 + b * h**4 / 2
        mean = float(np.sum(x * i0 + i1))
        second = float(np.sum(x * x * i0 + 2 * x * i1 + i2))
        return mean, second - mean * mean


def _check_probability(mu: EmpiricalMeasure):
    if not mu.normalized or np.any(mu.weight_array < 0):
        raise InvalidMeasureError("W1 needs a normalized nonnegative measure")
    if mu.values.ndim != 1:
        raise InvalidMeasureError("W1 is implemented for scalar atoms")


def _step_cdf(mu: EmpiricalMeasure):
    order = np.argsort(mu.values, kind="stable")
    v = mu.values[order]
    w = mu.weight_array[order]
    pts, start = np.unique(v, return_index=True)
    cum = np.cumsum(w)
    ends = np.concatenate([start[1:], [len(v)]]) - 1
    return pts, np.minimum(cum[ends], 1.0)


def _abs_quadratic_integral(g0, a, b, w):
    """Integral over [0, w] of |g0 + a s + b s^2| for a nondecreasing quadratic."""
    def prim(s):
        return g0 * s + a * s * s / 2 + b * s**3 / 3

    g1 = g0 + a * w + b * w * w
    total = prim(w)
    out = np.abs(total)
    cross = (g0 < 0) & (g1 > 0)
    if np.any(cross):
        g0c, ac, bc, wc = g0[cross], a[cross], b[cross], w[cross]
        disc = np.sqrt(np.maximum(ac * ac - 4 * bc * g0c, 0.0))
        denom = ac + disc
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(denom > 0, -2 * g0c / denom, wc / 2)
        r = np.clip(r, 0.0, wc)
        pr = g0c * r + ac * r * r / 2 + bc * r**3 / 3
        pw = g0c * wc + ac * wc * wc / 2 + bc * wc**3 / 3
        out[cross] = -pr + (pw - pr)
    return out


def wasserstein1(mu: EmpiricalMeasure, reference) -> float:
    """W1 = integral of |F_mu - F_ref| between a probability measure and a reference.

    ``reference`` is another EmpiricalMeasure, a QuadraticCDF (exact) or a
    plain callable CDF, which is sampled on a fine grid over the joint range.
    """
    _check_probability(mu)
    pts, cdf_mu = _step_cdf(mu)
    if isinstance(reference, EmpiricalMeasure):
        _check_probability(reference)
        qs, cdf_ref = _step_cdf(reference)
        grid = np.union1d(pts, qs)
        f1 = np.concatenate([[0.0], cdf_mu])[np.searchsorted(pts, grid, side="right")]
        f2 = np.concatenate([[0.0], cdf_ref])[np.searchsorted(qs, grid, side="right")]
        return float(np.sum(np.abs(f1 - f2)[:-1] * np.diff(grid)))
    if not isinstance(reference, QuadraticCDF):
        lo = float(pts[0])
        hi = float(pts[-1])
        reference = QuadraticCDF.from_callable(reference, lo - 1.0, hi + 1.0, breakpoints=pts)
    ref = reference
    grid = np.union1d(pts, ref.nodes)
    c = np.concatenate([[0.0], cdf_mu])[np.searchsorted(pts, grid[:-1], side="right")]
    left = grid[:-1]
    width = np.diff(grid)
    cell = np.clip(np.searchsorted(ref.nodes, left, side="right") - 1, 0, len(ref.nodes) - 2)
    inside = (left >= ref.nodes[0]) & (left < ref.nodes[-1])
    s0 = left - ref.nodes[cell]
    a_cell, b_cell = ref.a[cell], ref.b[cell]
    F_left = ref.F[cell] + a_cell * s0 + b_cell * s0 * s0
    slope = a_cell + 2 * b_cell * s0
    F_left = np.where(inside, F_left, np.where(left < ref.nodes[0], 0.0, 1.0))
    slope = np.where(inside, slope, 0.0)
    curv = np.where(inside, b_cell, 0.0)
    total = _abs_quadratic_integral(F_left - c, slope, curv, width)
    return float(np.sum(total))


def wasserstein1_cdfs(f: QuadraticCDF, g: QuadraticCDF, points: int | None = None) -> float:
    """W1 between two grid CDFs, by trapezoid on the merged node set."""
    grid = np.union1d(f.nodes, g.nodes)
    d = np.abs(f(grid) - g(grid))
    return float(np.sum((d[1:] + d[:-1]) / 2 * np.diff(grid)))


# ---------------------------------------------------------------------------
# Martingale residual


def martingale_residual(
    snapshots: Sequence[tuple[float, EmpiricalMeasure]],
    G: TestFunction,
    conv_method: str = "auto",
) -> list[tuple[float, float]]:
    """Estimate of the Dynkin martingale M_t^{G,N} along a snapshot schedule.

    R(t_k) = <pi_tk, G_tk> - <pi_0, G_0> - int_0^tk [2(<pi*pi, G(./2)> - <pi, G>) + <pi, dG>] ds,
    the time integral taken by the trapezoidal rule over the snapshot times.
    """
    if len(snapshots) < 3:
        raise ScheduleError("martingale residual needs at least 3 snapshots")
    ts = np.array([s[0] for s in snapshots], dtype=float)
    if np.any(np.diff(ts) <= 0):
        raise ScheduleError("snapshots must be strictly time ordered")
    level = np.empty(len(ts))
    drift = np.empty(len(ts))
    for k, (t, mu) in enumerate(snapshots):
        p = pair(mu, G, t)
        conv = pair_convolution(mu, G, t, conv_method)
        dg = mu._reduce(np.asarray(G.dt(t, mu.values), dtype=float))
        level[k] = p
        drift[k] = 2.0 * (conv - p) + dg
    integral = np.concatenate([[0.0], np.cumsum((drift[1:] + drift[:-1]) / 2 * np.diff(ts))])
    resid = level - level[0] - integral
    return list(zip(ts.tolist(), resid.tolist()))
