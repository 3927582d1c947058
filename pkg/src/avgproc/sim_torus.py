"""Averaging process on the discrete torus (Z/NZ)^d with edge rate N^2.

Its weighted empirical measure follows the heat equation d/dt rho = (1/2) Laplacian rho,
which is evaluated here spectrally, mode by mode.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .analysis import EmpiricalMeasure, TestFunction
from .core import EVENT_BLOCK, RngStream
from .sim_complete import _check_schedule


@dataclass
class FourierProfile:
    """Real trigonometric polynomial sum_k c_k exp(2 pi i k.u) on the unit torus.

    Conjugate symmetry c_{-k} = conj(c_k) is enforced on construction.
    """

    coefficients: dict
    dim: int = 1
    name: str = "profile"

    def __post_init__(self):
        coeffs = {}
        for k, c in self.coefficients.items():
            k = tuple(int(v) for v in (k if isinstance(k, tuple) else (k,)))
            if len(k) != self.dim:
                raise ValueError(f"frequency {k} does not have dimension {self.dim}")
            coeffs[k] = complex(c)
        for k, c in coeffs.items():
            neg = tuple(-v for v in k)
            if abs(coeffs.get(neg, 0j) - c.conjugate()) > 1e-12 * max(1.0, abs(c)):
                raise ValueError("coefficients are not conjugate symmetric")
        self.coefficients = coeffs

    @property
    def k_max(self) -> int:
        return max((max(abs(v) for v in k) for k in self.coefficients), default=0)

    @classmethod
    def constant(cls, c: float, dim: int = 1) -> "FourierProfile":
        return cls({(0,) * dim: c}, dim, f"const{c!r}")

    @classmethod
    def sin_mode(cls, k: int = 1, dim: int = 1, axis: int = 0, amp: float = 1.0) -> "FourierProfile":
        kv = [0] * dim
        kv[axis] = k
        return cls({tuple(kv): -0.5j * amp, tuple(-v for v in kv): 0.5j * amp}, dim, f"sin{k}")

    @classmethod
    def cos_mode(cls, k: int = 1, dim: int = 1, axis: int = 0, amp: float = 1.0) -> "FourierProfile":
        kv = [0] * dim
        kv[axis] = k
        if k == 0:
            return cls.constant(amp, dim)
        return cls({tuple(kv): 0.5 * amp, tuple(-v for v in kv): 0.5 * amp}, dim, f"cos{k}")

    @classmethod
    def parse(cls, text: str, dim: int = 1) -> "FourierProfile":
        """``sin1``, ``cos2``, ``const:0.5``, ``0.3*sin1+cos1``; modes act along axis 0."""
        total = {}
        for term in text.split("+"):
            term = term.strip()
            amp = 1.0
            if "*" in term:
                a, term = term.split("*", 1)
                amp = float(a)
            m = re.fullmatch(r"(sin|cos)(\d+)", term)
            if m:
                maker = cls.sin_mode if m.group(1) == "sin" else cls.cos_mode
                part = maker(int(m.group(2)), dim, 0, amp)
            elif term.startswith("const"):
                part = cls.constant(amp * float(term.partition(":")[2] or 1.0), dim)
            else:
                raise ValueError(f"cannot parse profile term {term!r}")
            for k, c in part.coefficients.items():
                total[k] = total.get(k, 0j) + c
        return cls(total, dim, text)

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.dim == 1 and (u.ndim == 0 or u.shape[-1] != 1):
            u = u[..., None]
        out = np.zeros(u.shape[:-1])
        for k, c in self.coefficients.items():
            phase = 2 * np.pi * (u @ np.array(k, dtype=float))
            out += c.real * np.cos(phase) - c.imag * np.sin(phase)
        return out

    def as_test_function(self) -> TestFunction:
        return TestFunction(self.name, lambda t, u: self(u))


@dataclass
class TorusConfig:
    dim: int
    side: int
    opinions: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.opinions = np.array(self.opinions, dtype=np.float64, copy=True)
        if self.opinions.shape != (self.side,) * self.dim:
            raise ValueError(f"opinion array must have shape {(self.side,) * self.dim}")

    def copy(self, time: float | None = None) -> "TorusConfig":
        return TorusConfig(self.dim, self.side, self.opinions, self.time if time is None else time)


@dataclass
class TorusRun:
    initial: TorusConfig
    config: TorusConfig
    snapshots: list = field(default_factory=list)  # (t, TorusConfig)
    n_events: int = 0


def lattice_points(n: int, d: int) -> np.ndarray:
    """Positions x/N of all vertices, C order, shape (N^d, d)."""
    axes = np.meshgrid(*([np.arange(n) / n] * d), indexing="ij")
    return np.stack([a.reshape(-1) for a in axes], axis=-1)


def init_from_profile(profile: FourierProfile, n: int, d: int) -> TorusConfig:
    if n < 2:
        raise ValueError("torus side must be >= 2")
    if profile.dim != d:
        raise ValueError("profile dimension does not match d")
    vals = profile(lattice_points(n, d)).reshape((n,) * d)
    return TorusConfig(d, n, vals, 0.0)


def torus_edges(n: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Flat endpoints of the nearest-neighbour edges, each listed once."""
    idx = np.arange(n**d).reshape((n,) * d)
    xs, ys = [], []
    for axis in range(d):
        nb = np.roll(idx, -1, axis=axis)
        a, b = idx, nb
        if n == 2:
            # x and x + e_i share one edge; keep the copy with x_i = 0
            sl = [slice(None)] * d
            sl[axis] = slice(0, 1)
            a, b = idx[tuple(sl)], nb[tuple(sl)]
        xs.append(a.reshape(-1))
        ys.append(b.reshape(-1))
    return np.concatenate(xs), np.concatenate(ys)


@njit(cache=True, nogil=True)
def _apply_edges(omega, ex, ey, picks, start, stop):
    for k in range(start, stop):
        e = picks[k]
        x = ex[e]
        y = ey[e]
        m = (omega[x] + omega[y]) / 2.0
        omega[x] = m
        omega[y] = m


def run_torus(config: TorusConfig, horizon: float, snapshot_times: Sequence[float] | None, rng: RngStream) -> TorusRun:
    """Every edge rings at rate N^2; one clock of rate |E| N^2 picks a uniform edge."""
    snaps = _check_schedule(snapshot_times, horizon)
    n, d = config.side, config.dim
    ex, ey = torus_edges(n, d)
    n_edges = len(ex)
    scale = 1.0 / (n_edges * float(n) ** 2)
    omega = config.opinions.reshape(-1).copy()
    gen = rng.generator("events")
    out = TorusRun(config.copy(), config)
    idx = 0
    t = 0.0
    n_events = 0
    while True:
        waits = gen.standard_exponential(EVENT_BLOCK) * scale
        picks = gen.integers(0, n_edges, EVENT_BLOCK, dtype=np.int64)
        times = t + np.cumsum(waits)
        end = int(np.searchsorted(times, horizon, side="right"))
        pos = 0
        while idx < len(snaps):
            k = int(np.searchsorted(times, snaps[idx], side="right"))
            if k >= len(times):
                break
            _apply_edges(omega, ex, ey, picks, pos, k)
            pos = k
            out.snapshots.append((snaps[idx], TorusConfig(d, n, omega.reshape((n,) * d), snaps[idx])))
            idx += 1
        _apply_edges(omega, ex, ey, picks, pos, end)
        n_events += end
        if end < len(times):
            break
        t = times[-1]
    out.config = TorusConfig(d, n, omega.reshape((n,) * d), float(horizon))
    out.n_events = n_events
    return out


def weighted_empirical(config: TorusConfig) -> EmpiricalMeasure:
    """Signed measure with weight omega(x)/N^d at position x/N."""
    pts = lattice_points(config.side, config.dim)
    if config.dim == 1:
        pts = pts[:, 0]
    w = config.opinions.reshape(-1) / float(config.side) ** config.dim
    return EmpiricalMeasure(pts, w, normalized=False)


def heat_pairing(profile: FourierProfile, G: FourierProfile, t: float) -> float:
    """<rho_t, G> for rho solving d/dt rho = (1/2) Laplacian rho on the unit torus.

    Mode k decays by exp(-2 pi^2 |k|^2 t); Parseval gives sum_k c_k conj(g_k).
    """
    total = 0j
    for k, c in profile.coefficients.items():
        g = G.coefficients.get(k)
        if g is None:
            continue
        k2 = float(sum(v * v for v in k))
        total += c * g.conjugate() * math.exp(-2 * math.pi**2 * k2 * t)
    return float(total.real)
