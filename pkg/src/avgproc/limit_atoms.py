"""Measure-valued limit restricted to atoms on the dyadic grid k / 2^J.

Values are normalized to [0, 1] by an affine map (offset, scale). Sums of
two atoms land on k / 2^J in [0, 2]; halving an odd numerator falls between
two level-J atoms and its mass is split evenly between them, which keeps
mass, mean and symmetry intact.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._conv import autoconvolve
from .analysis import EmpiricalMeasure
from .core import InitialDistribution, InvalidDistributionError, ScheduleError
from .limit_pde import RK4_STAGES, RK4_WEIGHTS, InstabilityError

CLIP_TOL = 1e-12


@dataclass
class AtomicMeasure:
    level: int
    masses: np.ndarray
    offset: float = 0.0
    scale: float = 1.0
    snapped_mass_total: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=np.float64)
        if self.masses.shape != (2**self.level + 1,):
            raise ValueError(f"level {self.level} needs {2**self.level + 1} masses")

    @property
    def numerators(self) -> np.ndarray:
        return np.arange(2**self.level + 1)

    @property
    def values(self) -> np.ndarray:
        """Atom positions in original coordinates."""
        return self.offset + self.scale * self.numerators / 2.0**self.level

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def mean(self) -> float:
        return float(np.dot(self.masses, self.values) / self.masses.sum())

    def copy(self) -> "AtomicMeasure":
        return AtomicMeasure(self.level, self.masses.copy(), self.offset, self.scale, self.snapped_mass_total, self.time)

    def as_empirical(self) -> EmpiricalMeasure:
        keep = self.masses > 0
        return EmpiricalMeasure(self.values[keep], self.masses[keep] / self.masses[keep].sum())

    @classmethod
    def from_atoms(cls, values: Sequence[float], weights: Sequence[float], level: int) -> "AtomicMeasure":
        """Map [min, max] of the atoms onto [0, 1]; every atom must hit a level-J dyadic."""
        v = np.asarray(values, dtype=float)
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0):
            raise InvalidDistributionError("atom weights must be nonnegative")
        lo, hi = float(v.min()), float(v.max())
        scale = hi - lo if hi > lo else 1.0
        pos = (v - lo) / scale * 2**level
        k = np.rint(pos).astype(np.int64)
        if np.any(np.abs(pos - k) > 1e-9):
            raise InvalidDistributionError(f"atoms are not dyadic at level {level}")
        masses = np.bincount(k, weights=w, minlength=2**level + 1)
        return cls(level, masses, lo, scale)

    @classmethod
    def from_distribution(cls, dist: InitialDistribution, level: int) -> "AtomicMeasure":
        if dist.kind == "bernoulli":
            p = dist.params[0]
            return cls.from_atoms([0.0, 1.0], [1 - p, p], level)
        if dist.kind == "point_mass":
            return cls.from_atoms([dist.params[0]], [1.0], level)
        raise InvalidDistributionError(f"{dist.kind} is not atomic")


def atomic_self_convolve(mu: AtomicMeasure, method: str = "fft") -> np.ndarray:
    """Masses of mu * mu on k / 2^J, k = 0..2^{J+1} (normalized coordinates)."""
    return autoconvolve(mu.masses, method)


def _halve(conv: np.ndarray) -> tuple[np.ndarray, float]:
    half = conv[0::2].copy()
    odd = conv[1::2]
    half[:-1] += odd / 2
    half[1:] += odd / 2
    return half, float(odd.sum())


def atomic_rhs(mu: AtomicMeasure, method: str = "fft") -> tuple[np.ndarray, float]:
    """Return (2 (half#(mu*mu) - mu), rate at which mass is snapped)."""
    half, odd = _halve(atomic_self_convolve(mu, method))
    return 2.0 * (half - mu.masses), 2.0 * odd


@dataclass
class AtomTrajectory:
    snapshots: list
    dt: float
    n_steps: int = 0


def integrate_atoms(
    mu0: AtomicMeasure,
    dt: float = 1e-3,
    horizon: float = 1.0,
    snapshot_times: Sequence[float] | None = None,
    method: str = "fft",
) -> AtomTrajectory:
    """RK4 on the mass vector, with the snapped mass carried as an extra component."""
    if not 0 < dt <= 1e-3:
        raise ValueError("dt must lie in (0, 1e-3]")
    targets = sorted(set(float(s) for s in (snapshot_times or [horizon])) | {float(horizon)})
    for s in targets:
        if not 0 <= s <= horizon:
            raise ScheduleError(f"snapshot time {s} outside [0, {horizon}]")
    level, offset, scale = mu0.level, mu0.offset, mu0.scale
    size = 2**level + 1

    def f(y):
        r, snap = atomic_rhs(AtomicMeasure(level, y[:size], offset, scale), method)
        return np.concatenate([r, [snap]])

    y = np.concatenate([mu0.masses, [mu0.snapped_mass_total]])
    t = mu0.time
    traj = AtomTrajectory([], dt)
    for target in targets:
        while target - t > 1e-12 * max(1.0, target):
            step = min(dt, target - t)
            if target - (t + step) < 1e-9 * dt:
                step = target - t
            ks = []
            for row in RK4_STAGES:
                stage = y.copy()
                for a, k in zip(row, ks):
                    if a:
                        stage += step * a * k
                ks.append(f(stage))
            y = y + step * sum(b * k for b, k in zip(RK4_WEIGHTS, ks))
            t = target if step == target - t else t + step
            traj.n_steps += 1
            m = y[:size]
            if not np.all(np.isfinite(m)) or m.min() < -CLIP_TOL:
                raise InstabilityError(f"atom mass fell to {m.min():.3g} at t={t:.6g}")
            np.maximum(m, 0.0, out=m)
        traj.snapshots.append(AtomicMeasure(level, y[:size].copy(), offset, scale, float(y[size]), t))
    return traj
