"""Grid solver for the density limit d/dt rho(u) = 4 (rho * rho)(2u) - 2 rho(u).

Nodes u_i = (i - n/2) h on [-L, L]. The self-convolution lives on the
doubled grid v_k = (k - n) h, so 2 u_i is exactly node 2i and the
accelerated argument needs no interpolation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._conv import autoconvolve
from .core import AvgProcError, InitialDistribution, ScheduleError


class InstabilityError(AvgProcError, ArithmeticError):
    pass


class UndefinedMomentError(AvgProcError, ArithmeticError):
    pass


# Butcher table of the classical fourth-order Runge-Kutta method.
RK4_STAGES = ((), (0.5,), (0.0, 0.5), (0.0, 0.0, 1.0))
RK4_WEIGHTS = (1 / 6, 1 / 3, 1 / 3, 1 / 6)


@dataclass
class DensityGrid:
    half_width: float
    n_cells: int
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        if self.n_cells <= 0 or self.n_cells % 2:
            raise ValueError("n_cells must be a positive even integer")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.n_cells + 1,):
            raise ValueError(f"expected {self.n_cells + 1} nodal values")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return (np.arange(self.n_cells + 1) - self.n_cells // 2) * self.spacing

    @classmethod
    def from_function(cls, f, half_width: float, n_cells: int) -> "DensityGrid":
        g = cls(half_width, n_cells, np.zeros(n_cells + 1))
        g.values = np.asarray(f(g.nodes), dtype=np.float64)
        return g

    @classmethod
    def from_distribution(cls, dist: InitialDistribution, half_width: float, n_cells: int, scale: float = 1.0) -> "DensityGrid":
        return cls.from_function(lambda u: scale * dist.density(u), half_width, n_cells)

    def copy(self, time: float | None = None) -> "DensityGrid":
        return DensityGrid(self.half_width, self.n_cells, self.values.copy(), self.time if time is None else time)

    def trapz(self, f: np.ndarray | None = None) -> float:
        y = self.values if f is None else self.values * f
        return float(self.spacing * (y.sum() - 0.5 * (y[0] + y[-1])))

    def cdf(self):
        from .analysis import QuadraticCDF

        return QuadraticCDF.from_density(self.nodes, np.maximum(self.values, 0.0))


def self_convolve(grid: DensityGrid, method: str = "fft") -> DensityGrid:
    """Trapezoidal (rho * rho) on [-2L, 2L] with the same spacing.

    For each output node the integration range in j is [max(0, k-n), min(n, k)],
    whose end terms get weight 1/2.
    """
    rho = grid.values
    n = grid.n_cells
    full = autoconvolve(rho, method)
    k = np.arange(2 * n + 1)
    corr = np.where(k <= n, rho[0] * rho[np.minimum(k, n)], rho[n] * rho[np.maximum(k - n, 0)])
    out = grid.spacing * (full - corr)
    return DensityGrid(2 * grid.half_width, 2 * n, out, grid.time)


def rhs(grid: DensityGrid, method: str = "fft") -> np.ndarray:
    conv = self_convolve(grid, method).values
    return 4.0 * conv[0::2] - 2.0 * grid.values


def default_dt(grid: DensityGrid) -> float:
    return min(1e-3, max_dt(grid))


def max_dt(grid: DensityGrid) -> float:
    """Lipschitz-type bound 0.1 / (2 + 4 h sum(rho) max(rho))."""
    mass = grid.spacing * float(np.sum(np.abs(grid.values)))
    return 0.1 / (2.0 + 4.0 * mass * float(np.max(np.abs(grid.values))))


def moments(grid: DensityGrid) -> tuple[float, float, float]:
    """Trapezoidal (mass, mean, variance)."""
    u = grid.nodes
    mass = grid.trapz()
    if mass == 0:
        raise UndefinedMomentError("zero mass")
    mean = grid.trapz(u) / mass
    var = grid.trapz(u * u) / mass - mean * mean
    return mass, mean, var


@dataclass
class PDETrajectory:
    snapshots: list  # DensityGrid copies at requested times
    dt: float
    n_steps: int = 0
    max_weak_residual: float = 0.0
    initial_mass: float = math.nan

    def at(self, t: float) -> DensityGrid:
        for g in self.snapshots:
            if g.time == t:
                return g
        raise KeyError(t)


def _rk_step(y: np.ndarray, h: float, f) -> tuple[np.ndarray, np.ndarray]:
    ks = []
    for row in RK4_STAGES:
        stage = y.copy()
        for a, k in zip(row, ks):
            if a:
                stage += h * a * k
        ks.append(f(stage))
    incr = sum(b * k for b, k in zip(RK4_WEIGHTS, ks))
    return y + h * incr, incr


def integrate(
    grid0: DensityGrid,
    dt: float | None = None,
    horizon: float = 1.0,
    snapshot_times: Sequence[float] | None = None,
    method: str = "fft",
    weak_test=lambda u: u * u,
) -> PDETrajectory:
    """Classical RK4 in time; the last substep before each snapshot is shortened to hit it.

    Along the way the weak-form residual |d/dt <rho, G> - <rhs, G>| is tracked
    for G = ``weak_test`` using the step's combined increment.
    """
    if horizon < 0:
        raise ScheduleError("horizon must be nonnegative")
    bound = max_dt(grid0)
    if dt is None:
        dt = default_dt(grid0)
    if not 0 < dt <= bound:
        raise ValueError(f"dt={dt} exceeds the stability bound {bound:.3g}")
    targets = sorted(set(float(s) for s in (snapshot_times or [horizon])) | {float(horizon)})
    for s in targets:
        if not 0 <= s <= horizon:
            raise ScheduleError(f"snapshot time {s} outside [0, {horizon}]")

    h = grid0.spacing
    G = weak_test(grid0.nodes)
    tw = np.full(grid0.n_cells + 1, h)
    tw[0] = tw[-1] = h / 2
    tw_G = tw * G

    def f(y):
        return rhs(DensityGrid(grid0.half_width, grid0.n_cells, y), method)

    y = grid0.values.copy()
    t = grid0.time
    traj = PDETrajectory([], dt, initial_mass=grid0.trapz())
    steps = 0
    worst = 0.0
    for target in targets:
        while target - t > 1e-12 * max(1.0, target):
            step = min(dt, target - t)
            if target - (t + step) < 1e-9 * dt:
                step = target - t
            with np.errstate(over="ignore", invalid="ignore"):
                y_new, incr = _rk_step(y, step, f)
            worst = max(worst, abs((tw_G @ y_new - tw_G @ y) / step - tw_G @ incr))
            y = y_new
            t = target if step == target - t else t + step
            steps += 1
            if not np.all(np.isfinite(y)):
                raise InstabilityError(f"non-finite density at t={t:.6g}; use a smaller dt or a finer grid")
            tol = 1e-10 * float(np.max(np.abs(y)))
            if float(y.min()) < -tol:
                raise InstabilityError(
                    f"density fell to {y.min():.3g} at t={t:.6g}; use a smaller dt or a finer grid"
                )
        traj.snapshots.append(DensityGrid(grid0.half_width, grid0.n_cells, y.copy(), t))
    traj.n_steps = steps
    traj.max_weak_residual = worst
    return traj


def scaled_cauchy_solution(a: float, c: float, t: float, u):
    """m(t) Cauchy(a)(u) with m(t) = 1 / (1 + c e^{2t}), which solves m' = 2m^2 - 2m."""
    m = 1.0 / (1.0 + c * math.exp(2.0 * t))
    u = np.asarray(u, dtype=float)
    return m * a / (math.pi * (a * a + u * u))


def cauchy_decay_candidate(a: float, t: float, u):
    """Cauchy(a)(u) / (2 e^{2t} - 1).

    Its mass 1/(2e^{2t}-1) does not obey m' = 2m^2 - 2m, so this is not a
    solution; it is kept so its residual against the solver can be reported.
    """
    u = np.asarray(u, dtype=float)
    return a / (math.pi * (a * a + u * u)) / (2.0 * math.exp(2.0 * t) - 1.0)
