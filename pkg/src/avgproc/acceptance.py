"""The ten acceptance experiments.

Each ``criterion_k`` returns a :class:`CriterionResult` holding the individual
metrics with their tolerances; a criterion passes when every graded metric
passes. Metrics with ``graded=False`` are reported only.
"""
from __future__ import annotations

import hashlib
import math
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .analysis import IDENTITY, SQUARE, EmpiricalMeasure, martingale_residual, wasserstein1
from .core import InitialDistribution, RngStream
from .limit_atoms import AtomicMeasure, integrate_atoms
from .limit_pde import (
    DensityGrid,
    cauchy_decay_candidate,
    integrate,
    moments,
    scaled_cauchy_solution,
)
from .sim_complete import expected_xj, perturbed_replay, run, run_replicas, xj_counts
from .sim_torus import FourierProfile, heat_pairing, init_from_profile, run_torus, weighted_empirical


@dataclass
class Metric:
    name: str
    value: float
    tolerance: float | str
    passed: bool
    t: float | None = None
    graded: bool = True


@dataclass
class CriterionResult:
    number: int
    name: str
    metrics: list = field(default_factory=list)
    runtime: float = 0.0
    budget: float = math.inf

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.metrics if m.graded) and self.runtime <= self.budget

    def add(self, name, value, tolerance, passed, t=None, graded=True):
        self.metrics.append(Metric(name, float(value), tolerance, bool(passed), t, graded))

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        failed = [m.name for m in self.metrics if m.graded and not m.passed]
        if self.runtime > self.budget:
            failed.append(f"runtime>{self.budget:g}s")
        tail = f" failed: {', '.join(failed)}" if failed else ""
        return f"[{flag}] criterion {self.number}: {self.name} ({self.runtime:.1f}s){tail}"


def _timed(number, name, budget):
    def wrap(fn):
        def inner(*args, **kwargs):
            res = CriterionResult(number, name, budget=budget)
            t0 = time.perf_counter()
            fn(res, *args, **kwargs)
            res.runtime = time.perf_counter() - t0
            return res

        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner

    return wrap


@_timed(1, "simulator conservation", 10.0)
def criterion_1(res, seed: int = 1):
    """Sum of opinions and the opinion range along a Ber(1/2) run."""
    n, T = 10_000, 2.0
    snaps = [round(0.1 * k, 10) for k in range(1, 21)]
    r = run(InitialDistribution.bernoulli(0.5), n, T, snaps, RngStream(seed, 0))
    s0 = float(np.sum(r.initial.opinions))
    lo, hi = float(r.initial.opinions.min()), float(r.initial.opinions.max())
    drift = max(abs(float(np.sum(c.opinions)) - s0) / abs(s0) for _, c in r.snapshots)
    expand = max(max(lo - float(c.opinions.min()), float(c.opinions.max()) - hi) for _, c in r.snapshots)
    res.add("max_relative_sum_drift", drift, 1e-9, drift <= 1e-9)
    res.add("range_expansion", max(expand, 0.0), 0.0, expand <= 0.0)


@_timed(2, "X_j statistics", 120.0)
def criterion_2(res, seed: int = 2, replicas: int = 100):
    n, t = 10_000, 1.0
    runs = run_replicas(InitialDistribution.bernoulli(0.5), n, t, [t], seed, replicas)
    stats = [xj_counts(r, t).counts for r in runs]
    for j in range(4):
        c = np.array([s[j] if j < len(s) else 0 for s in stats], dtype=float)
        se = c.std(ddof=1) / math.sqrt(len(c))
        z = abs(c.mean() - expected_xj(n, t, j)) / se
        res.add(f"z_score_X{j}", z, 3.0, z <= 3.0, t)


@_timed(3, "perturbation bound", 60.0)
def criterion_3(res, seed: int = 3, trials: int = 1000):
    """sign(delta) (w_hat - w)(x) >= |delta| / 2^j in exact arithmetic."""
    n, T = 100, 1.0
    dist = InitialDistribution.uniform(0.0, 1.0)
    pick = RngStream(seed, 0).generator("aux")
    worst = math.inf
    violations = 0
    for i in range(trials):
        rng = RngStream(seed, i + 1)
        r = run(dist, n, T, None, rng)
        x = int(pick.integers(0, n))
        for delta in (0.1, -0.1):
            o, p, j = perturbed_replay(r, x, delta, T)
            d = Fraction(delta)
            gain = (p - o) if d > 0 else (o - p)
            slack = gain - abs(d) / 2**j
            violations += slack < 0
            worst = min(worst, float(slack))
    res.add("violations", violations, 0, violations == 0)
    res.add("min_slack", worst, ">= 0", worst >= 0)


def _cauchy_run(n_cells, c=0.0, L=200.0, dt=1e-3, T=1.0, a=1.0):
    g = DensityGrid.from_function(lambda u: scaled_cauchy_solution(a, c, 0.0, u), L, n_cells)
    traj = integrate(g, dt, T)
    return g, traj


@_timed(4, "PDE vs Cauchy oracle", 120.0)
def criterion_4(res, n_cells: int = 2**14):
    L, T, a, window = 200.0, 1.0, 1.0, 10.0
    g0, traj = _cauchy_run(n_cells)
    inside = np.abs(g0.nodes) <= window
    err = float(np.max(np.abs(traj.at(T).values - g0.values)[inside]))
    res.add("stationary_sup_error", err, 1e-3, err <= 1e-3, T)
    res.add("weak_residual_u2", traj.max_weak_residual, 1e-8, traj.max_weak_residual <= 1e-8)
    res.add("tail_mass_outside_grid", 1.0 - g0.trapz(), "report", True, 0.0, graded=False)

    g_fine, traj_fine = _cauchy_run(2 * n_cells)
    inside_f = np.abs(g_fine.nodes) <= window
    err_fine = float(np.max(np.abs(traj_fine.at(T).values - g_fine.values)[inside_f]))
    ratio = err / err_fine
    res.add("halving_h_error_ratio", ratio, ">= 3", ratio >= 3.0, T)

    # decaying member m(t) Cauchy(a), m = 1/(1 + e^{2t}); sensitive to the time stepper
    g1, traj1 = _cauchy_run(n_cells, c=1.0)
    exact = scaled_cauchy_solution(a, 1.0, T, g1.nodes)
    err1 = float(np.max(np.abs(traj1.at(T).values - exact)[inside]))
    res.add("decaying_c1_sup_error", err1, 1e-5, err1 <= 1e-5, T)

    cand = cauchy_decay_candidate(a, T, g0.nodes)
    resid = float(np.max(np.abs(traj.at(T).values - cand)[inside]))
    res.add("candidate_factor_residual", resid, "report", True, T, graded=False)


@_timed(5, "PDE conservation and variance decay", 60.0)
def criterion_5(res):
    g0 = DensityGrid.from_distribution(InitialDistribution.linear_2x(), 2.0, 4096)
    times = [0.5, 1.0, 2.0]
    traj = integrate(g0, 1e-3, 2.0, times)
    m0, mean0, _ = moments(g0)
    for t in times:
        m, mean, var = moments(traj.at(t))
        res.add("mass_drift", abs(m - m0), 1e-6, abs(m - m0) <= 1e-6, t)
        res.add("mean_drift", abs(mean - mean0), 1e-6, abs(mean - mean0) <= 1e-6, t)
        rel = abs(var / (math.exp(-t) / 18.0) - 1.0)
        res.add("variance_relative_error", rel, 1e-4, rel <= 1e-4, t)


def linear2x_reference(t: float = 1.0):
    g0 = DensityGrid.from_distribution(InitialDistribution.linear_2x(), 2.0, 4096)
    return integrate(g0, 1e-3, t).at(t)


@_timed(6, "hydrodynamic limit W1", 300.0)
def criterion_6(res, seed: int = 6, seeds: int = 5):
    t = 1.0
    ref = linear2x_reference(t).cdf()
    dist = InitialDistribution.linear_2x()
    medians = []
    for n in (1_000, 10_000, 100_000):
        w = []
        for s in range(seeds):
            r = run(dist, n, t, [t], RngStream(seed + s, 0))
            w.append(wasserstein1(EmpiricalMeasure.from_opinions(r.config.opinions), ref))
        medians.append(float(np.median(w)))
        res.add(f"median_w1_N{n}", medians[-1], "report", True, t, graded=False)
        if n == 100_000:
            res.add("w1_single_run_N100000", w[0], 0.01, w[0] <= 0.01, t)
    mono = medians[0] > medians[1] > medians[2]
    res.add("median_w1_monotone", float(mono), "1", mono, t)


@_timed(7, "atomic limit", 180.0)
def criterion_7(res, seed: int = 7, level: int = 12):
    t = 1.0
    target = 1.0 / (1.0 + math.e**2)
    mu0 = AtomicMeasure.from_distribution(InitialDistribution.bernoulli(0.5), level)
    traj = integrate_atoms(mu0, 1e-3, t)
    mu = traj.snapshots[-1]
    err = abs(mu.masses[0] - target)
    res.add("solver_mass_at_0_error", err, 1e-6, err <= 1e-6, t)
    drift = abs(mu.total_mass - mu0.total_mass)
    res.add("solver_total_mass_drift", drift, 1e-9, drift <= 1e-9, t)
    res.add("snapped_mass_total", mu.snapped_mass_total, "report", True, t, graded=False)

    n = 100_000
    r = run(InitialDistribution.bernoulli(0.5), n, t, [t], RngStream(seed, 0))
    frac = float(np.mean(r.config.opinions == 0.0))
    se = math.sqrt(target * (1 - target) / n)
    z = abs(frac - target) / se
    res.add("simulated_zero_fraction_z", z, 3.0, z <= 3.0, t)


def _sup_residuals(n, seed, replicas, snaps):
    sq, lin = [], []
    for r in run_replicas(InitialDistribution.bernoulli(0.5), n, snaps[-1], snaps, seed, replicas):
        path = [(0.0, EmpiricalMeasure.from_opinions(r.initial.opinions))]
        path += [(t, EmpiricalMeasure.from_opinions(c.opinions)) for t, c in r.snapshots]
        sq.append(max(abs(v) for _, v in martingale_residual(path, SQUARE)))
        lin.append(max(abs(v) for _, v in martingale_residual(path, IDENTITY)))
    return sq, lin


@_timed(8, "martingale residual scaling", 300.0)
def criterion_8(res, seed: int = 8, replicas: int = 50):
    snaps = [round(0.01 * k, 10) for k in range(1, 101)]
    med = {}
    for n in (1_000, 10_000):
        sq, lin = _sup_residuals(n, seed, replicas, snaps)
        med[n] = float(np.median(sq))
        res.add(f"median_sup_residual_u2_N{n}", med[n], "report", True, graded=False)
        res.add(f"max_sup_residual_u_N{n}", max(lin), 1e-9, max(lin) <= 1e-9)
    ratio = med[1_000] / med[10_000]
    res.add("residual_ratio_1e3_over_1e4", ratio, "[2.2, 4.5]", 2.2 <= ratio <= 4.5)


def torus_pairings(n, seed, replicas, t=0.05, profile="sin1"):
    prof = FourierProfile.parse(profile)
    cfg = init_from_profile(prof, n, 1)
    out = []
    for k in range(replicas):
        tr = run_torus(cfg, t, [t], RngStream(seed, k))
        mu = weighted_empirical(tr.config)
        out.append(float(np.dot(mu.weights, prof(mu.values))))
    return np.array(out)


@_timed(9, "torus heat limit", 600.0)
def criterion_9(res, seed: int = 9, replicas: int = 50, batches: int = 5):
    t = 0.05
    ref = heat_pairing(FourierProfile.sin_mode(1), FourierProfile.sin_mode(1), t)
    vals = torus_pairings(256, seed, replicas, t)
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    z = abs(vals.mean() - ref) / se
    res.add("pairing_z_N256", z, 3.0, z <= 3.0, t)
    errs = {}
    for n in (64, 256):
        e = [abs(torus_pairings(n, seed + 1000 * (b + 1), replicas, t).mean() - ref) for b in range(batches)]
        errs[n] = float(np.median(e))
        res.add(f"median_batch_error_N{n}", errs[n], "report", True, t, graded=False)
    res.add("error_decreases_64_to_256", float(errs[256] < errs[64]), "1", errs[256] < errs[64], t)


def _digest(directory: Path) -> dict:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.glob("*.csv"))}


DETERMINISM_COMMANDS = (
    ["simulate", "--n", "1000", "--t", "1", "--dist", "ber:0.5", "--replicas", "3", "--seed", "10", "--snapshots", "0.5,1"],
    ["simulate-torus", "--d", "1", "--n", "64", "--profile", "sin1", "--t", "0.05", "--replicas", "3", "--seed", "10"],
    ["solve-pde", "--dist", "linear2x", "--L", "2", "--n", "512", "--dt", "1e-3", "--t", "0.5"],
    ["solve-atoms", "--dist", "ber:0.5", "--J", "8", "--t", "0.5"],
)


@_timed(10, "determinism", 300.0)
def criterion_10(res, commands=DETERMINISM_COMMANDS):
    from .cli import main

    for argv in commands:
        digests = []
        with tempfile.TemporaryDirectory() as tmp:
            for k in range(2):
                out = Path(tmp) / f"rep{k}"
                code = main([*argv, "--out", str(out), "--quiet"])
                if code != 0:
                    raise RuntimeError(f"{argv[0]} exited with {code}")
                digests.append(_digest(out))
        same = bool(digests[0]) and digests[0] == digests[1]
        res.add(f"byte_identical_{argv[0]}", float(same), "1", same)


CRITERIA = (
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
    criterion_10,
)


def run_all(select=None, log=print) -> list[CriterionResult]:
    out = []
    for k, fn in enumerate(CRITERIA, start=1):
        if select and k not in select:
            continue
        r = fn()
        if log:
            log(r.line())
        out.append(r)
    return out


def report_rows(results, experiment_id: str = "verify") -> list[tuple]:
    rows = []
    for r in results:
        for m in r.metrics:
            rows.append((f"{experiment_id}/c{r.number}", "" if m.t is None else m.t, m.name, m.value, m.tolerance, m.passed))
        rows.append((f"{experiment_id}/c{r.number}", "", "runtime_s", r.runtime, r.budget, r.runtime <= r.budget))
    return rows
