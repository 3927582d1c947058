"""Command-line front end.

Subcommands: simulate, simulate-torus, solve-pde, solve-atoms, compare, verify.
Options may come from a JSON config file (``--config``); flags given on the
command line override it. Each run writes into its own directory under
``$AVGPROC_OUTPUT_ROOT`` (default ``./runs``) unless ``--out`` is given.

Exit codes: 0 success, 1 validation or I/O error, 2 numerical failure,
3 acceptance failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, export
from .analysis import EmpiricalMeasure, QuadraticCDF, wasserstein1, wasserstein1_cdfs
from .core import AvgProcError, InitialDistribution, RngStream
from .limit_atoms import AtomicMeasure, integrate_atoms
from .limit_pde import DensityGrid, InstabilityError, default_dt, integrate
from .sim_complete import run
from .sim_torus import FourierProfile, heat_pairing, init_from_profile, lattice_points, run_torus

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 1, 2, 3
OUTPUT_ROOT_ENV = "AVGPROC_OUTPUT_ROOT"


class ValidationError(AvgProcError, ValueError):
    pass


class AlignmentError(ValidationError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    n: int | None = None
    t: float = 1.0
    d: int = 1
    seed: int = 0
    replicas: int = 1
    dist: str | None = None
    profile: str = "sin1"
    L: float | None = None
    dt: float | None = None
    J: int = 12
    snapshots: list = field(default_factory=list)
    conv_method: str = "fft"
    workers: int = 1
    experiment_id: str | None = None
    out: str | None = None

    def validate(self):
        def positive(name, v, integer=False):
            if v is None or (integer and int(v) != v) or not v > 0 or (isinstance(v, float) and not math.isfinite(v)):
                raise ValidationError(f"--{name} must be a positive {'integer' if integer else 'number'}, got {v!r}")

        positive("t", self.t)
        positive("replicas", self.replicas, True)
        positive("workers", self.workers, True)
        if self.seed < 0:
            raise ValidationError("--seed must be nonnegative")
        for s in self.snapshots:
            if not 0 <= s <= self.t:
                raise ValidationError(f"snapshot time {s} outside [0, {self.t}]")
        if self.command in ("simulate", "simulate-torus", "solve-pde"):
            positive("n", self.n, True)
        if self.command == "simulate-torus":
            positive("d", self.d, True)
            if self.n < 2:
                raise ValidationError("--n must be >= 2 on the torus")
        if self.command == "solve-pde":
            positive("L", self.L)
            if self.n % 2:
                raise ValidationError("--n (grid cells) must be even")
            if self.dt is not None:
                positive("dt", self.dt)
        if self.command == "solve-atoms":
            positive("J", self.J, True)
            if self.J > 24:
                raise ValidationError("--J above 24 is not supported")
            if self.dt is not None and not 0 < self.dt <= 1e-3:
                raise ValidationError("--dt for solve-atoms must lie in (0, 1e-3]")
        if self.conv_method not in ("fft", "direct"):
            raise ValidationError("--conv-method must be fft or direct")
        if self.command in ("simulate", "solve-pde", "solve-atoms") and self.dist is None:
            raise ValidationError("--dist is required")
        return self

    def distribution(self) -> InitialDistribution:
        return InitialDistribution.parse(self.dist)


def _schedule(cfg: ExperimentConfig) -> list[float]:
    return sorted(set(cfg.snapshots) | {float(cfg.t)})


def run_directory(cfg: ExperimentConfig) -> Path:
    if cfg.out:
        return Path(cfg.out)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    return root / f"{cfg.experiment_id or cfg.command}-{stamp}"


def write_manifest(out: Path, cfg: ExperimentConfig, wall: float, extra: dict | None = None):
    payload = {
        "command": cfg.command,
        "seed": cfg.seed,
        "params": {k: v for k, v in asdict(cfg).items() if k not in ("command", "out")},
        "version": __version__,
        "wall_time_s": wall,
    }
    if extra:
        payload.update(extra)
    export.write_json(out / "manifest.json", payload)


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    dist = cfg.distribution()
    snaps = _schedule(cfg)
    runs = _map(lambda r: run(dist, cfg.n, cfg.t, snaps, RngStream(cfg.seed, r)), range(cfg.replicas), cfg.workers)
    export.write_csv(out / "snapshots.csv", export.SNAPSHOT_COLUMNS, export.snapshot_rows(runs))
    export.write_csv(out / "xj.csv", export.XJ_COLUMNS, export.xj_rows(runs, snaps))
    return EXIT_OK


def cmd_simulate_torus(cfg: ExperimentConfig, out: Path) -> int:
    prof = FourierProfile.parse(cfg.profile, cfg.d)
    init = init_from_profile(prof, cfg.n, cfg.d)
    snaps = _schedule(cfg)
    runs = _map(lambda r: run_torus(init, cfg.t, snaps, RngStream(cfg.seed, r)), range(cfg.replicas), cfg.workers)
    export.write_csv(out / "torus.csv", export.torus_columns(cfg.d), export.torus_rows(runs))
    # <pi_hat, G> = N^{-d} sum_x omega(x) G(x/N)
    g = prof(lattice_points(cfg.n, cfg.d))
    rows = []
    for t in sorted({0.0, *snaps}):
        confs = [r.initial if t == 0.0 else dict(r.snapshots)[t] for r in runs]
        vals = [float(np.dot(c.opinions.reshape(-1), g)) / cfg.n**cfg.d for c in confs]
        se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.nan
        rows.append((t, prof.name, float(np.mean(vals)), heat_pairing(prof, prof, t), se))
    export.write_csv(out / "pairing.csv", export.PAIRING_COLUMNS, rows)
    return EXIT_OK


def cmd_solve_pde(cfg: ExperimentConfig, out: Path) -> int:
    dist = cfg.distribution()
    L = cfg.L
    grid = DensityGrid.from_distribution(dist, L, cfg.n)
    dt = cfg.dt if cfg.dt is not None else default_dt(grid)
    traj = integrate(grid, dt, cfg.t, _schedule(cfg), cfg.conv_method)
    snaps = [grid] + traj.snapshots
    export.write_csv(out / "density.csv", export.DENSITY_COLUMNS, export.density_rows(snaps))
    export.write_csv(out / "moments.csv", export.MOMENT_COLUMNS, export.moment_rows(snaps))
    export.write_json(
        out / "grid.json",
        {"L": L, "n": cfg.n, "h": grid.spacing, "dt": dt, "dist": dist.label, "max_weak_residual": traj.max_weak_residual,
         "tail_mass": 1.0 - grid.trapz()},
    )
    return EXIT_OK


def cmd_solve_atoms(cfg: ExperimentConfig, out: Path) -> int:
    mu0 = AtomicMeasure.from_distribution(cfg.distribution(), cfg.J)
    traj = integrate_atoms(mu0, cfg.dt or 1e-3, cfg.t, _schedule(cfg), cfg.conv_method)
    export.write_csv(out / "atoms.csv", export.ATOM_COLUMNS, export.atom_rows([mu0] + traj.snapshots))
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare


def load_measures(path: Path) -> dict:
    """Per-time measures from a run directory: lists of EmpiricalMeasure or a QuadraticCDF."""
    path = Path(path)
    if (path / "snapshots.csv").exists():
        acc: dict = {}
        for row in export.read_csv(path / "snapshots.csv"):
            acc.setdefault(float(row["t"]), {}).setdefault(int(row["replica_id"]), []).append(float(row["opinion"]))
        return {t: [EmpiricalMeasure.from_opinions(v) for _, v in sorted(reps.items())] for t, reps in acc.items()}
    if (path / "density.csv").exists():
        acc = {}
        for row in export.read_csv(path / "density.csv"):
            acc.setdefault(float(row["t"]), ([], []))
            acc[float(row["t"])][0].append(float(row["u"]))
            acc[float(row["t"])][1].append(float(row["rho"]))
        return {t: QuadraticCDF.from_density(np.array(u), np.maximum(np.array(r), 0.0)) for t, (u, r) in acc.items()}
    if (path / "atoms.csv").exists():
        acc = {}
        for row in export.read_csv(path / "atoms.csv"):
            acc.setdefault(float(row["t"]), ([], []))
            acc[float(row["t"])][0].append(float(row["value"]))
            acc[float(row["t"])][1].append(float(row["mass"]))
        out = {}
        for t, (v, m) in acc.items():
            m = np.array(m)
            out[t] = [EmpiricalMeasure(np.array(v)[m > 0], m[m > 0] / m[m > 0].sum())]
        return out
    raise ValidationError(f"{path} holds no snapshots.csv, density.csv or atoms.csv")


def _w1(a, b) -> float:
    if isinstance(a, QuadraticCDF) and isinstance(b, QuadraticCDF):
        return wasserstein1_cdfs(a, b)
    if isinstance(a, QuadraticCDF):
        a, b = b, a
    return wasserstein1(a, b)


def _moments_of(m) -> tuple[float, float]:
    if isinstance(m, QuadraticCDF):
        return m.mean_variance()
    w = m.weight_array
    mean = float(np.dot(w, m.values))
    return mean, float(np.dot(w, (m.values - mean) ** 2))


def compare(sim: Path, ref: Path, w1_tol: float, moment_tol: float, experiment_id: str, times=None) -> list[tuple]:
    a, b = load_measures(sim), load_measures(ref)
    common = sorted(set(a) & set(b))
    if times:
        missing = [t for t in times if t not in a or t not in b]
        if missing:
            raise AlignmentError(f"times {missing} are not present in both runs")
        common = sorted(times)
    elif not common:
        raise AlignmentError(f"no common snapshot times: {sorted(a)} vs {sorted(b)}")
    rows = []
    for t in common:
        ma = a[t] if isinstance(a[t], list) else [a[t]]
        mb = b[t] if isinstance(b[t], list) else [b[t]]
        rb = mb[0]
        w = [_w1(m, rb) for m in ma]
        med = float(np.median(w))
        rows.append((experiment_id, t, "w1_median", med, w1_tol, med <= w1_tol))
        rows.append((experiment_id, t, "w1_max", max(w), w1_tol, max(w) <= w1_tol))
        ref_mean, ref_var = _moments_of(rb)
        for m in ma[:1]:
            mean, var = _moments_of(m)
            rows.append((experiment_id, t, "mean_abs_diff", abs(mean - ref_mean), moment_tol, abs(mean - ref_mean) <= moment_tol))
            rows.append((experiment_id, t, "variance_abs_diff", abs(var - ref_var), moment_tol, abs(var - ref_var) <= moment_tol))
        if isinstance(rb, EmpiricalMeasure) and not isinstance(a[t], QuadraticCDF):
            # mass at the lowest atom against the pooled simulated fraction, 3 binomial SEs
            lo = float(rb.values.min())
            p = float(rb.weight_array[rb.values == lo].sum())
            pooled = np.concatenate([m.values for m in ma])
            frac = float(np.mean(np.isclose(pooled, lo, rtol=0, atol=1e-12)))
            se = math.sqrt(max(p * (1 - p), 1e-300) / len(pooled))
            rows.append((experiment_id, t, "lowest_atom_mass_z", abs(frac - p) / se, 3.0, abs(frac - p) <= 3 * se))
    return rows


def cmd_compare(args, out: Path) -> int:
    times = [float(s) for s in args.times.split(",")] if args.times else None
    eid = args.experiment_id or "compare"
    rows = compare(Path(args.sim), Path(args.ref), args.w1_tol, args.moment_tol, eid, times)
    export.write_csv(out / "report.csv", export.REPORT_COLUMNS, rows)
    if not args.quiet:
        for r in rows:
            print(f"t={r[1]:<8g} {r[2]:<22} {r[3]:.6g} (tol {r[4]}) {'PASS' if r[5] else 'FAIL'}")
    return EXIT_OK if all(r[5] for r in rows) else EXIT_ACCEPTANCE


def cmd_verify(args, out: Path) -> int:
    from . import acceptance

    select = {int(s) for s in args.only.split(",")} if args.only else None
    log = None if args.quiet else print
    results = acceptance.run_all(select, log=log)
    if args.full and (select is None or 4 in select):
        results.append(_truncation_sweep(log))
    export.write_csv(out / "report.csv", export.REPORT_COLUMNS, acceptance.report_rows(results))
    if not args.quiet:
        print(f"{sum(r.passed for r in results)}/{len(results)} passed; report in {out}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_ACCEPTANCE


def _truncation_sweep(log):
    """Extra diagnostic for --full: the stationary Cauchy error against the domain half-width."""
    from .acceptance import CriterionResult, _cauchy_run

    res = CriterionResult(4, "Cauchy error vs half-width (diagnostic)")
    t0 = time.perf_counter()
    for L in (100.0, 200.0, 400.0):
        n = int(2**14 * L / 200.0)
        g, tr = _cauchy_run(n, L=L)
        inside = np.abs(g.nodes) <= 10
        err = float(np.max(np.abs(tr.at(1.0).values - g.values)[inside]))
        res.add(f"stationary_sup_error_L{L:g}", err, "report", True, 1.0, graded=False)
    res.runtime = time.perf_counter() - t0
    if log:
        log(res.line())
    return res


# ---------------------------------------------------------------------------
# argument parsing


def _floats(text: str) -> list[float]:
    return [float(s) for s in text.split(",") if s.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="avgproc", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        # defaults are None so a config file can fill what the command line leaves out
        sp.add_argument("--config", help="JSON file with option values; flags override it")
        sp.add_argument("--out", help="output directory (default: per-run directory under $%s)" % OUTPUT_ROOT_ENV)
        sp.add_argument("--id", dest="experiment_id", help="experiment id used in the run directory name")
        sp.add_argument("--quiet", action="store_true")
        sp.add_argument("--t", type=float)
        sp.add_argument("--snapshots", type=_floats, help="comma-separated snapshot times")

    s = sub.add_parser("simulate", help="averaging process on the complete graph")
    common(s)
    s.add_argument("--n", type=int)
    s.add_argument("--dist")
    s.add_argument("--seed", type=int)
    s.add_argument("--replicas", type=int)
    s.add_argument("--workers", type=int)

    s = sub.add_parser("simulate-torus", help="averaging process on the discrete torus")
    common(s)
    s.add_argument("--n", type=int)
    s.add_argument("--d", type=int)
    s.add_argument("--profile")
    s.add_argument("--seed", type=int)
    s.add_argument("--replicas", type=int)
    s.add_argument("--workers", type=int)

    s = sub.add_parser("solve-pde", help="grid solver for the density limit")
    common(s)
    s.add_argument("--dist")
    s.add_argument("--L", type=float)
    s.add_argument("--n", type=int, help="number of grid cells (even)")
    s.add_argument("--dt", type=float)
    s.add_argument("--conv-method", dest="conv_method", choices=("fft", "direct"))

    s = sub.add_parser("solve-atoms", help="dyadic-atom solver for atomic initial data")
    common(s)
    s.add_argument("--dist")
    s.add_argument("--J", type=int)
    s.add_argument("--dt", type=float)
    s.add_argument("--conv-method", dest="conv_method", choices=("fft", "direct"))

    s = sub.add_parser("compare", help="W1 and moment comparison of two run directories")
    s.add_argument("--sim", required=True)
    s.add_argument("--ref", required=True)
    s.add_argument("--times", help="comma-separated times that must be present in both")
    s.add_argument("--w1-tol", type=float, default=0.01)
    s.add_argument("--moment-tol", type=float, default=0.01)
    s.add_argument("--out")
    s.add_argument("--id", dest="experiment_id")
    s.add_argument("--quiet", action="store_true")

    s = sub.add_parser("verify", help="run the acceptance suite")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--quick", action="store_true", help="acceptance criteria only (default)")
    g.add_argument("--full", action="store_true", help="criteria plus extended diagnostics")
    s.add_argument("--only", help="comma-separated criterion numbers")
    s.add_argument("--out")
    s.add_argument("--quiet", action="store_true")
    return p


_DEFAULT_L = 2.0


def make_config(args: argparse.Namespace) -> ExperimentConfig:
    values = {}
    if getattr(args, "config", None):
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from exc
    for k, v in vars(args).items():
        if k in ("config", "quiet") or v is None:
            continue
        values[k] = v
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(values) - known
    if unknown:
        raise ValidationError(f"unknown option(s) {sorted(unknown)}")
    if values.get("command") == "solve-pde":
        values.setdefault("L", _DEFAULT_L)
    values["snapshots"] = [float(s) for s in values.get("snapshots") or []]
    return ExperimentConfig(**values).validate()


COMMANDS = {
    "simulate": cmd_simulate,
    "simulate-torus": cmd_simulate_torus,
    "solve-pde": cmd_solve_pde,
    "solve-atoms": cmd_solve_atoms,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    t0 = time.perf_counter()
    try:
        if args.command in COMMANDS:
            cfg = make_config(args)
            out = run_directory(cfg)
            out.mkdir(parents=True, exist_ok=True)
            code = COMMANDS[args.command](cfg, out)
            write_manifest(out, cfg, time.perf_counter() - t0)
        else:
            cfg = ExperimentConfig(args.command, experiment_id=getattr(args, "experiment_id", None), out=args.out)
            out = run_directory(cfg)
            out.mkdir(parents=True, exist_ok=True)
            code = cmd_compare(args, out) if args.command == "compare" else cmd_verify(args, out)
        if not args.quiet:
            print(f"wrote {out}")
        return code
    except (InstabilityError, ArithmeticError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (AvgProcError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
