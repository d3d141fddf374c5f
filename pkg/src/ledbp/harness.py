"""Monte Carlo studies: convergence CDF of rho_max and BP inner-iteration counts.

Each configuration is a pure function of the study seed and its index, so
studies can run in parallel and still write byte-identical CSV files.
"""

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .barrier import BarrierConfig, initial_point, augment, solve
from .errors import ConfigError, EmptySample, LedbpError, VarianceNonconvergence
from .gbp import GbpBackend, GbpConfig
from .lsforms import (
    FEASIBLE_ELIMINATION,
    FEASIBLE_GENERIC,
    GRAPH_METHODS,
    INFEASIBLE_GENERIC,
    build,
)
from .oracle import DenseBackend
from .scene import LambertianModel, RoomGeometry, SceneConfig
from .spectral import ls_spectral_radius

CONVERGENCE = "convergence"
OVERHEAD = "overhead"

BITS_PER_MESSAGE = 64
RATE_BITS_PER_SECOND = 250_000


def convergence_template():
    """15 m office, 10 x 10 LEDs, 15 UDs; narrow beams keep neighborhoods local."""
    room = RoomGeometry(15.0, 15.0, 3.0, 0.75)
    lam = LambertianModel.from_nadir_gain(1000.0, room.vertical_separation, 30.0, 0.1)
    return SceneConfig(room=room, grid_rows=10, grid_cols=10, ud_count=15, lambertian=lam)


def overhead_template(side=30.0):
    """Square office with the default 60 degree beam and a 2 m LED pitch at n = 225."""
    room = RoomGeometry(side, side, 3.0, 0.75)
    lam = LambertianModel.from_nadir_gain(1000.0, room.vertical_separation, 60.0, 0.01)
    return SceneConfig(room=room, grid_rows=15, grid_cols=15, ud_count=20, lambertian=lam)


@dataclass
class StudyConfig:
    kind: str = CONVERGENCE
    scene: SceneConfig = field(default_factory=convergence_template)
    sizes: list = field(default_factory=lambda: [(100, 15)])
    count: int = 200
    seed: int = 0
    methods: tuple = GRAPH_METHODS
    gbp: GbpConfig = field(default_factory=GbpConfig)
    barrier: BarrierConfig = field(default_factory=BarrierConfig)
    spectral_method: str = "arnoldi"
    out: str | None = None

    def __post_init__(self):
        if self.kind not in (CONVERGENCE, OVERHEAD):
            raise ConfigError(f"study kind must be convergence or overhead, not {self.kind!r}")
        if self.count < 1:
            raise ConfigError("count must be at least 1")
        self.sizes = [tuple(int(v) for v in pair) for pair in self.sizes]
        if not self.sizes:
            raise ConfigError("at least one (n, m) pair is needed")
        for n, m in self.sizes:
            side = math.isqrt(n)
            if n < 1 or side * side != n:
                raise ConfigError(f"n = {n} is not a perfect square")
            if m < 1:
                raise ConfigError(f"m = {m} must be positive")
        self.methods = tuple(self.methods)
        for method in self.methods:
            if method not in GRAPH_METHODS:
                raise ConfigError(f"unknown method {method!r}")
        if self.kind == OVERHEAD and self.methods != (FEASIBLE_ELIMINATION,):
            raise ConfigError("the overhead study runs feasible elimination only")

    @classmethod
    def convergence(cls, **kwargs):
        return cls(**kwargs)

    @classmethod
    def overhead(cls, paper_scale=False, **kwargs):
        if paper_scale:
            defaults = dict(
                scene=overhead_template(50.0),
                sizes=[(625, m) for m in range(50, 101, 10)]
                + [(n, 50) for n in (676, 729, 784, 841, 900)],
                count=200,
            )
        else:
            defaults = dict(scene=overhead_template(30.0),
                            sizes=[(225, 20), (225, 30), (225, 40)], count=50)
        defaults.update(kind=OVERHEAD, methods=(FEASIBLE_ELIMINATION,))
        defaults.update(kwargs)
        return cls(**defaults)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known - {"paper_scale"}
        if unknown:
            raise ConfigError(f"unknown study config keys: {sorted(unknown)}")
        kind = data.get("kind", CONVERGENCE)
        paper_scale = bool(data.pop("paper_scale", False))
        try:
            if "scene" in data:
                data["scene"] = SceneConfig.from_dict(data["scene"])
            if "gbp" in data:
                data["gbp"] = GbpConfig(**data["gbp"])
            if "barrier" in data:
                data["barrier"] = BarrierConfig.from_dict(data["barrier"])
            if kind == OVERHEAD:
                data.pop("kind", None)
                data.setdefault("methods", (FEASIBLE_ELIMINATION,))
                return cls.overhead(paper_scale=paper_scale, **data)
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read study config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self):
        data = asdict(self)
        data["sizes"] = [list(pair) for pair in self.sizes]
        data["methods"] = list(self.methods)
        return data


@dataclass
class StudyRecord:
    index: int
    seed: int
    n: int
    m: int
    method: str
    rho_max: float = math.nan
    rho_per_nu: list = field(default_factory=list)
    taus: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    wall_time: float = 0.0
    error: str | None = None


@dataclass
class StudyResult:
    config: StudyConfig
    records: list = field(default_factory=list)

    @property
    def failures(self):
        return [r for r in self.records if r.error is not None]

    def rho_samples(self, method):
        return [r.rho_max for r in self.records if r.method == method and r.error is None]

    def tau_samples(self, n, m):
        """Inner iterations of every converged BP run for one (n, m)."""
        out = []
        for r in self.records:
            if (r.n, r.m) == (n, m) and r.error is None:
                out += [t for t, ok in zip(r.taus, r.converged) if ok]
        return out


def config_seed(study_seed, index):
    """64-bit seed for configuration ``index``; independent of run order."""
    state = np.random.SeedSequence([int(study_seed), int(index)]).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


def _scene_for(template, n, m, seed):
    side = math.isqrt(n)
    return SceneConfig(**{**template.__dict__, "grid_rows": side, "grid_cols": side,
                          "ud_count": m, "seed": seed})


def broadcast_time(tau, bits_per_message=BITS_PER_MESSAGE, rate_bits_per_second=RATE_BITS_PER_SECOND):
    """Seconds to broadcast ``tau`` messages, one message slot per inner iteration."""
    if tau <= 0 or bits_per_message <= 0 or rate_bits_per_second <= 0:
        raise ValueError("broadcast_time needs positive inputs")
    return tau * bits_per_message / rate_bits_per_second


def empirical_cdf(samples):
    """Sorted ``(value, i / N)`` pairs of the right-continuous empirical CDF."""
    values = np.sort(np.asarray(list(samples), dtype=float))
    if values.size == 0:
        raise EmptySample("empirical CDF of an empty sample")
    N = values.size
    # ties share the fraction of their last occurrence
    fractions = np.searchsorted(values, values, side="right") / N
    return list(zip(values.tolist(), fractions.tolist()))


def convergence_probability(result, method):
    """Fraction of configurations with rho_max < 1 (failed configurations count as not converging)."""
    rhos = [r.rho_max for r in result.records if r.method == method]
    if not rhos:
        return 0.0
    return float(np.mean([r < 1 for r in rhos]))


def boxplot_stats(samples):
    """Linear-interpolation quartiles with whiskers at the last points within 1.5 IQR."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise EmptySample("boxplot of an empty sample")
    q1, median, q3 = np.percentile(x, [25, 50, 75])
    iqr = q3 - q1
    inside = x[(x >= q1 - 1.5 * iqr) & (x <= q3 + 1.5 * iqr)]
    outliers = x[(x < q1 - 1.5 * iqr) | (x > q3 + 1.5 * iqr)]
    return {
        "whisker_lo": float(inside.min()),
        "q1": float(q1),
        "median": float(median),
        "q3": float(q3),
        "whisker_hi": float(inside.max()),
        "outliers": outliers.tolist(),
    }


# -- per-configuration workers ------------------------------------------------

def _trajectory(problem, barrier, mode):
    kkts = []
    cfg = BarrierConfig(**{**barrier.__dict__, "start_mode": mode})
    solve(problem, cfg, DenseBackend(), on_kkt=lambda kkt, state: kkts.append(kkt))
    return kkts


def _rho(kkt, method, spectral_method):
    try:
        return ls_spectral_radius(build(kkt, method), method=spectral_method)
    except VarianceNonconvergence:
        # No variance fixed point: the mean recursion is not even defined.
        return math.inf


def _start_is_feasible(problem, barrier):
    aug = augment(problem)
    try:
        x0 = initial_point(aug, "feasible", barrier.delta)
    except LedbpError:
        return False
    return bool(np.all(x0[aug.n_leds:] >= barrier.delta))


def _rhos(kkts, method, spectral_method):
    """rho per outer iteration; stops at the first infinite value, which fixes rho_max."""
    out = []
    for kkt in kkts:
        out.append(_rho(kkt, method, spectral_method))
        if math.isinf(out[-1]):
            break
    return out


def _convergence_job(config, index, n, m):
    seed = config_seed(config.seed, index)
    records = {method: StudyRecord(index, seed, n, m, method) for method in config.methods}
    t0 = time.perf_counter()
    try:
        _, problem = _scene_for(config.scene, n, m, seed).build()
        feasible_kkts = None
        if FEASIBLE_ELIMINATION in config.methods or FEASIBLE_GENERIC in config.methods:
            feasible_kkts = _trajectory(problem, config.barrier, "feasible")
        generic_rhos = None
        for method in config.methods:
            if method == INFEASIBLE_GENERIC:
                if generic_rhos is not None and _start_is_feasible(problem, config.barrier):
                    # Same start point, same iterates: the LS matrices coincide.
                    rhos = generic_rhos
                else:
                    kkts = _trajectory(problem, config.barrier, "infeasible")
                    rhos = _rhos(kkts, method, config.spectral_method)
            else:
                rhos = _rhos(feasible_kkts, method, config.spectral_method)
                if method == FEASIBLE_GENERIC:
                    generic_rhos = rhos
            records[method].rho_per_nu = rhos
            records[method].rho_max = max(rhos)
    except LedbpError as exc:
        for record in records.values():
            if not record.rho_per_nu:
                record.error = f"{type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - t0
    for record in records.values():
        record.wall_time = elapsed
    return [records[method] for method in config.methods]


def _overhead_job(config, index, n, m):
    seed = config_seed(config.seed, index)
    record = StudyRecord(index, seed, n, m, FEASIBLE_ELIMINATION)
    t0 = time.perf_counter()
    try:
        _, problem = _scene_for(config.scene, n, m, seed).build()
        gbp = GbpConfig(**{**config.gbp.__dict__, "seed": seed})
        backend = GbpBackend(FEASIBLE_ELIMINATION, gbp, fallback=True)
        _, report = solve(problem, config.barrier, backend)
        record.taus = [int(r["inner_iterations"]) for r in report.records]
        record.converged = [bool(r["converged"]) for r in report.records]
    except LedbpError as exc:
        record.error = f"{type(exc).__name__}: {exc}"
    record.wall_time = time.perf_counter() - t0
    return [record]


def _jobs(config):
    index = 0
    for n, m in config.sizes:
        for _ in range(config.count):
            yield index, n, m
            index += 1


def _run(config, worker, threads):
    jobs = list(_jobs(config))
    if threads is None or threads <= 1:
        batches = [worker(config, *job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(worker, config, *job) for job in jobs]
            batches = [f.result() for f in futures]
    return StudyResult(config, [r for batch in batches for r in batch])


def run_convergence_study(config, threads=None):
    """rho_max of each method along oracle-driven barrier trajectories."""
    if config.kind != CONVERGENCE:
        raise ConfigError("run_convergence_study needs a convergence config")
    return _run(config, _convergence_job, threads)


def run_overhead_study(config, threads=None):
    """Inner BP iterations per Newton step in full BP-backed solves."""
    if config.kind != OVERHEAD:
        raise ConfigError("run_overhead_study needs an overhead config")
    return _run(config, _overhead_job, threads)


# -- outputs -------------------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def write_cdf_csv(result, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "rho_max", "F", "seed"])
        for method in result.config.methods:
            recs = sorted((r for r in result.records if r.method == method and r.error is None),
                          key=lambda r: (r.rho_max, r.index))
            if not recs:
                continue
            cdf = empirical_cdf([r.rho_max for r in recs])
            for rec, (value, frac) in zip(recs, cdf):
                w.writerow([method, _fmt(value), _fmt(frac), rec.seed])


def write_iterations_csv(result, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "m", "seed", "nu", "tau", "converged"])
        for r in result.records:
            for nu, (tau, ok) in enumerate(zip(r.taus, r.converged), start=1):
                w.writerow([r.n, r.m, r.seed, nu, tau, int(ok)])


def boxplot_rows(result):
    rows = []
    for n, m in result.config.sizes:
        taus = result.tau_samples(n, m)
        if taus:
            rows.append({"n": n, "m": m, **boxplot_stats(taus)})
    return rows


def write_boxplot_csv(result, path):
    cols = ["whisker_lo", "q1", "median", "q3", "whisker_hi"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "m"] + cols)
        for row in boxplot_rows(result):
            w.writerow([row["n"], row["m"]] + [_fmt(row[c]) for c in cols])


def summarize(result):
    """JSON-ready summary; excludes wall times so reruns compare byte for byte."""
    cfg = result.config
    summary = {
        "kind": cfg.kind,
        "seed": cfg.seed,
        "count": cfg.count,
        "sizes": [list(p) for p in cfg.sizes],
        "failures": [{"index": r.index, "seed": r.seed, "n": r.n, "m": r.m,
                      "method": r.method, "error": r.error} for r in result.failures],
    }
    if cfg.kind == CONVERGENCE:
        summary["convergence_probability"] = {
            method: convergence_probability(result, method) for method in cfg.methods
        }
        summary["median_rho_max"] = {}
        for method in cfg.methods:
            rhos = result.rho_samples(method)
            summary["median_rho_max"][method] = float(np.median(rhos)) if rhos else None
    else:
        per_size = []
        for n, m in cfg.sizes:
            taus = result.tau_samples(n, m)
            total = sum(len(r.taus) for r in result.records if (r.n, r.m) == (n, m))
            entry = {"n": n, "m": m, "newton_steps": total,
                     "bp_not_converged": total - len(taus)}
            if taus:
                stats = boxplot_stats(taus)
                median = stats["median"]
                entry.update(median_tau=median, outliers=len(stats["outliers"]),
                             broadcast_time_s=broadcast_time(median))
            per_size.append(entry)
        summary["per_size"] = per_size
        summary["bits_per_message"] = BITS_PER_MESSAGE
        summary["rate_bits_per_second"] = RATE_BITS_PER_SECOND
    return summary


def write_outputs(result, out_dir):
    """Write the CSV files for the study kind plus summary.json; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    if result.config.kind == CONVERGENCE:
        paths.append(os.path.join(out_dir, "cdf.csv"))
        write_cdf_csv(result, paths[-1])
    else:
        paths.append(os.path.join(out_dir, "iterations.csv"))
        write_iterations_csv(result, paths[-1])
        paths.append(os.path.join(out_dir, "boxplot.csv"))
        write_boxplot_csv(result, paths[-1])
    paths.append(os.path.join(out_dir, "summary.json"))
    with open(paths[-1], "w") as fh:
        json.dump(summarize(result), fh, indent=2, allow_nan=True)
        fh.write("\n")
    return paths
