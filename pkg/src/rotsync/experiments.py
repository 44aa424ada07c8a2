"""Seeded, reproducible synthetic experiments.

Every (parameter cell, trial) draws its graph from a seed derived from the
master seed with :func:`cell_seed`, so a single row of any output file can be
replayed in isolation. All methods in a cell share the same graph.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.linalg

from .admm import SolverOptions
from .estimators import ESTIMATORS, gram_from_rotations
from .evaluate import mse, relative_error
from .measurements import ConnectivityWarning, canonicalize_to_identity, generate
from .so_group import c_bounds, c_of_d, critical_probability

__all__ = [
    "ExperimentConfig",
    "ExperimentRecord",
    "SemicircleReport",
    "cell_seed",
    "default_grid",
    "heatmap",
    "run_constants",
    "run_e1",
    "run_e2",
    "run_e3_e4",
    "run_experiment",
    "run_semicircle",
    "semicircle_cdf",
    "summarize",
    "write_records",
]

EXPERIMENTS = ("e1", "e2", "e3", "e4", "semicircle", "constants")
_EXPERIMENT_IDS = {name: k for k, name in enumerate(EXPERIMENTS)}


@dataclass
class ExperimentConfig:
    experiment: str = "e1"
    d: int = 2
    n: list = field(default_factory=lambda: [100])
    p_list: list = field(default_factory=lambda: [0.5])
    p1_list: list = field(default_factory=lambda: [1.0])
    kappa_list: list = field(default_factory=list)
    methods: list = field(default_factory=lambda: ["lud"])
    trials: int = 10
    seed: int = 0
    solver: SolverOptions = field(default_factory=SolverOptions)
    workers: int = 1
    mc_samples: int = 1_000_000
    d_list: list = field(default_factory=list)
    out: str | None = None

    def __post_init__(self):
        if isinstance(self.n, int):
            self.n = [self.n]
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.n or not self.p_list or not self.p1_list:
            raise ValueError("parameter lists must be non-empty")
        bad = set(self.methods) - set(ESTIMATORS)
        if bad or not self.methods:
            raise ValueError(f"unknown methods {sorted(bad)}")
        for p in self.p_list:
            if not 0.0 <= p <= 1.0:
                raise ValueError("p values must lie in [0, 1]")
        for p1 in self.p1_list:
            if not 0.0 < p1 <= 1.0:
                raise ValueError("p1 values must lie in (0, 1]")
        for k in self.kappa_list:
            if not k > 0:
                raise ValueError("kappa values must be positive")


@dataclass
class ExperimentRecord:
    experiment: str
    d: int
    n: int
    p: float
    p1: float
    kappa: float | None
    method: str
    rounding: str
    trial: int
    seed: int
    re: float
    mse: float
    iterations: int
    runtime_ms: float
    converged: bool = True

    FIELDS = ("experiment", "d", "n", "p", "p1", "kappa", "method", "rounding", "trial",
              "seed", "re", "mse", "iterations", "runtime_ms")

    def key(self):
        return (self.experiment, self.d, self.n, self.p1, self.p,
                -1.0 if self.kappa is None else self.kappa, self.method, self.trial)

    def row(self) -> list[str]:
        out = []
        for name in self.FIELDS:
            v = getattr(self, name)
            if v is None:
                out.append("")
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out


def default_grid(step: float = 0.05) -> list[float]:
    """``step, 2 step, ..., 1`` rounded to 1e-6; the default E3/E4 axis."""
    if not 0.0 < step <= 1.0:
        raise ValueError("grid step must lie in (0, 1]")
    k = int(math.floor(1.0 / step + 1e-9))
    return [round(step * i, 6) for i in range(1, k + 1)]


def _q(x) -> int:
    return int(round(float(x) * 1_000_000))


def cell_seed(master: int, experiment: str, d: int, n: int, p: float, p1: float,
              kappa: float | None, trial: int) -> int:
    """32-bit graph seed for one trial.

    ``SeedSequence([master, experiment_index, d, n, round(1e6 p),
    round(1e6 p1), round(1e6 kappa) or 0, trial])``, first generated word.
    """
    entropy = [int(master), _EXPERIMENT_IDS[experiment], int(d), int(n), _q(p), _q(p1),
               0 if kappa is None else _q(kappa), int(trial)]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def _run_cell(args):
    experiment, d, n, p, p1, kappa, methods, trial, master, solver = args
    seed = cell_seed(master, experiment, d, n, p, p1, kappa, trial)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConnectivityWarning)
        g = generate(n, d, p1=p1, p=p, kappa=kappa, rng=seed, seed=seed)
    G_true = g.true_gram()
    records = []
    for method in methods:
        t0 = time.perf_counter()
        est = ESTIMATORS[method]()
        if method != "eig":
            est.set_params(mu=solver.mu, gamma=solver.gamma, tol=solver.tol,
                           max_iter=solver.max_iter, mu_adapt=solver.mu_adapt,
                           theta_rule=solver.theta_rule)
        converged = True
        try:
            est.fit(g)
        except ValueError:
            # EIG on a disconnected graph
            records.append(ExperimentRecord(experiment, d, n, p, p1, kappa, method,
                                            "deterministic", trial, seed, math.nan, math.nan,
                                            0, 1000 * (time.perf_counter() - t0), False))
            continue
        runtime = 1000 * (time.perf_counter() - t0)
        converged = bool(est.converged_)
        gram = est.gram_ if method != "eig" else gram_from_rotations(est.rotations_)
        records.append(ExperimentRecord(
            experiment, d, n, p, p1, kappa, method, "deterministic", trial, seed,
            relative_error(gram, G_true), mse(est.rotations_, g.truth).mse,
            int(est.n_iter_), runtime, converged,
        ))
    return records


def _run_grid(config: ExperimentConfig, cells) -> list[ExperimentRecord]:
    jobs = [
        (config.experiment, config.d, n, p, p1, kappa, list(config.methods), t, config.seed,
         config.solver)
        for (n, p, p1, kappa) in cells
        for t in range(config.trials)
    ]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(_run_cell, jobs))
    else:
        parts = [_run_cell(j) for j in jobs]
    records = [r for part in parts for r in part]
    records.sort(key=ExperimentRecord.key)
    return records


def run_e1(config: ExperimentConfig) -> list[ExperimentRecord]:
    """Exact recovery on complete graphs with Haar outliers."""
    if config.kappa_list:
        raise ValueError("E1 uses exact good edges; kappa_list must be empty")
    if list(config.p1_list) != [1.0]:
        raise ValueError("E1 uses complete graphs (p1 = 1)")
    cells = [(n, p, 1.0, None) for n, p in product(config.n, config.p_list)]
    return _run_grid(config, cells)


def run_e2(config: ExperimentConfig) -> list[ExperimentRecord]:
    """Stability: good edges perturbed by von Mises-Fisher noise."""
    if not config.kappa_list:
        raise ValueError("E2 needs at least one kappa")
    cells = [(n, p, p1, k) for n, p, p1, k in
             product(config.n, config.p_list, config.p1_list, config.kappa_list)]
    return _run_grid(config, cells)


def run_e3_e4(config: ExperimentConfig) -> list[ExperimentRecord]:
    """Erdos-Renyi measurement graphs: a (p1, p) grid (E3) or (p1, p, kappa) grid (E4)."""
    kappas = list(config.kappa_list) if config.experiment == "e4" else [None]
    if config.experiment == "e4" and not kappas:
        raise ValueError("E4 needs at least one kappa")
    for n in config.n:
        low = [p1 for p1 in config.p1_list if p1 < 2 * math.log(n) / n]
        if low:
            warnings.warn(f"p1 values {low} are below 2 log(n)/n for n={n}", ConnectivityWarning,
                          stacklevel=2)
    cells = [(n, p, p1, k) for n, p, p1, k in
             product(config.n, config.p_list, config.p1_list, kappas)]
    return _run_grid(config, cells)


def summarize(records, stat=np.mean) -> list[dict]:
    """Aggregate RE and MSE over trials per (n, p, p1, kappa, method)."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.experiment, r.d, r.n, r.p, r.p1, r.kappa, r.method), []).append(r)
    out = []
    for (exp, d, n, p, p1, kappa, method), rs in sorted(
            groups.items(), key=lambda kv: tuple(-1 if v is None else v for v in kv[0])):
        out.append({
            "experiment": exp, "d": d, "n": n, "p": p, "p1": p1, "kappa": kappa, "method": method,
            "trials": len(rs),
            "re": float(stat([r.re for r in rs])),
            "mse": float(stat([r.mse for r in rs])),
            "iterations": float(np.mean([r.iterations for r in rs])),
        })
    return out


def heatmap(records, d: int, method: str = "lud") -> list[dict]:
    """Long-format (p1, p, mean log10 MSE) with the theory curve p_c(d, p1)."""
    consts = c_of_d(d) if d <= 3 else c_of_d(d, rng=0)
    rows = []
    for s in summarize([r for r in records if r.method == method],
                       stat=lambda v: np.mean(np.log10(np.maximum(v, 1e-300)))):
        rows.append({"p1": s["p1"], "p": s["p"], "kappa": s["kappa"],
                     "mean_log10_mse": s["mse"],
                     "p_c": critical_probability(d, s["p1"], consts)})
    return rows


def write_records(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ExperimentRecord.FIELDS)
        for r in records:
            w.writerow(r.row())


def write_rows(rows: list[dict], path) -> None:
    if not rows:
        open(path, "w").close()
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if v is None else (repr(v) if isinstance(v, float) else v))
                        for k, v in row.items()})


# -- semicircle diagnostic -----------------------------------------------------


@dataclass
class SemicircleReport:
    n: int
    d: int
    p: float
    seed: int
    sigma_theory: float
    edge_max: float
    ks_distance: float
    norm_pos_sq: float
    norm_neg_sq: float
    norm_theory_sq: float


def semicircle_cdf(x, radius: float):
    x = np.clip(np.asarray(x, dtype=float), -radius, radius)
    return 0.5 + (x * np.sqrt(radius**2 - x**2) / radius**2 + np.arcsin(x / radius)) / np.pi


def outlier_matrix(g, c: float) -> np.ndarray:
    """``D_ij = (I - R_ij) / ||I - R_ij|| - c I`` on bad edges, zero elsewhere.

    Blocks are taken in the frame where every true rotation is the identity.
    """
    from . import _blocks

    gc = canonicalize_to_identity(g)
    bad = ~gc.good_mask
    B = gc.blocks[bad]
    eye = np.eye(g.d)
    X = eye - B
    nrm = np.linalg.norm(X, axis=(1, 2))
    nrm = np.where(nrm > 0, nrm, 1.0)
    blocks = X / nrm[:, None, None] - c * eye
    return _blocks.assemble(g.n, g.d, gc.rows[bad], gc.cols[bad], blocks)


def run_semicircle(config: ExperimentConfig) -> list[SemicircleReport]:
    """Spectrum of the centred outlier matrix against the semicircle law."""
    d = config.d
    consts = c_of_d(d, rng=config.seed, mc_samples=config.mc_samples)
    c = consts.c_d
    reports = []
    for n, p in product(config.n, config.p_list):
        if n < 2:
            raise ValueError("n must be >= 2")
        seed = cell_seed(config.seed, "semicircle", d, n, p, 1.0, None, 0)
        g = generate(n, d, 1.0, p, rng=seed, seed=seed)
        D = outlier_matrix(g, c)
        sigma = math.sqrt(max((1 - p) * (1.0 / d - c * c), 0.0))
        theory = 0.5 * (1 - p) * n * (n - 1) * (1 - c * c * d)
        w = scipy.linalg.eigvalsh(D)
        if not np.any(w):
            reports.append(SemicircleReport(n, d, p, seed, sigma, 0.0, 0.0, 0.0, 0.0, theory))
            continue
        scaled = np.sort(w) / math.sqrt(n - 1)
        radius = 2 * sigma
        if radius > 0:
            emp_hi = np.arange(1, scaled.size + 1) / scaled.size
            emp_lo = np.arange(0, scaled.size) / scaled.size
            F = semicircle_cdf(scaled, radius)
            ks = float(max(np.max(emp_hi - F), np.max(F - emp_lo)))
        else:
            ks = 1.0
        reports.append(SemicircleReport(
            n, d, p, seed, sigma, float(np.max(np.abs(scaled))), ks,
            float(np.sum(w[w > 0] ** 2)), float(np.sum(w[w < 0] ** 2)), theory,
        ))
    return reports


# -- constants table -------------------------------------------------------------


def run_constants(config: ExperimentConfig) -> list[dict]:
    """c(d), c1(d), the c(d) bounds and critical probabilities per dimension."""
    dims = list(config.d_list) or [config.d]
    rows = []
    for d in dims:
        consts = c_of_d(d, rng=np.random.SeedSequence([config.seed, d]),
                        mc_samples=config.mc_samples)
        lo, hi = c_bounds(d)
        row = {"d": d, "c": consts.c_d, "c1": consts.c1_d, "method": consts.method,
               "mc_stderr": consts.mc_stderr, "lower_bound": lo, "upper_bound": hi,
               "p_c": critical_probability(d, 1.0, consts)}
        for p1 in config.p1_list:
            row[f"p_c(p1={p1:g})"] = critical_probability(d, p1, consts)
        rows.append(row)
    return rows


def run_experiment(config: ExperimentConfig):
    """Dispatch on ``config.experiment``."""
    exp = config.experiment
    if exp == "e1":
        return run_e1(config)
    if exp == "e2":
        return run_e2(config)
    if exp in ("e3", "e4"):
        return run_e3_e4(config)
    if exp == "semicircle":
        return run_semicircle(config)
    return run_constants(config)


def report_rows(reports: list[SemicircleReport]) -> list[dict]:
    return [dataclasses.asdict(r) for r in reports]
