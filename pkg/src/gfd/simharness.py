"""Deterministic Monte Carlo coverage experiments.

Replication r of a cell draws its sample from a counter-based stream keyed by
(base seed, r, retry), builds the fiducial density and records the quantiles needed for
every metric in one pass.  Work is split into blocks of consecutive replications; the
per-replication results are concatenated in replication order, so the output does not
depend on how many workers ran the blocks.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dge import DgeSpec, resolve_dge_id
from .exceptions import DomainError, ExperimentError, GfdError
from .fiducial import build_density
from .models import MODEL_IDS, get_model, sample_data

DEFAULT_SEED = 20240521
DEFAULT_ALPHAS = (0.025, 0.05, 0.5, 0.95, 0.975)
DEFAULT_LEVELS = (0.90, 0.95)
MAX_RETRIES = 100
FAILURE_BUDGET = 0.01

CSV_HEADER = ("model", "method", "theta0", "n", "metric", "alpha", "value", "mc_se", "reps", "seed", "failures")


def _tuple(v, cast):
    if isinstance(v, (str, bytes)):
        v = [s for s in str(v).split(",") if s.strip()]
    if np.ndim(v) == 0:
        v = [v]
    return tuple(cast(x) for x in v)


@dataclass(frozen=True)
class SimConfig:
    """A Monte Carlo experiment: every (theta0, n, method) cell is one simulation."""

    model: str
    theta0: tuple
    n: tuple
    methods: tuple = ("FS", "F1", "BJ")
    alphas: tuple = DEFAULT_ALPHAS
    levels: tuple = DEFAULT_LEVELS
    reps: int = 5000
    seed: int = DEFAULT_SEED
    q: float | None = None
    out: str | None = None

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("theta0", _tuple(self.theta0, float))
        set_("n", _tuple(self.n, int))
        set_("methods", _tuple(self.methods, lambda s: str(s).strip()))
        set_("alphas", _tuple(self.alphas, float))
        set_("levels", _tuple(self.levels, float))
        set_("reps", int(self.reps))
        set_("seed", int(self.seed))
        if self.q is not None:
            set_("q", float(self.q))
        self.validate()

    def validate(self):
        if self.model not in MODEL_IDS:
            raise DomainError(f"unknown model {self.model!r}")
        model = get_model(self.model, self.q)
        if self.reps < 1:
            raise DomainError("reps must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a non-negative 64-bit integer")
        if not self.theta0 or not self.n or not self.methods:
            raise DomainError("theta0, n and methods must be non-empty")
        model.domain.check(self.theta0)
        if any(n < 1 for n in self.n):
            raise DomainError("sample sizes must be positive")
        for a in self.alphas + self.levels:
            if not 0.0 < a < 1.0:
                raise DomainError(f"alpha/level {a} outside (0, 1)")
        for m in self.methods:
            DgeSpec(model, resolve_dge_id(m))

    def to_dict(self):
        d = asdict(self)
        for k in ("theta0", "n", "methods", "alphas", "levels"):
            d[k] = list(d[k])
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise DomainError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class CoverageRow:
    model: str
    method: str
    theta0: float
    n: int
    metric: str
    alpha: float
    value: float
    mc_se: float
    reps: int
    seed: int
    failures: int = 0

    def csv_fields(self):
        f = lambda v: f"{v:.17g}"
        return [
            self.model, self.method, f(self.theta0), str(self.n), self.metric,
            f(self.alpha), f(self.value), f(self.mc_se), str(self.reps), str(self.seed),
            str(self.failures),
        ]


@dataclass(frozen=True)
class CellResult:
    """Raw per-replication quantiles of one cell (rows follow replication order)."""

    model: str
    q: float | None
    method: str
    theta0: float
    n: int
    probs: tuple
    quantiles: np.ndarray = field(repr=False)
    failures: int
    seed: int

    def q_at(self, p):
        return self.quantiles[:, self.probs.index(p)]


def replication_stream(seed, r, retry=0):
    """Counter-based generator for replication r (and retry index)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(r), int(retry)))
    return np.random.Generator(np.random.Philox(ss))


def _block(task):
    model_id, q, method, theta0, n, probs, seed, r0, r1 = task
    model = get_model(model_id, q)
    dge = DgeSpec(model, resolve_dge_id(method))
    out = np.empty((r1 - r0, len(probs)))
    failures = 0
    probs = np.asarray(probs)
    for i, r in enumerate(range(r0, r1)):
        for retry in range(MAX_RETRIES):
            sample = sample_data(model, theta0, n, replication_stream(seed, r, retry))
            try:
                out[i] = build_density(model, dge, sample).quantiles(probs)
                break
            except GfdError:
                failures += 1
        else:
            raise ExperimentError(f"replication {r} failed {MAX_RETRIES} times in a row")
    return out, failures


def resolve_jobs(jobs):
    if jobs is None:
        jobs = os.environ.get("GFD_JOBS", 1)
    jobs = int(jobs)
    if jobs < 1:
        raise DomainError("jobs must be at least 1")
    return jobs


def run_cells(cells, reps, seed, jobs=1):
    """Simulate several cells; ``cells`` are (model, q, method, theta0, n, probs) tuples."""
    jobs = resolve_jobs(jobs)
    nblocks = max(1, min(reps, 4 * jobs)) if jobs > 1 else 1
    bounds = np.linspace(0, reps, nblocks + 1).astype(int)
    tasks = [
        (*cell, seed, int(a), int(b))
        for cell in cells
        for a, b in zip(bounds[:-1], bounds[1:])
        if b > a
    ]
    if jobs == 1:
        results = [_block(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_block, tasks))
    out = []
    per = len(tasks) // len(cells) if cells else 0
    for i, cell in enumerate(cells):
        chunk = results[i * per:(i + 1) * per]
        qs = np.concatenate([c[0] for c in chunk], axis=0)
        fails = sum(c[1] for c in chunk)
        model_id, q, method, theta0, n, probs = cell
        if fails > FAILURE_BUDGET * reps:
            raise ExperimentError(
                f"{fails} failed replications (> {FAILURE_BUDGET:.0%} of {reps}) for "
                f"{model_id} {method} theta0={theta0} n={n}"
            )
        out.append(CellResult(model_id, q, method, theta0, n, tuple(probs), qs, fails, seed))
    return out


def _probs(alphas, levels, median):
    ps = list(alphas)
    for L in levels:
        ps += [(1.0 - L) / 2.0, 1.0 - (1.0 - L) / 2.0]
    if median:
        ps.append(0.5)
    return tuple(sorted(set(ps)))


def _cells(config, probs):
    return [
        (config.model, config.q, m, t, n, probs)
        for t in config.theta0
        for n in config.n
        for m in config.methods
    ]


def _row(cell, metric, a, value, se, reps):
    return CoverageRow(cell.model, cell.method, cell.theta0, cell.n, metric, float(a), float(value), float(se), reps, cell.seed, cell.failures)


def _binom(ind, reps):
    p = float(np.mean(ind))
    return p, math.sqrt(p * (1.0 - p) / reps)


def _mean_se(x):
    m = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return m, se


def rows_from_cell(cell, alphas=(), levels=(), mad=False):
    reps = cell.quantiles.shape[0]
    t0 = cell.theta0
    rows = []
    for a in alphas:
        rows.append(_row(cell, "one-sided-coverage", a, *_binom(t0 <= cell.q_at(a), reps), reps))
    for L in levels:
        lo, hi = cell.q_at((1.0 - L) / 2.0), cell.q_at(1.0 - (1.0 - L) / 2.0)
        rows.append(_row(cell, "two-sided-coverage", L, *_binom((lo <= t0) & (t0 <= hi), reps), reps))
    for L in levels:
        lo, hi = cell.q_at((1.0 - L) / 2.0), cell.q_at(1.0 - (1.0 - L) / 2.0)
        rows.append(_row(cell, "length", L, *_mean_se(hi - lo), reps))
    if mad:
        rows.append(_row(cell, "mad", 0.5, *_mean_se(np.abs(cell.q_at(0.5) - t0)), reps))
    return rows


def run_simulation(config, jobs=1, alphas=None, levels=None, mad=True):
    """All metrics for every cell of ``config`` from a single pass over replications."""
    alphas = config.alphas if alphas is None else alphas
    levels = config.levels if levels is None else levels
    probs = _probs(alphas, levels, mad)
    cells = run_cells(_cells(config, probs), config.reps, config.seed, jobs)
    rows = []
    for c in cells:
        rows += rows_from_cell(c, alphas, levels, mad)
    return rows


def run_one_sided(config, jobs=1):
    return run_simulation(config, jobs, levels=(), mad=False)


def run_two_sided(config, jobs=1):
    return run_simulation(config, jobs, alphas=(), mad=False)


def run_mad(config, jobs=1):
    return run_simulation(config, jobs, alphas=(), levels=(), mad=True)


EXACT_MODELS = (
    ("gamma-shape", "invcdf:inv", 2.0),
    ("location-normal", "simple", 0.0),
    ("scale-exponential", "simple", 1.0),
    ("uniform-location", "simple", 1.0),
)
EXACT_N = (2, 3, 5, 10)


@dataclass(frozen=True)
class ExactnessReport:
    rows: tuple
    passed: bool
    failing: tuple
    cells: int


def exactness_suite(models=EXACT_MODELS, n_values=EXACT_N, alphas=DEFAULT_ALPHAS, reps=5000, seed=DEFAULT_SEED, jobs=1):
    """One-sided coverage for models with exact fiducial distributions.

    A cell passes when |coverage - alpha| <= 4 sqrt(alpha (1 - alpha) / reps).
    """
    probs = tuple(sorted(set(alphas)))
    cells = [(m, None, d, t, n, probs) for m, d, t in models for n in n_values]
    results = run_cells(cells, reps, seed, jobs)
    rows, failing = [], []
    for c in results:
        for row in rows_from_cell(c, alphas):
            rows.append(row)
            band = 4.0 * math.sqrt(row.alpha * (1.0 - row.alpha) / reps)
            if abs(row.value - row.alpha) > band:
                failing.append(row)
    return ExactnessReport(tuple(rows), not failing, tuple(failing), len(rows))


def rows_to_csv(rows, header_lines=()):
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.csv_fields())
    return buf.getvalue()


__all__ = [
    "SimConfig",
    "CoverageRow",
    "CellResult",
    "ExactnessReport",
    "replication_stream",
    "run_cells",
    "run_simulation",
    "run_one_sided",
    "run_two_sided",
    "run_mad",
    "exactness_suite",
    "rows_to_csv",
    "rows_from_cell",
    "DEFAULT_SEED",
]
