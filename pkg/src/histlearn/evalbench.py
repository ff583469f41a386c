"""Seeded experiment sweeps and result emission.

A run is one ``(sweep value, seed)`` cell: generate data, draw training
and test workloads, label them, fit every requested method and record
the average relative error on the test set.  Cells are independent, so
they can run in a process pool; aggregation is always ordered by sweep
value and then seed, which keeps the output deterministic.
"""

from __future__ import annotations

import dataclasses
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    AttributeDomain,
    QueryFeedbackRecord,
    RangeQuery,
    box_sums,
    estimate_many_hist,
    estimate_many_sketch,
)
from .equihist import EquiLayout, fit_equihist
from .metrics import avg_rel_error
from .online import online_new
from .sphist import fit_sphist_full
from .workload import (
    BOUNDARY_MODES,
    QueryModelSpec,
    gen_gaussian_mixture,
    gen_query_arrays,
    preset_mixture,
)

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "ResultTable",
    "avg_rel_error",
    "emit_results",
    "load_config",
    "run_experiment",
]

METHODS = ("equihist", "sphist", "online-equihist")
SWEEP_VARS = ("train_size", "buckets", "range", "dims")
SPHIST_ESTIMATORS = ("auto", "histogram", "sketch")


class ExperimentError(RuntimeError):
    """A component failed inside one experiment cell."""


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "type1"
    dims: int = 1
    range: int = 1024
    records: int = 100_000
    query_model: str = "uniform"
    max_volume_fraction: float = 0.2
    methods: tuple[str, ...] = ("equihist", "sphist")
    buckets: int = 20
    train_size: int = 400
    test_size: int = 5000
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9)
    sweep_var: str = "train_size"
    sweep_values: tuple = (400,)
    omp_budget: int | None = None
    sphist_estimator: str = "auto"
    ridge: float = 0.0
    boundary: str = "clamp"

    def __post_init__(self):
        for name in ("methods", "seeds", "sweep_values"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if not self.methods or not self.seeds or not self.sweep_values:
            raise ValueError("methods, seeds and sweep values must be non-empty")
        if self.sweep_var not in SWEEP_VARS:
            raise ValueError(f"sweep_var must be one of {SWEEP_VARS}")
        if self.test_size < 1:
            raise ValueError("test_size must be >= 1")
        if self.sphist_estimator not in SPHIST_ESTIMATORS:
            raise ValueError(f"sphist_estimator must be one of {SPHIST_ESTIMATORS}")
        if self.boundary not in BOUNDARY_MODES:
            raise ValueError(f"boundary must be one of {BOUNDARY_MODES}")

    def at(self, value) -> "ExperimentConfig":
        """Copy with the sweep variable set to ``value``."""
        return dataclasses.replace(self, **{self.sweep_var: value})


_INT_KEYS = {"dims", "range", "records", "buckets", "train_size", "test_size"}
_FLOAT_KEYS = {"max_volume_fraction", "ridge"}


def parse_config_lines(lines: Sequence[str], source: str = "<config>") -> dict:
    """Parse ``key=value`` lines into ExperimentConfig keyword arguments."""
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    kwargs: dict = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if not sep or key not in fields:
            raise ValueError(f"{source}:{lineno}: unknown setting {line!r}")
        if key in _INT_KEYS:
            kwargs[key] = int(value)
        elif key in _FLOAT_KEYS:
            kwargs[key] = float(value)
        elif key == "omp_budget":
            kwargs[key] = None if value.lower() in ("", "none") else int(value)
        elif key in ("methods",):
            kwargs[key] = tuple(v.strip() for v in value.split(",") if v.strip())
        elif key in ("seeds", "sweep_values"):
            kwargs[key] = tuple(int(v) for v in value.split(",") if v.strip())
        else:
            kwargs[key] = value
    return kwargs


def load_config(path, **overrides) -> ExperimentConfig:
    kwargs = parse_config_lines(Path(path).read_text().splitlines(), str(path))
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**kwargs)


@dataclass(frozen=True)
class ResultRow:
    method: str
    sweep_var: str
    sweep_value: int
    mean_err_pct: float
    std_err_pct: float
    seeds: int
    wall_ms: float
    errors: tuple[float, ...] = field(default=(), compare=False)


@dataclass
class ResultTable:
    rows: list[ResultRow]

    def __len__(self) -> int:
        return len(self.rows)

    def row(self, method: str, sweep_value) -> ResultRow:
        for r in self.rows:
            if r.method == method and r.sweep_value == sweep_value:
                return r
        raise KeyError((method, sweep_value))

    def methods(self) -> list[str]:
        return list(dict.fromkeys(r.method for r in self.rows))


def _seed_streams(seed: int) -> list[int]:
    """Independent sub-seeds for means, data, training and test queries."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(4)]


def _queries(lows, highs) -> list[RangeQuery]:
    return [RangeQuery(tuple(zip(lo.tolist(), hi.tolist()))) for lo, hi in zip(lows, highs)]


def _fit_and_estimate(method, cfg: ExperimentConfig, domain, train, test_queries):
    k = cfg.buckets
    if method == "equihist":
        _, hist = fit_equihist(train, EquiLayout.from_total(domain, k), cfg.ridge)
        return estimate_many_hist(hist, test_queries, clamp=True)
    if method == "online-equihist":
        state = online_new(EquiLayout.from_total(domain, k), cfg.ridge, 1.0)
        for qfr in train:
            state.observe(qfr)
        return estimate_many_hist(state.histogram(), test_queries, clamp=True)
    fit = fit_sphist_full(train, domain, k, omp_budget=cfg.omp_budget)
    use_sketch = cfg.sphist_estimator == "sketch" or (
        cfg.sphist_estimator == "auto" and domain.dims > 1
    )
    if use_sketch:
        return estimate_many_sketch(fit.sketch, test_queries, clamp=True)
    return estimate_many_hist(fit.histogram, test_queries, clamp=True)


def run_cell(cfg: ExperimentConfig, seed: int) -> dict[str, tuple[float, float]]:
    """Errors and fit times for every method on one seed.

    ``cfg`` must already carry the sweep value.  Returns
    ``{method: (avg_rel_error_pct, wall_ms)}``.
    """
    mean_seed, data_seed, train_seed, test_seed = _seed_streams(seed)
    ranges = (cfg.range,) * cfg.dims
    spec = preset_mixture(cfg.preset, ranges, cfg.records, seed=mean_seed, boundary=cfg.boundary)
    freq = gen_gaussian_mixture(spec, seed=data_seed)
    domain: AttributeDomain = freq.domain
    table = freq.prefix_sums()

    def draw(count, s):
        model = QueryModelSpec(cfg.query_model, count, cfg.max_volume_fraction, s)
        lows, highs = gen_query_arrays(model, freq)
        return lows, highs, box_sums(table, lows, highs)

    lo, hi, s = draw(cfg.train_size, train_seed)
    train = [QueryFeedbackRecord(q, int(c)) for q, c in zip(_queries(lo, hi), s)]
    t_lo, t_hi, t_s = draw(cfg.test_size, test_seed)
    test_queries = _queries(t_lo, t_hi)

    out = {}
    for method in cfg.methods:
        start = time.perf_counter()
        try:
            est = _fit_and_estimate(method, cfg, domain, train, test_queries)
        except Exception as exc:
            value = getattr(cfg, cfg.sweep_var)
            raise ExperimentError(
                f"{method} failed at {cfg.sweep_var}={value}, seed={seed}: {exc}"
            ) from exc
        wall = (time.perf_counter() - start) * 1000.0
        out[method] = (avg_rel_error(t_s, est), wall)
    return out


def _run_cell_args(args):
    return run_cell(*args)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> ResultTable:
    """Run every ``(sweep value, seed)`` cell and aggregate per method.

    ``wall_ms`` is the mean time to fit and evaluate one method on one
    seed; it is the only column that varies between identical runs.
    """
    cells = [(cfg.at(v), s) for v in cfg.sweep_values for s in cfg.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell_args, cells))
    else:
        results = [run_cell(c, s) for c, s in cells]

    rows = []
    n_seeds = len(cfg.seeds)
    for i, value in enumerate(cfg.sweep_values):
        chunk = results[i * n_seeds : (i + 1) * n_seeds]
        for method in cfg.methods:
            errs = np.array([r[method][0] for r in chunk])
            walls = np.array([r[method][1] for r in chunk])
            std = float(errs.std(ddof=1)) if len(errs) > 1 else 0.0
            rows.append(
                ResultRow(method, cfg.sweep_var, value, float(errs.mean()), std,
                          len(errs), float(walls.mean()), tuple(errs.tolist()))
            )
    return ResultTable(rows)


CSV_HEADER = "method,sweep_var,sweep_value,mean_err_pct,std_err_pct,seeds,wall_ms"


def results_csv(table: ResultTable) -> str:
    lines = [CSV_HEADER]
    for r in table.rows:
        lines.append(
            f"{r.method},{r.sweep_var},{r.sweep_value},{r.mean_err_pct!r},"
            f"{r.std_err_pct!r},{r.seeds},{r.wall_ms:.3f}"
        )
    return "\n".join(lines) + "\n"


def plot_script(table: ResultTable, title: str | None = None) -> str:
    """Gnuplot script drawing one log-scale error curve per method."""
    sweep_var = table.rows[0].sweep_var
    lines = [
        "# gnuplot script: average relative error per method",
        "set terminal pngcairo size 640,480",
        "set output 'results.png'",
        f"set title \"{title or 'Avg. relative error vs ' + sweep_var}\"",
        f"set xlabel \"{sweep_var}\"",
        "set ylabel \"Avg. relative error (%)\"",
        "set logscale y",
        "set grid",
        "set key top right",
    ]
    plots = []
    for method in table.methods():
        block = "$" + method.replace("-", "_")
        lines.append(f"{block} << EOD")
        for r in table.rows:
            if r.method == method:
                lines.append(f"{r.sweep_value} {r.mean_err_pct!r} {r.std_err_pct!r}")
        lines.append("EOD")
        plots.append(f"{block} using 1:2 with linespoints title \"{method}\"")
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def emit_results(table: ResultTable, csv_path, plot_path) -> tuple[Path, Path]:
    """Write the results CSV and a matching gnuplot script."""
    if not table.rows:
        raise ValueError("cannot emit an empty result table")
    csv_path, plot_path = Path(csv_path), Path(plot_path)
    csv_path.write_text(results_csv(table))
    plot_path.write_text(plot_script(table).replace("results.png", csv_path.stem + ".png"))
    return csv_path, plot_path
