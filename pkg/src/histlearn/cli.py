"""Command-line entry point.

Exit status is 0 on success, 1 on a usage error and 2 when an input file
or its contents are unusable.  Every subcommand except ``sweep`` accepts
``--config FILE`` holding ``key=value`` lines that replace flag defaults;
explicit flags still win.  ``sweep`` reads an experiment config instead.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import io
from .core import (
    AttributeDomain,
    CellLimitError,
    DomainError,
    estimate_many_hist,
    estimate_many_sketch,
    QueryFeedbackRecord,
)
from .equihist import EquiLayout, fit_equihist
from .evalbench import ExperimentError, emit_results, load_config, run_experiment
from .metrics import avg_rel_error
from .online import UpdateEvent, online_new, simulate_stream
from .sphist import fit_sphist
from .workload import (
    BOUNDARY_MODES,
    PRESETS,
    QUERY_MODELS,
    QueryModelSpec,
    RecordParseError,
    gen_gaussian_mixture,
    gen_queries,
    ingest_records_csv,
    label_queries,
    preset_mixture,
)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("ranges must be positive")
    return values


def _add_seed(p, required=False):
    p.add_argument("--seed", type=int, default=None if required else 0, required=required,
                   help="random seed" + ("" if required else " (default 0)"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="histlearn", description="Learn histograms from query feedback.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate or ingest a dataset")
    p.add_argument("--preset", choices=[x for x in PRESETS if x != "custom"], default="type1")
    p.add_argument("--r", type=_int_list, default=(1024,), help="range, or r1,r2,... per dimension")
    p.add_argument("--dims", type=int, default=None, help="repeat a single --r over this many dimensions")
    p.add_argument("--records", type=int, default=100_000)
    p.add_argument("--records-csv", default=None, help="count records from this CSV instead")
    p.add_argument("--zero-based", action="store_true", help="record values start at 0")
    p.add_argument("--boundary", choices=BOUNDARY_MODES, default="clamp",
                   help="clamp out-of-range samples to the border, or redraw them")
    _add_seed(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gen-queries", help="draw range queries over a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=QUERY_MODELS, default="uniform")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--max-volume-fraction", type=float, default=0.2)
    _add_seed(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("label", help="attach exact cardinalities to queries")
    p.add_argument("--data", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="fit a histogram from QFRs")
    p.add_argument("--method", choices=("equihist", "sphist", "online-equihist"), default="equihist")
    p.add_argument("--buckets", type=int, default=20)
    p.add_argument("--qfrs", required=True)
    p.add_argument("--ridge", type=float, default=0.0)
    p.add_argument("--decay", type=float, default=1.0, help="online-equihist recency decay")
    p.add_argument("--omp-budget", type=int, default=None, help="OMP atoms (default: --buckets)")
    p.add_argument("--out", required=True)
    p.add_argument("--sketch-out", default=None, help="sphist only: also write the wavelet sketch")

    p = sub.add_parser("estimate", help="estimate cardinalities of queries")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--hist")
    src.add_argument("--sketch")
    p.add_argument("--queries", required=True)
    p.add_argument("--out", default=None, help="QFR-format output (default: stdout)")

    p = sub.add_parser("evaluate", help="average relative error on labelled QFRs")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--hist")
    src.add_argument("--sketch")
    p.add_argument("--qfrs", required=True)

    p = sub.add_parser("online-sim", help="stream QFRs into an online histogram")
    p.add_argument("--data", required=True)
    p.add_argument("--buckets", type=int, default=20)
    p.add_argument("--model", choices=QUERY_MODELS, default="uniform")
    p.add_argument("--max-volume-fraction", type=float, default=0.2)
    p.add_argument("--stream", type=int, default=2000, help="number of streamed QFRs")
    p.add_argument("--test-size", type=int, default=5000)
    p.add_argument("--ridge", type=float, default=0.0)
    p.add_argument("--decay", type=float, default=1.0)
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--perturb-at", type=int, default=None, help="perturb the data after this step")
    p.add_argument("--perturb-fraction", type=float, default=0.3)
    _add_seed(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="run a seeded experiment sweep")
    p.add_argument("--config", required=True, help="experiment file of key=value lines")
    _add_seed(p, required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="results CSV")
    p.add_argument("--plot", default=None, help="gnuplot script (default: <out>.gp)")

    for name, sp in sub.choices.items():
        if name != "sweep":
            sp.add_argument("--config", default=None, help="file of key=value default overrides")
    return parser


def _apply_config(parser, argv):
    """Re-parse ``argv`` with defaults taken from ``--config``."""
    argv = list(sys.argv[1:] if argv is None else argv)
    subs = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if not a.startswith("-")), None)
    if command not in subs or command == "sweep":
        return parser.parse_args(argv)
    pre = _Parser(prog=f"histlearn {command}", add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        return parser.parse_args(argv)
    sp = subs[command]
    dests = {a.dest: a for a in sp._actions}
    path = Path(known.config)
    if not path.is_file():
        raise DataError(f"config file {path} not found")
    overrides = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in dests or key in ("config", "help"):
            raise UsageError(f"{path}:{lineno}: unknown setting {line.strip()!r}")
        action = dests[key]
        value = value.strip()
        if isinstance(action, argparse._StoreTrueAction):
            overrides[key] = value.lower() in ("1", "true", "yes")
        elif action.type is not None:
            try:
                overrides[key] = action.type(value)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"{path}:{lineno}: {exc}") from None
        else:
            overrides[key] = value
        if action.choices is not None and overrides[key] not in action.choices:
            raise UsageError(f"{path}:{lineno}: {key} must be one of {list(action.choices)}")
        # config satisfies required flags
        action.required = False
    sp.set_defaults(**overrides)
    return parser.parse_args(argv)


def _check_paths(args) -> None:
    for name in ("data", "queries", "qfrs", "hist", "sketch", "records_csv"):
        value = getattr(args, name, None)
        if value is not None and not Path(value).is_file():
            raise DataError(f"--{name.replace('_', '-')}: {value} not found")
    for name in ("out", "sketch_out", "plot"):
        value = getattr(args, name, None)
        if value is not None and not Path(value).resolve().parent.is_dir():
            raise DataError(f"--{name.replace('_', '-')}: directory of {value} does not exist")


def _positive(args, *names):
    for name in names:
        v = getattr(args, name)
        if v is not None and v < 1:
            raise UsageError(f"--{name.replace('_', '-')} must be >= 1")


# subcommands ------------------------------------------------------------

def cmd_gen_data(args) -> None:
    ranges = args.r
    if args.dims is not None:
        if len(ranges) != 1 and len(ranges) != args.dims:
            raise UsageError("--dims disagrees with the number of --r values")
        ranges = ranges * args.dims if len(ranges) == 1 else ranges
    if args.records_csv:
        freq = ingest_records_csv(args.records_csv, AttributeDomain(ranges), args.zero_based)
    else:
        _positive(args, "records")
        spec = preset_mixture(args.preset, ranges, args.records, seed=args.seed, boundary=args.boundary)
        # separate stream for sampling so means and points are independent
        freq = gen_gaussian_mixture(spec, seed=args.seed + 1)
    io.write_dataset(args.out, freq)


def cmd_gen_queries(args) -> None:
    freq = io.read_dataset(args.data)
    model = QueryModelSpec(args.model, args.count, args.max_volume_fraction, args.seed)
    io.write_queries(args.out, freq.domain, gen_queries(model, freq))


def cmd_label(args) -> None:
    freq = io.read_dataset(args.data)
    domain, queries = io.read_queries(args.queries)
    if domain != freq.domain:
        raise DataError("queries and dataset have different domains")
    io.write_qfrs(args.out, domain, label_queries(freq, queries))


def cmd_train(args) -> None:
    _positive(args, "buckets", "omp_budget")
    domain, qfrs = io.read_qfrs(args.qfrs)
    if not qfrs:
        raise DataError(f"{args.qfrs} holds no QFRs")
    if args.sketch_out and args.method != "sphist":
        raise UsageError("--sketch-out only applies to --method sphist")
    if args.method == "sphist":
        sketch, hist = fit_sphist(qfrs, domain, args.buckets, omp_budget=args.omp_budget)
        if args.sketch_out:
            io.write_sketch(args.sketch_out, sketch)
    else:
        layout = EquiLayout.from_total(domain, args.buckets)
        if args.method == "equihist":
            _, hist = fit_equihist(qfrs, layout, args.ridge)
        else:
            state = online_new(layout, args.ridge, args.decay)
            for qfr in qfrs:
                state.observe(qfr)
            hist = state.histogram()
    io.write_histogram(args.out, hist)


def _estimator(args):
    if args.hist:
        h = io.read_histogram(args.hist)
        return h.domain, lambda qs: estimate_many_hist(h, qs, clamp=True)
    sk = io.read_sketch(args.sketch)
    return sk.domain, lambda qs: estimate_many_sketch(sk, qs, clamp=True)


def cmd_estimate(args) -> None:
    domain, est = _estimator(args)
    q_domain, queries = io.read_queries(args.queries)
    if q_domain != domain:
        raise DataError("queries and estimator have different domains")
    values = est(queries) if queries else np.zeros(0)
    out = [QueryFeedbackRecord(q, float(v)) for q, v in zip(queries, values)]
    if args.out:
        io.write_qfrs(args.out, domain, out)
    else:
        for q, v in zip(queries, values):
            print(",".join(map(str, q.flat())) + f",{float(v)!r}")


def cmd_evaluate(args) -> None:
    domain, est = _estimator(args)
    q_domain, qfrs = io.read_qfrs(args.qfrs)
    if q_domain != domain:
        raise DataError("QFRs and estimator have different domains")
    if not qfrs:
        raise DataError(f"{args.qfrs} holds no QFRs")
    truth = [r.cardinality for r in qfrs]
    err = avg_rel_error(truth, est([r.query for r in qfrs]))
    print(f"{err:.6f}")


def cmd_online_sim(args) -> None:
    _positive(args, "buckets", "stream", "test_size", "eval_every")
    freq = io.read_dataset(args.data)
    stream_seed, test_seed, event_seed = (
        int(s) for s in np.random.SeedSequence(args.seed).generate_state(3)
    )
    frac = args.max_volume_fraction
    stream = gen_queries(QueryModelSpec(args.model, args.stream, frac, stream_seed), freq)
    test = gen_queries(QueryModelSpec(args.model, args.test_size, frac, test_seed), freq)
    events = []
    if args.perturb_at is not None:
        events.append(UpdateEvent(args.perturb_at, args.perturb_fraction, event_seed))
    state = online_new(EquiLayout.from_total(freq.domain, args.buckets), args.ridge, args.decay)
    traj = simulate_stream(freq, stream, test, state, args.eval_every, events)
    io.write_trajectory(args.out, traj)


def cmd_sweep(args) -> None:
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        raise DataError(f"config file {args.config} not found") from None
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    # seeds in the file are offsets from --seed
    cfg = dataclasses.replace(cfg, seeds=tuple(args.seed + s for s in cfg.seeds))
    table = run_experiment(cfg, jobs=args.jobs)
    plot = args.plot or str(Path(args.out).with_suffix(".gp"))
    emit_results(table, args.out, plot)


COMMANDS = {
    "gen-data": cmd_gen_data,
    "gen-queries": cmd_gen_queries,
    "label": cmd_label,
    "train": cmd_train,
    "estimate": cmd_estimate,
    "evaluate": cmd_evaluate,
    "online-sim": cmd_online_sim,
    "sweep": cmd_sweep,
}

DATA_ERRORS = (
    DataError,
    io.FormatError,
    RecordParseError,
    DomainError,
    CellLimitError,
    ExperimentError,
    OSError,
    ValueError,
)


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        _check_paths(args)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"histlearn: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> None:
    try:
        code = dispatch(argv)
    except SystemExit as exc:
        # --help exits through argparse
        code = exc.code if isinstance(exc.code, int) else 0
    sys.exit(code)
