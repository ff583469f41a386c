"""Seeded sweep over the number of buckets on a 2-D grid.

Runs both batch learners on nine Gaussian clusters over a 32 x 32 grid
and writes a CSV plus a gnuplot script next to this file.  Every number
except the timing column is reproducible from the seeds alone.

Run with ``python3 demos/sweep_2d.py``.
"""

from pathlib import Path

from histlearn import ExperimentConfig, emit_results, run_experiment

cfg = ExperimentConfig(
    preset="gauss-nd",
    dims=2,
    range=32,
    records=100_000,
    train_size=1000,
    test_size=2000,
    seeds=(0, 1, 2),
    sweep_var="buckets",
    sweep_values=(16, 36, 64, 144),
)
table = run_experiment(cfg)

print(f"{'buckets':>8} {'equi-width':>11} {'sparse':>8}")
for value in cfg.sweep_values:
    eq = table.row("equihist", value).mean_err_pct
    sp = table.row("sphist", value).mean_err_pct
    print(f"{value:>8} {eq:10.2f}% {sp:7.2f}%")

out = Path(__file__).with_name("sweep_2d.csv")
emit_results(table, out, out.with_suffix(".gp"))
print(f"\nwrote {out.name} and {out.with_suffix('.gp').name}")
