"""Track a drifting column with an online equi-width histogram.

Feedback arrives one query at a time.  After step 1000 a third of the
rows move to random cells, as a bulk update would.  The online learner
keeps exponentially decayed sufficient statistics, so the error spikes
at the update and then recovers without any retraining pass.

Run with ``python3 demos/online_drift.py``.
"""

from histlearn import (
    EquiLayout,
    QueryModelSpec,
    UpdateEvent,
    gen_gaussian_mixture,
    gen_queries,
    online_new,
    preset_mixture,
    simulate_stream,
)

freq = gen_gaussian_mixture(preset_mixture("type1", 1024, 100_000, seed=1), seed=2)
stream = gen_queries(QueryModelSpec("uniform", 2000, 0.2, seed=3), freq)
test = gen_queries(QueryModelSpec("uniform", 2000, 0.2, seed=4), freq)

state = online_new(EquiLayout(freq.domain, (20,)), ridge=0.0, decay=0.995)
trajectory = simulate_stream(
    freq, stream, test, state, eval_every=100, events=[UpdateEvent(1000, 0.3, seed=5)]
)

peak = max(err for _, err in trajectory)
for step, err in trajectory:
    bar = "#" * int(40 * err / peak)
    note = "  <- 30% of rows moved" if step == 1001 else ""
    print(f"step {step:5d}  {err:6.2f}%  {bar}{note}")
