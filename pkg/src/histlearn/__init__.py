"""Histograms learned from query feedback records."""

from .core import (
    AttributeDomain,
    BucketHistogram,
    CellLimitError,
    DomainError,
    FrequencyTensor,
    QueryFeedbackRecord,
    RangeQuery,
    WaveletSketch,
    estimate_cardinality_hist,
    estimate_cardinality_sketch,
    estimate_many_hist,
    estimate_many_sketch,
    exact_cardinality,
    exact_cardinalities,
    histogram_to_dense,
)
from .equihist import EquiLayout, bucket_overlap, fit_equihist
from .evalbench import ExperimentConfig, ResultTable, emit_results, run_experiment
from .metrics import avg_rel_error
from .online import (
    OnlineState,
    UpdateEvent,
    online_histogram,
    online_new,
    online_observe,
    simulate_stream,
)
from .sphist import dp_reduce, fit_sphist, omp
from .workload import (
    MixtureComponent,
    MixtureSpec,
    QueryModelSpec,
    gen_gaussian_mixture,
    gen_queries,
    label_queries,
    perturb,
    preset_mixture,
)

__version__ = "0.1.0"
