"""Branching Brownian motion with drift, killed at the origin: exact
formulas, event-driven Monte Carlo, spine estimators, and numerical
validation of the asymptotic count expansions."""

__version__ = "0.1.0"

from .errors import (
    BkbmError,
    DegenerateWeightsError,
    PopulationCapExceeded,
    RegimeMismatchError,
)
from .special_math import (
    DriftParams,
    Interval,
    bessel3_cdf,
    bessel3_density,
    expected_count,
    gauss_cdf,
    gauss_pdf,
    hermite_at_zero,
    hermite_eval,
    killed_transition_prob,
    poly_exp_integral,
)
from .series import (
    ExpansionOrder,
    ExpansionPrediction,
    Regime,
    cdf_shift_expansion,
    cdf_window_expansion,
    cdf_window_target,
    pdf_window_expansion,
    pdf_window_target,
    predict_expansion,
)
from .simulator import (
    BatchSnapshot,
    OffspringLaw,
    SimConfig,
    Snapshot,
    bridge_survival_prob,
    count_in,
    simulate,
    simulate_batch,
)
from .martingales import (
    MartingaleSeries,
    checkpoint_times,
    limit_estimate,
    martingale_value,
    martingale_values_batch,
    series_from_snapshots,
    start_value,
)
from .spine import (
    BesselCheckResult,
    ManyToOneResult,
    SpinePath,
    bessel3_sample_check,
    indicator_functional,
    killed_endpoint_sample,
    many_to_one_estimate,
    population_functional,
    positive_mass_functional,
    sample_size_biased,
    sample_spine_path,
)
from .validation import (
    ConservationReport,
    ExpansionReport,
    KestenReport,
    expectation_level_check,
    kesten_rate_check,
    martingale_conservation_check,
    pathwise_check,
)
