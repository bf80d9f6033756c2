"""mcpsd: segment-averaged power spectra from multi-coset sub-Nyquist samples.

The package estimates the average power within each of L equal spectral
segments of a bandlimited wide-sense-stationary process, using q parallel
sampling channels that together run below the Nyquist rate.  It also ships
the exact finite-length bias and covariance expressions of the estimator for
white Gaussian input, a closed-form variance approximation, brute-force
moment oracles, and a Monte Carlo harness that reproduces the reference
experiment grids.
"""

from .analysis import (
    CovarianceReport,
    FilterMoments,
    bias_white,
    covariance_exact,
    covariance_report,
    expected_correlation,
    filter_moments,
    gram_inverse_diag,
    measurement_moments_bruteforce,
    measurement_moments_white,
    overlap_profile,
    report_to_csv,
    report_to_json,
    variance_approx,
)
from .errors import (
    DelayOutOfRange,
    FeasibilityExhausted,
    InstanceTooLarge,
    InvalidDimensions,
    InvalidLength,
    McpsdError,
    RankDeficient,
    RecordTooShort,
)
from .estimator import (
    CorrelationEstimate,
    SegmentPowerEstimate,
    delayed_channel,
    estimate_correlation,
    estimate_powers,
    estimate_to_csv,
    stack_measurements,
)
from .fdfilter import (
    DEFAULT_INTEGER_DELAY,
    DEFAULT_TAPS,
    FdFilter,
    FilterBank,
    bank_document,
    bank_from_document,
    build_bank,
    design_lagrange,
    windowed_energy,
)
from .harness import (
    ExperimentSpec,
    TrialSummary,
    emit_figure_data,
    run_montecarlo,
    validate_spec,
    write_summaries_csv,
)
from .patterns import (
    MeasurementSystem,
    PairIndexMap,
    SamplingPattern,
    build_pair_map,
    build_system,
    generate_pattern,
    pattern_document,
    pattern_from_document,
    segment_centers,
    solve_least_squares,
)
from .signals import (
    ChannelData,
    FilteredNoiseModel,
    NyquistRecord,
    SignalModel,
    WhiteNoiseModel,
    bandpass_taps,
    calibrate_gain,
    filtered_record,
    generate_record,
    multicoset_sample,
    record_from_csv,
    record_to_csv,
    segment_edges,
    true_segment_power,
    white_record,
)

__version__ = "1.0.0"
