"""Simulation and analysis of derivative pre-processed molecular communication.

A point source releases molecule pulses into a diffusive medium; an absorbing
spherical receiver counts arrivals per time slot.  Applying an m-th order
discrete forward derivative to the count stream sharpens the channel's long
tail and strips slowly varying interference before detection.  This package
provides the channel model, the detector family, closed-form error analysis,
an SINR objective for picking the derivative order, and a Monte Carlo harness.
"""

from .analysis import (
    ClarkResult,
    SinrReport,
    clark_max_stats,
    conditional_stats,
    fstd_theoretical_ber,
    matd_theoretical_ber,
    optimize_derivative_order,
    optimize_threshold,
    sinr,
)
from .channel import (
    ChannelVector,
    SlotGrid,
    Topology,
    channel_vector,
    grid_from_rate,
    hit_cdf,
    hit_density,
    peak_time,
)
from .derivative import (
    apply_derivative,
    derivative_matrix,
    intended_mean,
    transform_stats,
    truncate_noncausal,
)
from .detectors import (
    DetectorConfig,
    FstdSample,
    banded_mlsd_detect,
    fstd_detect,
    fstd_select_sample,
    ftd_detect,
    make_detector,
    matd_detect,
    mlda_detect,
    mlsd_detect,
    select_peak_sample,
)
from .harness import (
    BerRecord,
    ConfigError,
    ExperimentConfig,
    build_channel,
    load_config,
    run_ber_point,
    run_figure_sweep,
    write_csv,
)
from .signal import (
    EmissionVector,
    GaussianStats,
    modulate_bcsk,
    received_stats,
    simulate_arrivals,
    snr_to_noise_rate,
)

__version__ = "0.1.0"
