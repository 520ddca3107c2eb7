"""turbocs: joint source-channel decoding of 1-bit compressed-sensing
measurements with a turbo loop of a BCJR channel decoder and a soft-in/
soft-out message-passing de-quantizer, plus the EXIT-chart and calibration
machinery around it."""

from .softbits import LLR_CLIP, clip_llr, llr_to_prob, prob_to_llr
from .source import (
    QuantizerNoise,
    SourceParams,
    measure,
    one_bit_quantize,
    prior_moments,
    sample_measurement_matrix,
    sample_sparse_signal,
)
from .channel_code import (
    ChannelParams,
    CodePolynomials,
    Trellis,
    awgn_transmit,
    bpsk_modulate,
    build_trellis,
    coded_length,
    conv_encode,
)
from .app_decoder import bcjr_app, bcjr_extrinsic, channel_llrs
from .mpdq import (
    MpdqConfig,
    MpdqDivergenceError,
    SoftMeasurementOutput,
    factor_update,
    mixed_bit_moments,
    run_mpdq,
    soft_output,
    truncated_gaussian_moments,
    variable_update,
)
from .calibration import (
    CalibrationSchedule,
    calibrate_schedule,
    empirical_llr_correction,
    fit_alpha,
    load_schedule,
    save_schedule,
    tanh_transform,
)
from .exit_chart import (
    ConsistentLlrParams,
    ExitCurve,
    Trajectory,
    consistent_llr_mi,
    default_sigma_grid,
    exit_curve_app,
    exit_curve_mpdq,
    measure_trajectory,
    mutual_information,
    mutual_information_sample_mean,
    sample_consistent_llrs,
    sigma_for_mi,
)
from .turbo import (
    SystemConfig,
    TurboConfig,
    TurboResult,
    aggregate_rsnr_db,
    rsnr,
    run_pipeline_block,
    snr_to_sigma,
    turbo_decode,
)
from .harness import ExperimentConfig, load_config, run_monte_carlo, write_results

__version__ = "0.1.0"
