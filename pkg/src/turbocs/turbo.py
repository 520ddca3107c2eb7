"""Turbo loop: APP decoder and 1-bit de-quantizer exchanging soft values.

Each iteration runs the BCJR decoder on the received block with the current
a-priori LLRs, hands its extrinsic output to the de-quantizer as bit
probabilities, pushes the de-quantizer's soft output through the calibrated
tanh transform (identity when no schedule is given), and feeds the result
back as the next a-priori vector.  LLRs are clipped at every hand-off.
"""

import functools
from dataclasses import dataclass, field

import numpy as np

from .app_decoder import bcjr_extrinsic, channel_llrs
from .calibration import CalibrationSchedule, tanh_transform
from .channel_code import (
    ChannelParams,
    CodePolynomials,
    awgn_transmit,
    bpsk_modulate,
    build_trellis,
    coded_length,
    conv_encode,
)
from .mpdq import MpdqConfig, MpdqDivergenceError, run_mpdq
from .softbits import LLR_CLIP, clamp_prob, prob_to_llr
from .source import (
    SourceParams,
    measure,
    one_bit_quantize,
    sample_measurement_matrix,
    sample_sparse_signal,
)

RSNR_CAP_DB = 100.0


def snr_to_sigma(snr_db):
    """Channel noise spectral density sigma_c^2 = 10^(-snr_db/10), E_b = 1."""
    return 10.0 ** (-float(snr_db) / 10.0)


def rsnr(x, x_hat, cap_db=RSNR_CAP_DB):
    """Reconstruction SNR of one block, ||x||^2 / ||x_hat - x||^2 in dB,
    capped at +100 dB.  A zero-energy block has no defined RSNR."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError("length mismatch")
    num = float(x @ x)
    if num == 0.0:
        raise ValueError("zero-energy block has no defined RSNR")
    err = x_hat - x
    den = float(err @ err)
    if den == 0.0:
        return cap_db
    return min(10.0 * np.log10(num / den), cap_db)


def aggregate_rsnr_db(signal_energies, error_energies, cap_db=RSNR_CAP_DB):
    """RSNR of a trial set as the ratio of mean energies (matches the
    expectation-based definition rather than a mean of per-block dB)."""
    num = float(np.sum(signal_energies))
    den = float(np.sum(error_energies))
    if num <= 0.0:
        raise ValueError("no signal energy to aggregate")
    if den == 0.0:
        return cap_db
    return min(10.0 * np.log10(num / den), cap_db)


@dataclass(frozen=True)
class SystemConfig:
    """End-to-end system description, enough to generate and decode blocks."""

    n: int
    m: int
    rho: float
    snr_db: float
    polynomials: CodePolynomials = CodePolynomials()
    mpdq: MpdqConfig = MpdqConfig()
    llr_clip: float = LLR_CLIP
    histogram_bins: int = 64


@dataclass(frozen=True)
class TurboConfig:
    """Decoder-side knobs for one turbo_decode call."""

    n_turbo_iters: int = 6
    mpdq: MpdqConfig = MpdqConfig()
    schedule: object = None  # CalibrationSchedule, sequence of float/None, or None
    snr_db: float = -1.0
    rho: float = 0.01
    llr_clip: float = LLR_CLIP

    def __post_init__(self):
        if self.n_turbo_iters < 1:
            raise ValueError("n_turbo_iters must be >= 1")


@dataclass
class TurboDiagnostics:
    """Per-iteration soft values, recorded when collect_llrs is on."""

    cd_ext_llrs: list = field(default_factory=list)
    sd_raw_probs: list = field(default_factory=list)
    sd_handoff_llrs: list = field(default_factory=list)


@dataclass
class TurboResult:
    x_hats: list
    rsnr_db: list
    diverged: bool = False
    diagnostics: TurboDiagnostics = None


def _schedule_alphas(schedule, n_iters):
    if schedule is None:
        return [None] * n_iters
    seq = schedule.alphas if isinstance(schedule, CalibrationSchedule) else list(schedule)
    if len(seq) < n_iters:
        raise ValueError(
            f"schedule has {len(seq)} entries for {n_iters} turbo iterations"
        )
    return list(seq[:n_iters])


@functools.lru_cache(maxsize=8)
def cached_trellis(polynomials=CodePolynomials()):
    return build_trellis(polynomials)


def turbo_decode(z, phi, trellis, cfg, truth=None, collect_llrs=False):
    """Iterate BCJR and the de-quantizer for cfg.n_turbo_iters rounds.

    The first iteration runs with an all-zero a-priori vector.  Returns the
    per-iteration estimates (and RSNR when ``truth`` is given).  If the
    de-quantizer diverges, its last finite estimate fills the remaining
    iterations and the result carries diverged=True.
    """
    z = np.asarray(z, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    m = phi.shape[0]
    chan = ChannelParams(cfg.snr_db, m, coded_length(trellis, m))
    lc = channel_llrs(z, chan, cfg.llr_clip)
    alphas = _schedule_alphas(cfg.schedule, cfg.n_turbo_iters)

    apriori = np.zeros(m)
    result = TurboResult(x_hats=[], rsnr_db=[], diagnostics=TurboDiagnostics() if collect_llrs else None)

    for it in range(cfg.n_turbo_iters):
        cd_ext = bcjr_extrinsic(trellis, lc, apriori, cfg.llr_clip)
        try:
            x_hat, _v_x, soft = run_mpdq(phi, cd_ext, cfg.rho, cfg.mpdq)
        except MpdqDivergenceError as err:
            result.diverged = True
            x_last = err.state.x_hat
            for _ in range(it, cfg.n_turbo_iters):
                result.x_hats.append(x_last)
                if truth is not None:
                    result.rsnr_db.append(rsnr(truth, x_last))
            break

        p_raw = soft.p_plus
        alpha = alphas[it]
        p_mod = tanh_transform(p_raw, alpha) if alpha is not None else p_raw
        handoff = prob_to_llr(clamp_prob(p_mod), cfg.llr_clip)
        apriori = handoff

        result.x_hats.append(x_hat)
        if truth is not None:
            result.rsnr_db.append(rsnr(truth, x_hat))
        if collect_llrs:
            result.diagnostics.cd_ext_llrs.append(cd_ext)
            result.diagnostics.sd_raw_probs.append(p_raw)
            result.diagnostics.sd_handoff_llrs.append(handoff)

    return result


@dataclass
class PipelineBlock:
    """One generated-and-decoded block, with everything needed for analysis."""

    signal: np.ndarray
    phi: np.ndarray
    bits: np.ndarray
    received: np.ndarray
    result: TurboResult


def run_pipeline_block(system, schedule, n_iters, rng, collect_llrs=False):
    """Draw a fresh block through the full encoder/channel/decoder chain."""
    params = SourceParams(system.n, system.rho)
    x = sample_sparse_signal(params, rng)
    phi = sample_measurement_matrix(system.m, system.n, rng)
    bits = one_bit_quantize(measure(phi, x))
    trellis = cached_trellis(system.polynomials)
    chan = ChannelParams(system.snr_db, system.m, coded_length(trellis, system.m))
    symbols = bpsk_modulate(conv_encode(trellis, bits), chan)
    z = awgn_transmit(symbols, chan, rng)
    cfg = TurboConfig(
        n_turbo_iters=n_iters,
        mpdq=system.mpdq,
        schedule=schedule,
        snr_db=system.snr_db,
        rho=system.rho,
        llr_clip=system.llr_clip,
    )
    result = turbo_decode(z, phi, trellis, cfg, truth=x, collect_llrs=collect_llrs)
    return PipelineBlock(signal=x, phi=phi, bits=bits, received=z, result=result)
