"""EXIT-chart machinery: consistent a-priori models, mutual information,
per-decoder transfer curves and actual-loop decoding trajectories.

A-priori soft values are modelled as Lambda = (sigma^2/2) b + N(0, sigma^2),
the consistent Gaussian LLR family.  Mutual information between a bit and
its soft value is estimated from the two conditional value histograms
(shared 64-bin edges spanning the pooled sample range); for consistent
inputs the sample-mean estimator 1 - E[log2(1 + exp(-b Lambda))] serves as
an independent cross-check.
"""

from dataclasses import dataclass

import numpy as np

from .app_decoder import bcjr_extrinsic, channel_llrs
from .channel_code import ChannelParams, awgn_transmit, bpsk_modulate, coded_length, conv_encode
from .mpdq import MpdqConfig, run_mpdq
from .softbits import LLR_CLIP, clamp_prob, prob_to_llr
from .source import SourceParams, measure, one_bit_quantize, sample_measurement_matrix, sample_sparse_signal
from .turbo import run_pipeline_block

_LN2 = np.log(2.0)


@dataclass(frozen=True)
class ConsistentLlrParams:
    """sigma of the consistent Gaussian LLR model; the mean is sigma^2/2."""

    sigma_llr: float

    def __post_init__(self):
        if self.sigma_llr <= 0:
            raise ValueError("sigma_llr must be > 0")

    @property
    def mu_llr(self):
        return self.sigma_llr**2 / 2.0


def sample_consistent_llrs(bits_pm, params, rng):
    """Lambda_i = (sigma^2/2) b_i + n_i with n_i ~ N(0, sigma^2)."""
    bits_pm = np.asarray(bits_pm, dtype=np.float64)
    return params.mu_llr * bits_pm + rng.normal(0.0, params.sigma_llr, size=bits_pm.shape)


def mutual_information(llrs, bits, n_bins=64):
    """Histogram estimate of I(b; Lambda) in bits, clamped to [0, 1].

    Both conditional densities share one set of ``n_bins`` uniform bins over
    the pooled sample range.
    """
    llrs = np.asarray(llrs, dtype=np.float64)
    bits = np.asarray(bits)
    pos = llrs[bits > 0]
    neg = llrs[bits < 0]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("both bit classes must be present")
    lo = llrs.min()
    hi = llrs.max()
    if lo == hi:
        return 0.0
    edges = np.linspace(lo, hi, n_bins + 1)
    mass_pos, _ = np.histogram(pos, bins=edges)
    mass_neg, _ = np.histogram(neg, bins=edges)
    mass_pos = mass_pos / mass_pos.sum()
    mass_neg = mass_neg / mass_neg.sum()
    total = mass_pos + mass_neg
    acc = 0.0
    for mass in (mass_pos, mass_neg):
        nz = mass > 0
        acc += float(np.sum(mass[nz] * np.log2(2.0 * mass[nz] / total[nz])))
    return float(np.clip(0.5 * acc, 0.0, 1.0))


def mutual_information_sample_mean(llrs, bits):
    """1 - mean(log2(1 + exp(-b Lambda))); exact for consistent LLRs."""
    llrs = np.asarray(llrs, dtype=np.float64)
    bits = np.asarray(bits, dtype=np.float64)
    losses = np.logaddexp(0.0, -bits * llrs) / _LN2
    return float(np.clip(1.0 - losses.mean(), 0.0, 1.0))


_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite.hermgauss(201)


def consistent_llr_mi(sigma):
    """I(b; Lambda) of the consistent Gaussian LLR model (quadrature)."""
    sigma = float(sigma)
    if sigma <= 0:
        return 0.0
    mu = sigma * sigma / 2.0
    lam = mu + sigma * np.sqrt(2.0) * _GH_NODES
    losses = np.logaddexp(0.0, -lam) / _LN2
    return float(np.clip(1.0 - (_GH_WEIGHTS * losses).sum() / np.sqrt(np.pi), 0.0, 1.0))


def sigma_for_mi(i_target, lo=1e-3, hi=60.0, tol=1e-10):
    """Invert consistent_llr_mi by bisection."""
    if i_target <= 0:
        return lo
    if i_target >= 1:
        return hi
    a, b = lo, hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        if consistent_llr_mi(mid) < i_target:
            a = mid
        else:
            b = mid
        if b - a < tol:
            break
    return 0.5 * (a + b)


def default_sigma_grid():
    """sigma values hitting a uniform a-priori MI grid 0, 0.1, ..., 0.9, 0.999."""
    targets = list(np.arange(0.0, 0.95, 0.1)) + [0.999]
    return np.array([sigma_for_mi(t) for t in targets])


@dataclass(frozen=True)
class ExitCurve:
    """Measured (I_apri, I_ext) transfer pairs, one per sigma grid point."""

    sigma_llr: np.ndarray
    i_apri: np.ndarray
    i_ext: np.ndarray

    def interp_ext(self, i_apri_query):
        """I_ext at a queried I_apri (linear, clamped to the measured range)."""
        order = np.argsort(self.i_apri)
        return np.interp(i_apri_query, self.i_apri[order], self.i_ext[order])

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("sigma_llr,i_apri,i_ext\n")
            for s, a, e in zip(self.sigma_llr, self.i_apri, self.i_ext):
                fh.write(f"{s:.6g},{a:.6g},{e:.6g}\n")


@dataclass(frozen=True)
class Trajectory:
    """Measured MI sequence of the actual turbo loop.

    ``points`` is an ordered list of (iteration, decoder, value) with
    decoder "cd" (channel decoder output) or "sd" (source decoder output).
    """

    points: tuple

    def values(self, decoder):
        return np.array([v for _, d, v in self.points if d == decoder])

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("step,decoder,i_value\n")
            for step, decoder, value in self.points:
                fh.write(f"{step},{decoder},{value:.6g}\n")


def exit_curve_app(snr_db, trellis, sigma_grid, trials, rng, m=500, clip=LLR_CLIP):
    """Measure the APP decoder's transfer curve at one channel quality.

    Per grid point: random info bits are encoded, BPSK-modulated and sent
    over the AWGN channel; consistent a-priori LLRs at the grid sigma feed
    the decoder together with the channel LLRs.  Samples are pooled across
    trials before the MI estimate.
    """
    chan = ChannelParams(snr_db, m, coded_length(trellis, m))
    sigmas = np.asarray(sigma_grid, dtype=np.float64)
    i_apri = np.empty_like(sigmas)
    i_ext = np.empty_like(sigmas)
    for gi, sigma in enumerate(sigmas):
        params = ConsistentLlrParams(sigma)
        apri_s, ext_s, bit_s = [], [], []
        for _ in range(trials):
            bits = np.where(rng.random(m) < 0.5, 1.0, -1.0)
            z = awgn_transmit(bpsk_modulate(conv_encode(trellis, bits), chan), chan, rng)
            lc = channel_llrs(z, chan, clip)
            apriori = sample_consistent_llrs(bits, params, rng)
            ext = bcjr_extrinsic(trellis, lc, apriori, clip)
            apri_s.append(apriori)
            ext_s.append(ext)
            bit_s.append(bits)
        bits_all = np.concatenate(bit_s)
        i_apri[gi] = mutual_information(np.concatenate(apri_s), bits_all)
        i_ext[gi] = mutual_information(np.concatenate(ext_s), bits_all)
    return ExitCurve(sigma_llr=sigmas, i_apri=i_apri, i_ext=i_ext)


def exit_curve_mpdq(phi, rho, mpdq_cfg, sigma_grid, trials, rng, alpha=None,
                    clip=LLR_CLIP):
    """Measure the de-quantizer's transfer curve.

    ``phi`` is either a fixed measurement matrix or an (m, n) shape tuple,
    in which case a fresh matrix is drawn per trial (ensemble average).
    Optional ``alpha`` applies the calibrated tanh transform to the output
    probabilities before the MI estimate.
    """
    from .calibration import tanh_transform

    fresh = isinstance(phi, tuple)
    if fresh:
        m, n = phi
    else:
        phi = np.asarray(phi, dtype=np.float64)
        m, n = phi.shape
    params_src = SourceParams(n, rho)
    sigmas = np.asarray(sigma_grid, dtype=np.float64)
    i_apri = np.empty_like(sigmas)
    i_ext = np.empty_like(sigmas)
    for gi, sigma in enumerate(sigmas):
        llr_params = ConsistentLlrParams(sigma)
        apri_s, ext_s, bit_s = [], [], []
        for _ in range(trials):
            mat = sample_measurement_matrix(m, n, rng) if fresh else phi
            x = sample_sparse_signal(params_src, rng)
            bits = one_bit_quantize(measure(mat, x))
            apriori = sample_consistent_llrs(bits, llr_params, rng)
            _x_hat, _v_x, soft = run_mpdq(mat, np.clip(apriori, -clip, clip), rho, mpdq_cfg)
            p = soft.p_plus if alpha is None else tanh_transform(soft.p_plus, alpha)
            ext_s.append(prob_to_llr(clamp_prob(p), clip))
            apri_s.append(apriori)
            bit_s.append(bits)
        bits_all = np.concatenate(bit_s)
        i_apri[gi] = mutual_information(np.concatenate(apri_s), bits_all)
        i_ext[gi] = mutual_information(np.concatenate(ext_s), bits_all)
    return ExitCurve(sigma_llr=sigmas, i_apri=i_apri, i_ext=i_ext)


def measure_trajectory(system, schedule, n_iters, trials, rng):
    """Run the actual turbo loop ``trials`` times and record the pooled MI
    of each decoder's output at every half-iteration."""
    cd_pool = [[] for _ in range(n_iters)]
    sd_pool = [[] for _ in range(n_iters)]
    bit_pool = [[] for _ in range(n_iters)]
    for _ in range(trials):
        block = run_pipeline_block(system, schedule, n_iters, rng, collect_llrs=True)
        diag = block.result.diagnostics
        for it in range(len(diag.cd_ext_llrs)):
            cd_pool[it].append(diag.cd_ext_llrs[it])
            sd_pool[it].append(diag.sd_handoff_llrs[it])
            bit_pool[it].append(block.bits)

    points = []
    for it in range(n_iters):
        if not bit_pool[it]:
            break
        bits = np.concatenate(bit_pool[it])
        points.append((it + 1, "cd", mutual_information(np.concatenate(cd_pool[it]), bits)))
        points.append((it + 1, "sd", mutual_information(np.concatenate(sd_pool[it]), bits)))
    return Trajectory(points=tuple(points))
