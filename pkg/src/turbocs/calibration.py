"""Training-based correction of the de-quantizer's soft outputs.

The de-quantizer's bit probabilities come from a Gaussian approximation and
are not true posteriors.  Against known training bits, the true LLR of an
output value can be estimated as the log-ratio of the two conditional value
densities (histogram estimate).  A one-parameter tanh transform of the
probabilities is then fitted to those corrected values per turbo iteration;
the deployed decoder applies only the fitted transform.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .softbits import LLR_CLIP, clamp_prob, llr_to_prob, prob_to_llr


@dataclass(frozen=True)
class LlrHistogram:
    """Per-class LLR value histogram over [-clip, clip] with Laplace
    smoothing (pseudo-count added to every bin of both classes)."""

    edges: np.ndarray
    counts_pos: np.ndarray
    counts_neg: np.ndarray
    pseudo_count: float = 1.0

    @property
    def n_bins(self):
        return len(self.edges) - 1

    def bin_index(self, values):
        width = self.edges[1] - self.edges[0]
        idx = np.floor((np.asarray(values) - self.edges[0]) / width).astype(np.int64)
        return np.clip(idx, 0, self.n_bins - 1)

    def log_density_ratio(self):
        """log(P(bin | b=+1) / P(bin | b=-1)) per bin, smoothed."""
        k = self.n_bins
        dens_pos = (self.counts_pos + self.pseudo_count) / (
            self.counts_pos.sum() + self.pseudo_count * k
        )
        dens_neg = (self.counts_neg + self.pseudo_count) / (
            self.counts_neg.sum() + self.pseudo_count * k
        )
        return np.log(dens_pos) - np.log(dens_neg)


def build_llr_histogram(llrs, bits, n_bins=64, clip=LLR_CLIP, pseudo_count=1.0):
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    llrs = np.asarray(llrs, dtype=np.float64)
    bits = np.asarray(bits)
    pos = llrs[bits > 0]
    neg = llrs[bits < 0]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("both bit classes must be present in the training data")
    edges = np.linspace(-clip, clip, n_bins + 1)
    counts_pos, _ = np.histogram(np.clip(pos, -clip, clip), bins=edges)
    counts_neg, _ = np.histogram(np.clip(neg, -clip, clip), bins=edges)
    return LlrHistogram(
        edges=edges,
        counts_pos=counts_pos.astype(np.float64),
        counts_neg=counts_neg.astype(np.float64),
        pseudo_count=pseudo_count,
    )


def empirical_llr_correction(ext_llrs, true_bits, n_bins=64, clip=LLR_CLIP):
    """Replace each LLR sample by the histogram estimate of its true LLR,
    log(P(value | b=+1) / P(value | b=-1))."""
    hist = build_llr_histogram(ext_llrs, true_bits, n_bins=n_bins, clip=clip)
    ratio = hist.log_density_ratio()
    corrected = ratio[hist.bin_index(ext_llrs)]
    return np.clip(corrected, -clip, clip)


def tanh_transform(p, alpha):
    """Probability transform (tanh(alpha (p - 1/2)) + 1) / 2."""
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    p = np.asarray(p, dtype=np.float64)
    out = 0.5 * (np.tanh(alpha * (p - 0.5)) + 1.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class FitDiagnostics:
    converged: bool
    degenerate: bool
    n_iters: int
    residual_norm: float
    costs: tuple


# alpha = 2 makes the transform the identity to first order around p = 1/2.
_ALPHA_INIT = 2.0
_ALPHA_BOUNDS = (0.01, 100.0)


def fit_alpha(raw_probs, target_probs, alpha0=_ALPHA_INIT, bounds=_ALPHA_BOUNDS,
              max_iters=100, step_tol=1e-8):
    """Levenberg-Marquardt fit of the tanh-transform slope alpha.

    Minimises sum((tanh_transform(raw, alpha) - target)^2) over the scalar
    alpha, clamped to ``bounds``.  Returns (alpha, FitDiagnostics); a flat
    objective (all raw probabilities at 1/2) is flagged degenerate.
    """
    raw = np.asarray(raw_probs, dtype=np.float64)
    target = np.asarray(target_probs, dtype=np.float64)
    if raw.shape != target.shape:
        raise ValueError("raw and target sample lengths differ")
    if raw.size < 10:
        raise ValueError("need at least 10 sample pairs")

    lo, hi = bounds
    centred = raw - 0.5

    def residuals(alpha):
        return 0.5 * (np.tanh(alpha * centred) + 1.0) - target

    def jacobian(alpha):
        th = np.tanh(alpha * centred)
        return 0.5 * centred * (1.0 - th * th)

    alpha = float(np.clip(alpha0, lo, hi))
    r = residuals(alpha)
    cost = float(r @ r)
    costs = [cost]

    jtj0 = float(jacobian(alpha) @ jacobian(alpha))
    if jtj0 < 1e-30:
        diag = FitDiagnostics(False, True, 0, float(np.sqrt(cost)), tuple(costs))
        return alpha, diag

    mu = 1e-3 * jtj0
    converged = False
    iters = 0
    for iters in range(1, max_iters + 1):
        j = jacobian(alpha)
        jtj = float(j @ j)
        jtr = float(j @ r)
        step = -jtr / (jtj + mu)
        if abs(step) < step_tol:
            converged = True
            break
        cand = float(np.clip(alpha + step, lo, hi))
        r_cand = residuals(cand)
        cost_cand = float(r_cand @ r_cand)
        if cost_cand <= cost:
            alpha, r, cost = cand, r_cand, cost_cand
            costs.append(cost)
            mu = max(mu / 3.0, 1e-30)
        else:
            mu *= 10.0
            if mu > 1e30:
                break
    diag = FitDiagnostics(
        converged=converged,
        degenerate=False,
        n_iters=iters,
        residual_norm=float(np.sqrt(cost)),
        costs=tuple(costs),
    )
    return alpha, diag


@dataclass(frozen=True)
class CalibrationSchedule:
    """Fitted per-turbo-iteration tuning factors and their fit residuals."""

    alphas: tuple
    training_blocks: int
    residuals: tuple = field(default=())
    snr_db: float = 0.0
    config_hash: str = ""

    def __post_init__(self):
        if any(a is not None and a <= 0 for a in self.alphas):
            raise ValueError("alphas must be positive")

    def __len__(self):
        return len(self.alphas)


def save_schedule(path, schedule):
    """Persist a schedule as flat key = value text."""
    lines = [
        "# turbo-cs calibration schedule",
        f"config_hash = {schedule.config_hash}",
        f"snr_db = {schedule.snr_db:.6g}",
        f"training_blocks = {schedule.training_blocks}",
        f"n_iters = {len(schedule.alphas)}",
    ]
    residuals = schedule.residuals or tuple(float("nan") for _ in schedule.alphas)
    for i, (a, res) in enumerate(zip(schedule.alphas, residuals), start=1):
        lines.append(f"alpha_{i} = {a!r}")  # repr round-trips exactly
        lines.append(f"residual_{i} = {res:.6g}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_schedule(path):
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    n = int(values["n_iters"])
    alphas = tuple(float(values[f"alpha_{i}"]) for i in range(1, n + 1))
    residuals = tuple(float(values[f"residual_{i}"]) for i in range(1, n + 1))
    return CalibrationSchedule(
        alphas=alphas,
        training_blocks=int(values["training_blocks"]),
        residuals=residuals,
        snr_db=float(values["snr_db"]),
        config_hash=values.get("config_hash", ""),
    )


def config_fingerprint(*parts):
    """Short stable hash for keying persisted schedules."""
    text = "|".join(str(p) for p in parts)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def calibrate_schedule(system, training_blocks, n_iters, rng, config_hash=""):
    """Fit one tuning factor per turbo iteration from training blocks.

    Sequential in the iteration index: the collection run for iteration i
    applies the already-fitted factors at iterations < i, leaves iteration i
    untransformed, gathers that iteration's raw output probabilities over
    ``training_blocks`` fresh end-to-end blocks (known signal and bits), and
    fits alpha_i against the histogram-corrected targets.
    """
    from . import turbo as turbo_mod

    if training_blocks < 1 or n_iters < 1:
        raise ValueError("training_blocks and n_iters must be >= 1")

    alphas = []
    residuals = []
    for i in range(1, n_iters + 1):
        schedule_so_far = list(alphas) + [None]
        raw_chunks = []
        bit_chunks = []
        for _ in range(training_blocks):
            block = turbo_mod.run_pipeline_block(
                system, schedule_so_far, n_iters=i, rng=rng, collect_llrs=True
            )
            raw_chunks.append(block.result.diagnostics.sd_raw_probs[i - 1])
            bit_chunks.append(block.bits)
        raw = np.concatenate(raw_chunks)
        bits = np.concatenate(bit_chunks)
        ext_llrs = prob_to_llr(clamp_prob(raw), system.llr_clip)
        corrected = empirical_llr_correction(
            ext_llrs, bits, n_bins=system.histogram_bins, clip=system.llr_clip
        )
        targets = llr_to_prob(corrected)
        alpha_i, diag = fit_alpha(raw, targets)
        alphas.append(alpha_i)
        residuals.append(diag.residual_norm)

    return CalibrationSchedule(
        alphas=tuple(alphas),
        training_blocks=training_blocks,
        residuals=tuple(residuals),
        snr_db=system.snr_db,
        config_hash=config_hash,
    )
