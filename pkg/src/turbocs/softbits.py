"""Soft-value algebra: conversions between bit probabilities and LLRs.

All soft information in the decoder is carried as natural-log likelihood
ratios ``log(P(b=+1) / P(b=-1))``, clipped to ``+-LLR_CLIP``.  Probabilities
are derived on demand.  Functions accept scalars or numpy arrays.
"""

import numpy as np

# Probability distortion of the clip is < 1e-13 and exp(LLR_CLIP) stays far
# from overflow.
LLR_CLIP = 30.0

# Probabilities are kept away from exact 0/1 before LLR conversion.
PROB_EPS = 1e-13


def clip_llr(llr, clip=LLR_CLIP):
    """Saturate LLR values to [-clip, +clip].  NaN input is an error."""
    llr = np.asarray(llr, dtype=np.float64)
    if np.isnan(llr).any():
        raise ValueError("NaN LLR: upstream numerical failure")
    out = np.clip(llr, -clip, clip)
    return out if out.ndim else float(out)


def prob_to_llr(p, clip=LLR_CLIP):
    """LLR of b from P(b=+1): log(p / (1-p)), saturating at the clip."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore"):
        llr = np.log(p) - np.log1p(-p)
    out = np.clip(llr, -clip, clip)
    return out if out.ndim else float(out)


def llr_to_prob(llr):
    """P(b=+1) from an LLR: (tanh(llr/2) + 1) / 2."""
    llr = np.asarray(llr, dtype=np.float64)
    out = 0.5 * (np.tanh(0.5 * llr) + 1.0)
    return out if out.ndim else float(out)


def clamp_prob(p, eps=PROB_EPS):
    """Pull probabilities into [eps, 1-eps] ahead of LLR conversion."""
    p = np.asarray(p, dtype=np.float64)
    out = np.clip(p, eps, 1.0 - eps)
    return out if out.ndim else float(out)
