"""Log-domain BCJR decoder producing extrinsic LLRs for the info bits.

Exact log-MAP: the forward/backward metrics use the jacobian logarithm
(max-star, i.e. exact pairwise log-sum-exp), not the max-log approximation.
Both recursions start and end in state 0, matching the terminated encoder.
Metrics are renormalised by their maximum every step; impossible states sit
at a large negative sentinel rather than -inf so differences stay NaN-free.

The recursion kernel exists as a numba loop version and a vectorised numpy
fallback; `_backend` picks the active one.
"""

import math

import numpy as np

from . import _backend
from .softbits import LLR_CLIP, clip_llr

_NEG = -1.0e30


def channel_llrs(received, params, clip=LLR_CLIP):
    """Per-sample channel LLRs for BPSK over AWGN.

    L_c = 4 * amplitude * z / N0, the log of the Gaussian likelihood ratio
    under the per-sample noise variance N0/2.  Clipped like every other LLR.
    """
    z = np.asarray(received, dtype=np.float64)
    raw = 4.0 * params.symbol_amplitude * z / params.sigma_c_sq
    return np.clip(raw, -clip, clip)


def _bcjr_total_loops(next_state, incoming_state, incoming_input, out_pm,
                      tail_input, ch_steps, apriori):
    n_steps = ch_steps.shape[0]
    n_states = next_state.shape[0]
    n_out = ch_steps.shape[1]
    m_info = apriori.shape[0]

    gamma = np.empty((n_steps, n_states, 2))
    for t in range(n_steps):
        for s in range(n_states):
            for u in range(2):
                if t >= m_info and u != tail_input[s]:
                    gamma[t, s, u] = _NEG
                    continue
                g = 0.0
                for j in range(n_out):
                    g += out_pm[s, u, j] * ch_steps[t, j]
                if t < m_info:
                    g += apriori[t] * (2.0 * u - 1.0)
                gamma[t, s, u] = 0.5 * g

    alpha = np.full((n_steps + 1, n_states), _NEG)
    alpha[0, 0] = 0.0
    for t in range(n_steps):
        best = _NEG
        for s in range(n_states):
            s0 = incoming_state[s, 0]
            u0 = incoming_input[s, 0]
            s1 = incoming_state[s, 1]
            u1 = incoming_input[s, 1]
            a = alpha[t, s0] + gamma[t, s0, u0]
            b = alpha[t, s1] + gamma[t, s1, u1]
            d = a - b
            if d < 0.0:
                d = -d
            v = (a if a > b else b) + math.log1p(math.exp(-d))
            alpha[t + 1, s] = v
            if v > best:
                best = v
        for s in range(n_states):
            alpha[t + 1, s] -= best

    beta = np.full((n_steps + 1, n_states), _NEG)
    beta[n_steps, 0] = 0.0
    for t in range(n_steps - 1, -1, -1):
        best = _NEG
        for s in range(n_states):
            a = beta[t + 1, next_state[s, 0]] + gamma[t, s, 0]
            b = beta[t + 1, next_state[s, 1]] + gamma[t, s, 1]
            d = a - b
            if d < 0.0:
                d = -d
            v = (a if a > b else b) + math.log1p(math.exp(-d))
            beta[t, s] = v
            if v > best:
                best = v
        for s in range(n_states):
            beta[t, s] -= best

    total = np.empty(m_info)
    for t in range(m_info):
        num = _NEG
        den = _NEG
        for s in range(n_states):
            v1 = alpha[t, s] + gamma[t, s, 1] + beta[t + 1, next_state[s, 1]]
            v0 = alpha[t, s] + gamma[t, s, 0] + beta[t + 1, next_state[s, 0]]
            d = num - v1
            if d < 0.0:
                d = -d
            num = (num if num > v1 else v1) + math.log1p(math.exp(-d))
            d = den - v0
            if d < 0.0:
                d = -d
            den = (den if den > v0 else v0) + math.log1p(math.exp(-d))
        total[t] = num - den
    return total


def _logsumexp_pair(a, b):
    return np.maximum(a, b) + np.log1p(np.exp(-np.abs(a - b)))


def _bcjr_total_numpy(next_state, incoming_state, incoming_input, out_pm,
                      tail_input, ch_steps, apriori):
    n_steps = ch_steps.shape[0]
    n_states = next_state.shape[0]
    m_info = apriori.shape[0]

    gamma = 0.5 * np.einsum("suj,tj->tsu", out_pm, ch_steps)
    upm = np.array([-1.0, 1.0])
    gamma[:m_info] += 0.5 * apriori[:, None, None] * upm
    if n_steps > m_info:
        blocked = np.ones((n_states, 2), dtype=bool)
        blocked[np.arange(n_states), tail_input] = False
        gamma[m_info:, blocked] = _NEG

    alpha = np.empty((n_steps + 1, n_states))
    alpha[0] = _NEG
    alpha[0, 0] = 0.0
    for t in range(n_steps):
        cand = alpha[t][incoming_state] + gamma[t][incoming_state, incoming_input]
        a = _logsumexp_pair(cand[:, 0], cand[:, 1])
        alpha[t + 1] = a - a.max()

    beta = np.empty((n_steps + 1, n_states))
    beta[n_steps] = _NEG
    beta[n_steps, 0] = 0.0
    for t in range(n_steps - 1, -1, -1):
        cand = beta[t + 1][next_state] + gamma[t]
        b = _logsumexp_pair(cand[:, 0], cand[:, 1])
        beta[t] = b - b.max()

    total = np.empty(m_info)
    for t in range(m_info):
        val = alpha[t][:, None] + gamma[t] + beta[t + 1][next_state]
        peak = val.max(axis=0)
        lse = peak + np.log(np.exp(val - peak).sum(axis=0))
        total[t] = lse[1] - lse[0]
    return total


_bcjr_total = _backend.jit_or_fallback(_bcjr_total_loops, _bcjr_total_numpy)


def _check_lengths(trellis, ch_llrs, apriori):
    m = apriori.shape[0]
    expected = trellis.n_out * (m + trellis.memory)
    if ch_llrs.shape[0] != expected:
        raise ValueError(
            f"channel LLR length {ch_llrs.shape[0]} != {expected} "
            f"for M={m}, memory={trellis.memory}, n_out={trellis.n_out}"
        )
    return m


def bcjr_app(trellis, ch_llrs, apriori):
    """Total a-posteriori LLR of each info bit (unclipped)."""
    ch_llrs = np.asarray(ch_llrs, dtype=np.float64)
    apriori = np.asarray(apriori, dtype=np.float64)
    m = _check_lengths(trellis, ch_llrs, apriori)
    steps = ch_llrs.reshape(m + trellis.memory, trellis.n_out)
    return _bcjr_total(
        trellis.next_state, trellis.incoming_state, trellis.incoming_input,
        trellis.out_pm, trellis.tail_input, steps, apriori,
    )


def bcjr_extrinsic(trellis, ch_llrs, apriori, clip=LLR_CLIP):
    """Extrinsic LLRs: total APP minus a-priori minus systematic channel LLR."""
    ch_llrs = np.asarray(ch_llrs, dtype=np.float64)
    apriori = np.asarray(apriori, dtype=np.float64)
    m = _check_lengths(trellis, ch_llrs, apriori)
    total = bcjr_app(trellis, ch_llrs, apriori)
    systematic = ch_llrs.reshape(m + trellis.memory, trellis.n_out)[:m, 0]
    return clip_llr(total - apriori - systematic, clip)
