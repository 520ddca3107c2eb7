"""Recursive systematic convolutional code, BPSK mapping and AWGN channel.

Generator polynomials are given in octal with the most-significant binary
digit as the tap on the current symbol: 23 octal = 10011 binary means
q(D) = 1 + D^3 + D^4 (memory 4).  The shipped code is the rate-1/3
systematic encoder with parity generators 37/23 and 33/23, i.e. 16 states.

Encoding starts from the all-zero state and appends ``memory`` tail input
bits that drive the register back to zero, so a length-M info block maps to
(1 + n_parity) * (M + memory) coded bits.  Bits travel as {-1, +1}
throughout; binary 0/1 exists only inside the register arithmetic.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class CodePolynomials:
    """Feedforward (parity) and feedback generators in octal."""

    feedforward: tuple = (0o37, 0o33)
    feedback: int = 0o23

    def __post_init__(self):
        # The current-symbol tap is the MSB under this convention, so any
        # valid integer already has it set; only the memory needs checking.
        if self.feedback < 1 or self.feedback.bit_length() < 2:
            raise ValueError(f"feedback polynomial {oct(self.feedback)} needs memory >= 1")
        nu = self.memory
        if not self.feedforward:
            raise ValueError("at least one feedforward polynomial required")
        for ff in self.feedforward:
            if ff < 1 or ff.bit_length() > nu + 1:
                raise ValueError(
                    f"feedforward polynomial {oct(ff)} exceeds memory {nu}"
                )

    @property
    def memory(self):
        return self.feedback.bit_length() - 1

    @property
    def n_out(self):
        """Coded bits per info bit (systematic + parities)."""
        return 1 + len(self.feedforward)


def _taps_to_masks(poly, nu):
    """Split a polynomial into (current-symbol tap, state mask).

    State bit (nu - i) holds the register symbol delayed by i steps, so the
    tap on D^i maps to state bit (nu - i) for i = 1..nu.
    """
    bits = [(poly >> (nu - i)) & 1 for i in range(nu + 1)]  # q_0 .. q_nu
    current = bits[0]
    mask = 0
    for i in range(1, nu + 1):
        if bits[i]:
            mask |= 1 << (nu - i)
    return current, mask


def _parity(x):
    return bin(x).count("1") & 1


@dataclass(frozen=True)
class Trellis:
    """Tabulated state machine of a systematic recursive encoder.

    next_state[s, u] and out_pm[s, u, :] (outputs as +-1, systematic first)
    describe the transition from state s under input bit u; tail_input[s] is
    the input that zeroes the register symbol.  incoming_state/input list
    the exactly-two predecessors of every state.
    """

    memory: int
    n_out: int
    next_state: np.ndarray
    out_pm: np.ndarray
    tail_input: np.ndarray
    incoming_state: np.ndarray
    incoming_input: np.ndarray
    polynomials: CodePolynomials = field(compare=False)

    @property
    def num_states(self):
        return 1 << self.memory


def build_trellis(polys=CodePolynomials()):
    """Tabulate the trellis of a systematic recursive encoder."""
    nu = polys.memory
    num_states = 1 << nu
    fb_current, fb_mask = _taps_to_masks(polys.feedback, nu)
    assert fb_current == 1
    ff_masks = [_taps_to_masks(ff, nu) for ff in polys.feedforward]

    n_out = polys.n_out
    next_state = np.zeros((num_states, 2), dtype=np.int64)
    out_pm = np.zeros((num_states, 2, n_out), dtype=np.float64)
    tail_input = np.zeros(num_states, dtype=np.int64)

    for s in range(num_states):
        fb = _parity(s & fb_mask)
        tail_input[s] = fb
        for u in (0, 1):
            w = u ^ fb
            next_state[s, u] = (s >> 1) | (w << (nu - 1))
            out_pm[s, u, 0] = 2 * u - 1
            for j, (cur, mask) in enumerate(ff_masks):
                bit = (cur & w) ^ _parity(s & mask)
                out_pm[s, u, 1 + j] = 2 * bit - 1

    incoming_state = np.zeros((num_states, 2), dtype=np.int64)
    incoming_input = np.zeros((num_states, 2), dtype=np.int64)
    counts = np.zeros(num_states, dtype=np.int64)
    for s in range(num_states):
        for u in (0, 1):
            t = next_state[s, u]
            incoming_state[t, counts[t]] = s
            incoming_input[t, counts[t]] = u
            counts[t] += 1
    assert (counts == 2).all()

    return Trellis(
        memory=nu,
        n_out=n_out,
        next_state=next_state,
        out_pm=out_pm,
        tail_input=tail_input,
        incoming_state=incoming_state,
        incoming_input=incoming_input,
        polynomials=polys,
    )


def coded_length(trellis, m):
    """Coded block size for an M-bit info block under terminated encoding."""
    return trellis.n_out * (m + trellis.memory)


def conv_encode(trellis, info_pm):
    """Encode a +-1 info block, appending the zero-driving tail."""
    info_pm = np.asarray(info_pm)
    m = info_pm.shape[0]
    u_bits = ((info_pm + 1) // 2).astype(np.int64)
    out = np.empty((m + trellis.memory, trellis.n_out), dtype=np.float64)
    s = 0
    for t in range(m):
        u = u_bits[t]
        out[t] = trellis.out_pm[s, u]
        s = trellis.next_state[s, u]
    for t in range(trellis.memory):
        u = trellis.tail_input[s]
        out[m + t] = trellis.out_pm[s, u]
        s = trellis.next_state[s, u]
    assert s == 0
    return out.reshape(-1)


@dataclass(frozen=True)
class ChannelParams:
    """SNR bookkeeping for BPSK over AWGN.

    E_b is normalised to 1, so N0 = sigma_c^2 = 10^(-snr_db/10).  Each coded
    symbol carries energy E_b * M / P and the real-sample noise variance is
    N0 / 2.
    """

    snr_db: float
    m: int
    p: int

    @property
    def sigma_c_sq(self):
        return 10.0 ** (-self.snr_db / 10.0)

    @property
    def symbol_amplitude(self):
        return np.sqrt(self.m / self.p)

    @property
    def noise_var(self):
        return self.sigma_c_sq / 2.0


def bpsk_modulate(coded_pm, params):
    """Scale +-1 code bits by the per-symbol amplitude."""
    return params.symbol_amplitude * np.asarray(coded_pm, dtype=np.float64)


def awgn_transmit(symbols, params, rng):
    """Add white Gaussian noise with per-sample variance N0/2."""
    symbols = np.asarray(symbols, dtype=np.float64)
    return symbols + rng.normal(0.0, np.sqrt(params.noise_var), size=symbols.shape)
