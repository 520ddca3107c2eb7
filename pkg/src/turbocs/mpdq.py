"""Soft-in/soft-out 1-bit message-passing de-quantizer.

A GAMP iteration over the measurement model b = sign(Phi x) where the sign
of each measurement is known only through a probability P(b=+1).  The
factor update takes moments of the cavity Gaussian restricted to the two
sign cells, reweighted by the decoder probabilities fused with a tempered
power of the cavity cell masses (CAVITY_TEMPER below).  The variable update
is the scalar MMSE denoiser of the Bernoulli-Gaussian prior.  After the
iteration stops, the estimated measurements y = Phi x_hat are treated as
independent Gaussians and squashed through the upper-tail normal integral
to produce updated bit probabilities.

Stability: a noiseless sign channel makes plain GAMP oscillate or diverge
(confident cavities fight half-confident decoder inputs and the mean kicks
grow without bound).  Two measures keep the iteration sane without changing
the update character:
  * tempered cavity fusion in the factor weights (see above), which bounds
    the drag a half-confident input can exert on a confident cavity;
  * the returned estimate is the iterate with the best joint score
    (soft-sign evidence plus Bernoulli-Gaussian prior evidence), not the
    last one, so transient oscillation cannot corrupt the output.

The scalar moment evaluations are the hot inner loop (M + N per sweep);
they exist as numba kernels and as vectorised scipy fallbacks.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _backend
from .softbits import clamp_prob, llr_to_prob

VAR_FLOOR = 1e-12

# Exponent on the cavity cell masses inside the factor weights: 1 recovers
# the exact posterior fusion, 0 would use the decoder probabilities alone
# (which diverges).  The value trades first-pass reconstruction quality
# against turbo-loop headroom; see the factor update notes above.
CAVITY_TEMPER = 0.5

# Below this standardised truncation point the cut tail is beyond 30 sigma
# and the truncated moments equal the untruncated ones to ~1e-196.
_TRUNC_NEGLIGIBLE = -30.0

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_LOG_2PI = math.log(2.0 * math.pi)

if _backend.USE_NUMBA:
    from numba import njit as _njit

    def _jit(fn):
        return _njit(cache=True)(fn)
else:

    def _jit(fn):
        return fn


@dataclass(frozen=True)
class MpdqConfig:
    """Inner-loop controls: iteration cap, relative tolerance on x_hat, and
    the damping factor applied to the s and x updates (1 = off)."""

    max_inner_iters: int = 100
    tol: float = 1e-6
    damping: float = 1.0

    def __post_init__(self):
        if self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must be in (0, 1]")


@dataclass
class MpdqState:
    """All iterates of one de-quantizer run."""

    x_hat: np.ndarray
    v_x: np.ndarray
    s_hat: np.ndarray
    v_s: np.ndarray
    p_hat: np.ndarray
    v_p: np.ndarray
    r_hat: np.ndarray
    v_r: np.ndarray
    t: int


@dataclass(frozen=True)
class SoftMeasurementOutput:
    """Estimated measurement moments and the resulting bit probabilities."""

    y_hat: np.ndarray
    v_y: np.ndarray
    p_plus: np.ndarray


class MpdqDivergenceError(RuntimeError):
    """GAMP produced non-finite iterates even after the damping retry."""

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


# --- scalar loop kernels (numba when enabled) ---------------------------

@_jit
def _erfcx_scalar(x):
    # Valid for x >= -21.3 (callers guard the far-negative range).
    if x < 6.0:
        return math.exp(x * x) * math.erfc(x)
    # Asymptotic series 1/(x sqrt(pi)) * sum_k (-1)^k (2k-1)!! / (2x^2)^k;
    # terms fall below 1e-18 within ~12 iterations for x >= 6.
    inv2x2 = 1.0 / (2.0 * x * x)
    term = 1.0
    total = 1.0
    for k in range(1, 26):
        term *= -(2.0 * k - 1.0) * inv2x2
        total += term
        if abs(term) < 1e-18:
            break
    return total / (x * math.sqrt(math.pi))


@_jit
def _log_ndtr_scalar(x):
    # log of the standard normal CDF, stable in both tails.
    if x >= 0.0:
        return math.log1p(-0.5 * math.erfc(x * _INV_SQRT2))
    t = -x * _INV_SQRT2
    return math.log(0.5 * _erfcx_scalar(t)) - t * t


@_jit
def _trunc_pos_scalar(mu, var):
    # Moments of N(mu, var) conditioned on [0, inf).
    sigma = math.sqrt(var)
    a = -mu / sigma
    if a < _TRUNC_NEGLIGIBLE:
        return mu, var
    lam = _SQRT_2_OVER_PI / _erfcx_scalar(a * _INV_SQRT2)
    mean = mu + sigma * lam
    v = var * (1.0 + a * lam - lam * lam)
    if v < 0.0:
        v = 0.0
    return mean, v


@_jit
def _mixed_moments_scalar(p_plus, p_hat, v_p, temper):
    # Moments of the two-piece density on z ~ N(p_hat, v_p): cell weights
    # proportional to P(b) times the cavity cell mass raised to ``temper``.
    e_pos, v_pos = _trunc_pos_scalar(p_hat, v_p)
    e_mirror, v_neg = _trunc_pos_scalar(-p_hat, v_p)
    e_neg = -e_mirror
    if p_plus >= 1.0:
        w_pos = 1.0
    elif p_plus <= 0.0:
        w_pos = 0.0
    else:
        s = p_hat / math.sqrt(v_p)
        log_odds = (
            math.log1p(-p_plus) - math.log(p_plus)
            + temper * (_log_ndtr_scalar(-s) - _log_ndtr_scalar(s))
        )
        if log_odds > 0.0:
            e = math.exp(-log_odds)
            w_pos = e / (1.0 + e)
        else:
            w_pos = 1.0 / (1.0 + math.exp(log_odds))
    w_neg = 1.0 - w_pos
    ez = w_pos * e_pos + w_neg * e_neg
    second = w_pos * (v_pos + e_pos * e_pos) + w_neg * (v_neg + e_neg * e_neg)
    vz = second - ez * ez
    if vz < 0.0:
        vz = 0.0
    return ez, vz


@_jit
def _bg_posterior_scalar(r, v_r, rho):
    # MMSE denoiser for x ~ rho N(0, 1/rho) + (1-rho) delta_0, r = x + w.
    if rho >= 1.0:
        return r / (1.0 + v_r), v_r / (1.0 + v_r)
    pv = 1.0 / rho
    s_var = pv + v_r
    log_odds = (
        math.log((1.0 - rho) / rho)
        + 0.5 * math.log(s_var / v_r)
        - 0.5 * r * r * (1.0 / v_r - 1.0 / s_var)
    )
    if log_odds > 0.0:
        e = math.exp(-log_odds)
        pi = e / (1.0 + e)
    else:
        pi = 1.0 / (1.0 + math.exp(log_odds))
    m1 = r * pv / s_var
    v1 = pv * v_r / s_var
    x = pi * m1
    vx = pi * (v1 + m1 * m1) - x * x
    if vx < 0.0:
        vx = 0.0
    return x, vx


@_jit
def _factor_update_loops(p_plus, p_hat, v_p, temper):
    n = p_plus.shape[0]
    s_hat = np.empty(n)
    v_s = np.empty(n)
    for i in range(n):
        ez, vz = _mixed_moments_scalar(p_plus[i], p_hat[i], v_p[i], temper)
        s_hat[i] = (ez - p_hat[i]) / v_p[i]
        v = (1.0 - vz / v_p[i]) / v_p[i]
        if v < VAR_FLOOR:
            v = VAR_FLOOR
        v_s[i] = v
    return s_hat, v_s


@_jit
def _variable_update_loops(r_hat, v_r, rho):
    n = r_hat.shape[0]
    x_hat = np.empty(n)
    v_x = np.empty(n)
    for i in range(n):
        x_hat[i], v_x[i] = _bg_posterior_scalar(r_hat[i], v_r[i], rho)
    return x_hat, v_x


# --- vectorised numpy fallbacks ------------------------------------------

def _trunc_pos_numpy(mu, var):
    sigma = np.sqrt(var)
    a = -mu / sigma
    with np.errstate(over="ignore"):
        lam = np.where(
            a < _TRUNC_NEGLIGIBLE,
            0.0,
            _SQRT_2_OVER_PI / special.erfcx(a * _INV_SQRT2),
        )
    mean = mu + sigma * lam
    v = np.maximum(var * (1.0 + a * lam - lam * lam), 0.0)
    return np.where(a < _TRUNC_NEGLIGIBLE, mu, mean), np.where(a < _TRUNC_NEGLIGIBLE, var, v)


def _mixed_moments_numpy(p_plus, p_hat, v_p, temper):
    p_plus = np.asarray(p_plus, dtype=np.float64)
    e_pos, v_pos = _trunc_pos_numpy(p_hat, v_p)
    e_mirror, v_neg = _trunc_pos_numpy(-p_hat, v_p)
    e_neg = -e_mirror
    s = p_hat / np.sqrt(v_p)
    inner = np.clip(p_plus, 1e-300, 1.0 - 1e-16)
    log_odds = (
        np.log1p(-inner) - np.log(inner)
        + temper * (special.log_ndtr(-s) - special.log_ndtr(s))
    )
    w_pos = special.expit(-log_odds)
    w_pos = np.where(p_plus >= 1.0, 1.0, np.where(p_plus <= 0.0, 0.0, w_pos))
    w_neg = 1.0 - w_pos
    ez = w_pos * e_pos + w_neg * e_neg
    second = w_pos * (v_pos + e_pos**2) + w_neg * (v_neg + e_neg**2)
    vz = np.maximum(second - ez**2, 0.0)
    return ez, vz


def _factor_update_numpy(p_plus, p_hat, v_p, temper):
    ez, vz = _mixed_moments_numpy(p_plus, p_hat, v_p, temper)
    s_hat = (ez - p_hat) / v_p
    v_s = np.maximum((1.0 - vz / v_p) / v_p, VAR_FLOOR)
    return s_hat, v_s


def _variable_update_numpy(r_hat, v_r, rho):
    if rho >= 1.0:
        return r_hat / (1.0 + v_r), v_r / (1.0 + v_r)
    pv = 1.0 / rho
    s_var = pv + v_r
    log_odds = (
        math.log((1.0 - rho) / rho)
        + 0.5 * np.log(s_var / v_r)
        - 0.5 * r_hat**2 * (1.0 / v_r - 1.0 / s_var)
    )
    pi = special.expit(-log_odds)
    m1 = r_hat * pv / s_var
    v1 = pv * v_r / s_var
    x_hat = pi * m1
    v_x = np.maximum(pi * (v1 + m1**2) - x_hat**2, 0.0)
    return x_hat, v_x


if _backend.USE_NUMBA:
    _factor_update_arrays = _factor_update_loops
    _variable_update_arrays = _variable_update_loops
else:
    _factor_update_arrays = _factor_update_numpy
    _variable_update_arrays = _variable_update_numpy


# --- public scalar/array operations ---------------------------------------

def truncated_gaussian_moments(mean, var, side):
    """Mean and variance of N(mean, var) restricted to the sign cell of
    ``side``: [0, inf) for +1, (-inf, 0) for -1."""
    if np.any(np.asarray(var) <= 0):
        raise ValueError("var must be > 0")
    if side not in (+1, -1):
        raise ValueError("side must be +1 or -1")
    mean = np.asarray(mean, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    if side == +1:
        e, v = _trunc_pos_numpy(mean, var)
    else:
        e, v = _trunc_pos_numpy(-mean, var)
        e = -e
    if e.ndim == 0:
        return float(e), float(v)
    return e, v


def mixed_bit_moments(p_plus, p_hat, v_p, temper=CAVITY_TEMPER):
    """Moments of z ~ N(p_hat, v_p) restricted per sign cell and reweighted
    by the decoder probabilities (tempered cavity fusion)."""
    if np.any(np.asarray(v_p) <= 0):
        raise ValueError("v_p must be > 0")
    ez, vz = _mixed_moments_numpy(
        np.asarray(p_plus, dtype=np.float64),
        np.asarray(p_hat, dtype=np.float64),
        np.asarray(v_p, dtype=np.float64),
        temper,
    )
    if ez.ndim == 0:
        return float(ez), float(vz)
    return ez, vz


def factor_update(p_plus, p_hat, v_p, temper=CAVITY_TEMPER):
    """Factor-node update: s = (E(z) - p_hat)/v_p, v_s = (1 - var(z)/v_p)/v_p
    with v_s floored at VAR_FLOOR."""
    if np.any(np.asarray(v_p) <= 0):
        raise ValueError("v_p must be > 0")
    s, vs = _factor_update_numpy(
        np.asarray(p_plus, dtype=np.float64),
        np.asarray(p_hat, dtype=np.float64),
        np.asarray(v_p, dtype=np.float64),
        temper,
    )
    if s.ndim == 0:
        return float(s), float(vs)
    return s, vs


def variable_update(r_hat, v_r, rho):
    """Posterior mean/variance of the Bernoulli-Gaussian prior observed
    through r = x + N(0, v_r)."""
    if np.any(np.asarray(v_r) <= 0):
        raise ValueError("v_r must be > 0")
    x, vx = _variable_update_numpy(
        np.asarray(r_hat, dtype=np.float64),
        np.asarray(v_r, dtype=np.float64),
        float(rho),
    )
    if x.ndim == 0:
        return float(x), float(vx)
    return x, vx


def soft_output(phi, x_hat, v_x, phi_sq=None):
    """Measurement moments y = Phi x_hat, v_y = (Phi o Phi) v_x and the
    updated probabilities P(b=+1) = Q(-y/sqrt(v_y))."""
    if np.any(np.asarray(v_x) < 0):
        raise ValueError("v_x must be >= 0")
    if phi_sq is None:
        phi_sq = phi * phi
    y_hat = phi @ x_hat
    v_y = phi_sq @ v_x
    p = np.empty_like(y_hat)
    positive = v_y > 0
    p[positive] = 0.5 * special.erfc(-y_hat[positive] / np.sqrt(v_y[positive]) * _INV_SQRT2)
    p[~positive] = np.where(y_hat[~positive] >= 0, 1.0, 0.0)
    return SoftMeasurementOutput(y_hat=y_hat, v_y=v_y, p_plus=p)


def _log_gauss(x, var):
    return -0.5 * (_LOG_2PI + np.log(var) + x * x / var)


def _joint_score(p_plus, y_hat, v_y_scalar, x_hat, v_x, rho):
    """Soft-sign evidence of the estimated measurements plus the prior
    evidence of the estimate; ranks iterates for the returned solution."""
    s = y_hat / math.sqrt(max(v_y_scalar, VAR_FLOOR))
    fit = np.sum(
        np.logaddexp(
            np.log(p_plus) + special.log_ndtr(s),
            np.log1p(-p_plus) + special.log_ndtr(-s),
        )
    )
    vx = np.maximum(v_x, VAR_FLOOR)
    if rho >= 1.0:
        prior = np.sum(_log_gauss(x_hat, 1.0 + vx))
    else:
        prior = np.sum(
            np.logaddexp(
                math.log(rho) + _log_gauss(x_hat, 1.0 / rho + vx),
                math.log1p(-rho) + _log_gauss(x_hat, vx),
            )
        )
    return float(fit + prior)


def run_mpdq(phi, apriori_llrs, rho, cfg=MpdqConfig(), trace=None):
    """Run the de-quantizer until x_hat stabilises or the iteration cap.

    Returns (x_hat, v_x, SoftMeasurementOutput) for the best-scoring
    iterate.  A non-finite iterate triggers one automatic restart with
    damping 0.9 (when damping was off); if that also fails,
    MpdqDivergenceError carries the last finite state.
    """
    phi = np.asarray(phi, dtype=np.float64)
    apriori_llrs = np.asarray(apriori_llrs, dtype=np.float64)
    m, n = phi.shape
    if apriori_llrs.shape[0] != m:
        raise ValueError(f"apriori length {apriori_llrs.shape[0]} != M={m}")
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must be in (0, 1], got {rho}")

    p_plus = clamp_prob(llr_to_prob(apriori_llrs))
    phi_sq = phi * phi

    state, ok = _gamp_attempt(phi, phi_sq, p_plus, rho, cfg, cfg.damping, trace)
    if not ok and cfg.damping == 1.0:
        state, ok = _gamp_attempt(phi, phi_sq, p_plus, rho, cfg, 0.9, trace)
    if not ok:
        raise MpdqDivergenceError(
            "non-finite GAMP iterates after damping retry", state
        )
    out = soft_output(phi, state.x_hat, state.v_x, phi_sq=phi_sq)
    return state.x_hat, state.v_x, out


def _gamp_attempt(phi, phi_sq, p_plus, rho, cfg, damping, trace):
    """One GAMP run with uniform variances.

    Returns (state, finished): ``state`` holds the best-scoring iterate's
    x_hat/v_x together with the final messages; ``finished`` is False when
    a non-finite iterate appeared (state then holds the last finite one).
    """
    m, n = phi.shape
    # Mean measurement variance, used as the scalar v_y inside the score.
    col_w = phi_sq.sum(axis=0) / m

    x_hat = np.zeros(n)
    v_x = np.ones(n)
    s_hat = np.zeros(m)
    v_s = np.full(m, VAR_FLOOR)
    p_hat = np.zeros(m)
    v_p = np.ones(m)
    r_hat = np.zeros(n)
    v_r = np.ones(n)
    lam = damping

    best_score = -np.inf
    best = (x_hat, v_x)
    t = 0

    for t in range(1, cfg.max_inner_iters + 1):
        v_p = np.maximum(phi_sq @ v_x, VAR_FLOOR)
        phi_x = phi @ x_hat
        p_hat = phi_x - v_p * s_hat

        # phi_x is Phi times the current iterate: score it before updating.
        score = _joint_score(p_plus, phi_x, max(float(col_w @ v_x), VAR_FLOOR),
                             x_hat, v_x, rho)
        if score > best_score:
            best_score = score
            best = (x_hat, v_x)

        s_new, v_s = _factor_update_arrays(p_plus, p_hat, v_p, CAVITY_TEMPER)
        s_hat = lam * s_new + (1.0 - lam) * s_hat
        v_r = 1.0 / np.maximum(phi_sq.T @ v_s, VAR_FLOOR)
        r_hat = x_hat + v_r * (phi.T @ s_hat)
        x_new, v_x_new = _variable_update_arrays(r_hat, v_r, rho)
        v_x_new = np.maximum(v_x_new, VAR_FLOOR)
        x_new = lam * x_new + (1.0 - lam) * x_hat

        finite = (
            np.isfinite(x_new).all()
            and np.isfinite(v_x_new).all()
            and np.isfinite(s_hat).all()
            and np.isfinite(r_hat).all()
        )
        if not finite:
            state = MpdqState(best[0], best[1], s_hat, v_s, p_hat, v_p,
                              r_hat, v_r, t)
            return state, False

        residual = float(
            np.linalg.norm(x_new - x_hat) / (np.linalg.norm(x_hat) + 1e-30)
        )
        x_hat, v_x = x_new, v_x_new
        if trace is not None:
            trace.write(
                f"{t},{np.linalg.norm(x_hat):.6g},{v_x.mean():.6g},{residual:.6g}\n"
            )
        if residual < cfg.tol:
            break

    # The loop scores iterates one step behind; score the final one too.
    score = _joint_score(p_plus, phi @ x_hat, max(float(col_w @ v_x), VAR_FLOOR),
                         x_hat, v_x, rho)
    if score > best_score:
        best = (x_hat, v_x)
    state = MpdqState(best[0], best[1], s_hat, v_s, p_hat, v_p, r_hat, v_r, t)
    return state, True
