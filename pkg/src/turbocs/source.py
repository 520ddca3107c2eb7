"""Sparse-source model, Gaussian measurement and 1-bit quantization.

The source emits length-N blocks whose elements are independently zero with
probability 1-rho and N(0, 1/rho) otherwise, so every block has unit element
variance regardless of rho.  Measurement is y = Phi x with Phi i.i.d.
N(0, 1/M); the encoder output is the element-wise sign of y (plus optional
pre-quantization noise), i.e. M bits for N reals.
"""

import struct
from dataclasses import dataclass

import numpy as np

_MAGIC = b"TCS1"


@dataclass(frozen=True)
class SourceParams:
    """Block length and per-element non-zero probability."""

    n: int
    rho: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must be in (0, 1], got {self.rho}")


@dataclass(frozen=True)
class QuantizerNoise:
    """Variance of additive noise ahead of the sign quantizer (default 0)."""

    sigma_e_sq: float = 0.0

    def __post_init__(self):
        if self.sigma_e_sq < 0:
            raise ValueError("sigma_e_sq must be >= 0")


def prior_moments(params):
    """Mean and variance of a source element: (0, rho * 1/rho) = (0, 1)."""
    return 0.0, params.rho * (1.0 / params.rho)


def sample_sparse_signal(params, rng):
    """Draw one source block: zeros with prob 1-rho, else N(0, 1/rho)."""
    mask = rng.random(params.n) < params.rho
    values = rng.normal(0.0, np.sqrt(1.0 / params.rho), size=params.n)
    return np.where(mask, values, 0.0)


def sample_measurement_matrix(m, n, rng):
    """Draw an M x N matrix with i.i.d. N(0, 1/M) entries."""
    if m < 1 or n < 1:
        raise ValueError("matrix dimensions must be >= 1")
    return rng.normal(0.0, 1.0 / np.sqrt(m), size=(m, n))


def measure(phi, x):
    """Exact linear measurement y = Phi x."""
    phi = np.asarray(phi)
    x = np.asarray(x)
    if phi.ndim != 2 or phi.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: Phi {phi.shape} vs x {x.shape}")
    return phi @ x


def one_bit_quantize(y, noise=QuantizerNoise(), rng=None):
    """Sign quantizer b = sign(y + e); sign(0) is +1 (the +1 decision cell
    is the closed half-line [0, inf))."""
    y = np.asarray(y, dtype=np.float64)
    if noise.sigma_e_sq > 0:
        if rng is None:
            raise ValueError("rng required when sigma_e_sq > 0")
        y = y + rng.normal(0.0, np.sqrt(noise.sigma_e_sq), size=y.shape)
    return np.where(y >= 0, 1.0, -1.0)


def save_array(path, arr):
    """Write a vector or matrix as magic 'TCS1', u32 rows, u32 cols (both
    little-endian) followed by row-major little-endian float64 values."""
    arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    m, n = arr.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", m, n))
        fh.write(arr.astype("<f8").tobytes(order="C"))


def load_array(path):
    """Read a file written by save_array; 1 x n files come back as vectors."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r} in {path}")
        m, n = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(8 * m * n), dtype="<f8")
    if data.size != m * n:
        raise ValueError(f"truncated file {path}: expected {m * n} values")
    arr = data.reshape(m, n).astype(np.float64)
    return arr[0] if m == 1 else arr
