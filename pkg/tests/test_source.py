import numpy as np
import pytest

from turbocs import streams
from turbocs.source import (
    QuantizerNoise,
    SourceParams,
    load_array,
    measure,
    one_bit_quantize,
    prior_moments,
    sample_measurement_matrix,
    sample_sparse_signal,
    save_array,
)


def rng(*path):
    return streams.substream(1234, *path)


def test_params_validation():
    with pytest.raises(ValueError):
        SourceParams(0, 0.5)
    with pytest.raises(ValueError):
        SourceParams(10, 0.0)
    with pytest.raises(ValueError):
        SourceParams(10, 1.5)


def test_prior_moments_unit_variance_for_all_rho():
    for rho in (0.01, 0.5, 1.0):
        mean, var = prior_moments(SourceParams(100, rho))
        assert mean == 0.0
        assert var == 1.0


def test_dense_signal_has_no_zeros():
    x = sample_sparse_signal(SourceParams(10000, 1.0), rng(0))
    assert np.all(x != 0)


def test_sparse_signal_statistics():
    # paper-scale source: expected 10 non-zeros per block, unit variance
    params = SourceParams(1000, 0.01)
    blocks = np.stack([sample_sparse_signal(params, rng(1, i)) for i in range(400)])
    count = (blocks != 0).mean()
    # empirical sparsity within 3 standard errors of rho
    se = np.sqrt(0.01 * 0.99 / blocks.size)
    assert abs(count - 0.01) < 3 * se
    assert abs(blocks.var() - 1.0) < 0.05


def test_signal_determinism():
    params = SourceParams(50, 0.2)
    a = sample_sparse_signal(params, rng(2))
    b = sample_sparse_signal(params, rng(2))
    np.testing.assert_array_equal(a, b)


def test_matrix_entry_variance():
    phi = sample_measurement_matrix(500, 1000, rng(3))
    assert phi.shape == (500, 1000)
    assert abs(phi.var() - 1.0 / 500) < 0.05 / 500


def test_matrix_single_row_unit_variance():
    phi = sample_measurement_matrix(1, 100000, rng(4))
    assert abs(phi.var() - 1.0) < 0.02


def test_matrix_determinism():
    a = sample_measurement_matrix(5, 7, rng(5))
    b = sample_measurement_matrix(5, 7, rng(5))
    np.testing.assert_array_equal(a, b)


def test_measure_hand_example():
    phi = np.array([[1.0, 2.0], [3.0, 4.0]])
    y = measure(phi, np.array([1.0, -1.0]))
    np.testing.assert_array_equal(y, [-1.0, -1.0])


def test_measure_zero_cases():
    phi = sample_measurement_matrix(3, 5, rng(6))
    np.testing.assert_array_equal(measure(phi, np.zeros(5)), np.zeros(3))
    np.testing.assert_array_equal(measure(np.zeros((3, 5)), np.ones(5)), np.zeros(3))


def test_measure_dimension_mismatch():
    with pytest.raises(ValueError):
        measure(np.zeros((3, 5)), np.zeros(4))


def test_measure_linearity():
    phi = sample_measurement_matrix(20, 40, rng(7))
    x1 = sample_sparse_signal(SourceParams(40, 0.3), rng(8))
    x2 = sample_sparse_signal(SourceParams(40, 0.3), rng(9))
    lhs = measure(phi, 2.5 * x1 - 1.5 * x2)
    rhs = 2.5 * measure(phi, x1) - 1.5 * measure(phi, x2)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)


def test_quantizer_signs_and_zero_tie():
    b = one_bit_quantize(np.array([0.3, -2.0, 0.0]))
    np.testing.assert_array_equal(b, [1.0, -1.0, 1.0])


def test_quantizer_odd_symmetry():
    y = sample_sparse_signal(SourceParams(1000, 1.0), rng(10))
    y = y[y != 0]
    np.testing.assert_array_equal(one_bit_quantize(-y), -one_bit_quantize(y))


def test_quantizer_noise_symmetry():
    noise = QuantizerNoise(1.0)
    b = one_bit_quantize(np.zeros(200000), noise, rng(11))
    assert abs((b > 0).mean() - 0.5) < 0.005


def test_quantizer_noise_needs_rng():
    with pytest.raises(ValueError):
        one_bit_quantize(np.zeros(4), QuantizerNoise(1.0))


def test_serialization_round_trip_matrix(tmp_path):
    phi = sample_measurement_matrix(6, 9, rng(12))
    path = tmp_path / "phi.tcs"
    save_array(path, phi)
    np.testing.assert_array_equal(load_array(path), phi)
    raw = path.read_bytes()
    assert raw[:4] == b"TCS1"
    assert int.from_bytes(raw[4:8], "little") == 6
    assert int.from_bytes(raw[8:12], "little") == 9
    assert len(raw) == 12 + 8 * 54


def test_serialization_round_trip_vector(tmp_path):
    x = sample_sparse_signal(SourceParams(17, 0.4), rng(13))
    path = tmp_path / "x.tcs"
    save_array(path, x)
    loaded = load_array(path)
    assert loaded.ndim == 1
    np.testing.assert_array_equal(loaded, x)


def test_serialization_bad_magic(tmp_path):
    path = tmp_path / "bad.tcs"
    path.write_bytes(b"NOPE" + bytes(8))
    with pytest.raises(ValueError):
        load_array(path)
