import numpy as np
import pytest

from turbocs import streams
from turbocs.app_decoder import bcjr_extrinsic, channel_llrs
from turbocs.channel_code import ChannelParams, awgn_transmit, bpsk_modulate, build_trellis, coded_length, conv_encode
from turbocs.mpdq import MpdqConfig, run_mpdq
from turbocs.source import SourceParams, measure, one_bit_quantize, sample_measurement_matrix, sample_sparse_signal
from turbocs.turbo import (
    SystemConfig,
    TurboConfig,
    aggregate_rsnr_db,
    rsnr,
    run_pipeline_block,
    snr_to_sigma,
    turbo_decode,
)


def make_block(seed, n=150, m=80, rho=0.05, snr_db=5.0):
    trellis = build_trellis()
    rng = streams.substream(seed, 0)
    x = sample_sparse_signal(SourceParams(n, rho), rng)
    phi = sample_measurement_matrix(m, n, rng)
    bits = one_bit_quantize(measure(phi, x))
    chan = ChannelParams(snr_db, m, coded_length(trellis, m))
    z = awgn_transmit(bpsk_modulate(conv_encode(trellis, bits), chan), chan, rng)
    return trellis, x, phi, bits, z


def test_snr_to_sigma():
    assert snr_to_sigma(0.0) == 1.0
    assert abs(snr_to_sigma(10.0) - 0.1) < 1e-15
    assert abs(snr_to_sigma(-1.0) - 10**0.1) < 1e-12
    assert abs(snr_to_sigma(-1.0) - 1.2589) < 1e-4


def test_rsnr_examples():
    x = np.array([1.0, 0.0])
    assert abs(rsnr(x, np.array([0.9, 0.0])) - 20.0) < 1e-12
    assert rsnr(x, x) == 100.0
    assert abs(rsnr(x, np.zeros(2))) < 1e-12


def test_rsnr_zero_block_rejected():
    with pytest.raises(ValueError):
        rsnr(np.zeros(3), np.ones(3))


def test_aggregate_rsnr_uses_energy_ratio():
    # two blocks, one reconstructed perfectly: the energy-ratio aggregate
    # differs from the mean of per-block dB values
    agg = aggregate_rsnr_db([1.0, 4.0], [0.1, 0.0])
    assert abs(agg - 10 * np.log10(5.0 / 0.1)) < 1e-12


def test_turbo_config_validation():
    with pytest.raises(ValueError):
        TurboConfig(n_turbo_iters=0)


def test_schedule_length_validation():
    trellis, x, phi, bits, z = make_block(70)
    cfg = TurboConfig(n_turbo_iters=3, snr_db=5.0, rho=0.05, schedule=[2.0])
    with pytest.raises(ValueError):
        turbo_decode(z, phi, trellis, cfg)


def test_iteration1_equals_standalone_bcjr():
    trellis, x, phi, bits, z = make_block(71)
    m = phi.shape[0]
    cfg = TurboConfig(n_turbo_iters=1, snr_db=5.0, rho=0.05)
    result = turbo_decode(z, phi, trellis, cfg, collect_llrs=True)
    chan = ChannelParams(5.0, m, coded_length(trellis, m))
    standalone = bcjr_extrinsic(trellis, channel_llrs(z, chan), np.zeros(m))
    np.testing.assert_array_equal(result.diagnostics.cd_ext_llrs[0], standalone)


def test_single_iteration_equals_open_loop_pipeline():
    trellis, x, phi, bits, z = make_block(72)
    m = phi.shape[0]
    cfg = TurboConfig(n_turbo_iters=1, snr_db=5.0, rho=0.05)
    result = turbo_decode(z, phi, trellis, cfg, truth=x)
    chan = ChannelParams(5.0, m, coded_length(trellis, m))
    ext = bcjr_extrinsic(trellis, channel_llrs(z, chan), np.zeros(m))
    x_hat, _, _ = run_mpdq(phi, ext, 0.05, MpdqConfig())
    np.testing.assert_array_equal(result.x_hats[0], x_hat)
    assert len(result.rsnr_db) == 1


def test_noiseless_channel_iterations_do_not_degrade():
    trellis, x, phi, bits, z = make_block(73, snr_db=60.0)
    cfg = TurboConfig(n_turbo_iters=4, snr_db=60.0, rho=0.05)
    result = turbo_decode(z, phi, trellis, cfg, truth=x)
    # channel effectively clean: iteration 1 sees the true bits already
    hard, _, _ = run_mpdq(phi, 30.0 * bits, 0.05)
    assert abs(result.rsnr_db[0] - rsnr(x, hard)) < 0.1
    for r in result.rsnr_db[1:]:
        assert r > result.rsnr_db[0] - 0.1


def test_determinism():
    trellis, x, phi, bits, z = make_block(74)
    cfg = TurboConfig(n_turbo_iters=3, snr_db=5.0, rho=0.05)
    r1 = turbo_decode(z, phi, trellis, cfg, truth=x)
    r2 = turbo_decode(z, phi, trellis, cfg, truth=x)
    for a, b in zip(r1.x_hats, r2.x_hats):
        np.testing.assert_array_equal(a, b)
    assert r1.rsnr_db == r2.rsnr_db


def test_result_lengths_match_iterations():
    trellis, x, phi, bits, z = make_block(75)
    cfg = TurboConfig(n_turbo_iters=5, snr_db=5.0, rho=0.05)
    result = turbo_decode(z, phi, trellis, cfg, truth=x, collect_llrs=True)
    assert len(result.x_hats) == 5
    assert len(result.rsnr_db) == 5
    assert len(result.diagnostics.cd_ext_llrs) == 5
    assert not result.diverged


def test_divergence_fills_remaining_iterations(monkeypatch):
    import turbocs.turbo as turbo_mod
    from turbocs.mpdq import MpdqDivergenceError, MpdqState

    trellis, x, phi, bits, z = make_block(76)
    n = phi.shape[1]
    calls = {"count": 0}
    real_run = turbo_mod.run_mpdq

    def flaky(*args, **kwargs):
        calls["count"] += 1
        if calls["count"] >= 2:
            state = MpdqState(np.ones(n), np.ones(n), None, None, None, None, None, None, 3)
            raise MpdqDivergenceError("boom", state)
        return real_run(*args, **kwargs)

    monkeypatch.setattr(turbo_mod, "run_mpdq", flaky)
    cfg = TurboConfig(n_turbo_iters=4, snr_db=5.0, rho=0.05)
    result = turbo_decode(z, phi, trellis, cfg, truth=x)
    assert result.diverged
    assert len(result.x_hats) == 4
    np.testing.assert_array_equal(result.x_hats[1], result.x_hats[3])


def test_run_pipeline_block_shapes():
    system = SystemConfig(n=150, m=80, rho=0.05, snr_db=5.0)
    block = run_pipeline_block(system, None, 2, streams.substream(77), collect_llrs=True)
    assert block.signal.shape == (150,)
    assert block.phi.shape == (80, 150)
    assert block.bits.shape == (80,)
    assert len(block.result.x_hats) == 2
    assert len(block.result.diagnostics.sd_raw_probs) == 2
