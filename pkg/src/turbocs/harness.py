"""Experiment driver: configuration, Monte Carlo sweeps, persistence.

Configs are flat ``key = value`` text (one key per line, ``#`` comments).
Every experiment is fully determined by (config, master seed): trials draw
from counter-derived sub-streams, so a trial's data is identical whether it
runs alone, in a sweep, or on a different worker count.
"""

import os
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import streams
from .calibration import calibrate_schedule, config_fingerprint, load_schedule, save_schedule
from .channel_code import ChannelParams, CodePolynomials, awgn_transmit, bpsk_modulate, coded_length, conv_encode
from .mpdq import MpdqConfig
from .source import SourceParams, measure, one_bit_quantize, sample_measurement_matrix, sample_sparse_signal
from .turbo import SystemConfig, TurboConfig, aggregate_rsnr_db, cached_trellis, turbo_decode


class ConfigError(Exception):
    """Bad config file or invalid field value (exit code 2)."""


class OutputError(Exception):
    """Failed write, carrying the offending path (exit code 4)."""

    def __init__(self, path, cause):
        super().__init__(f"cannot write {path}: {cause}")
        self.path = path


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    m: int
    rho: float
    snr_db_list: tuple
    trials: int
    turbo_iters: int = 6
    inner_iters_max: int = 100
    inner_tol: float = 1e-6
    training_blocks: int = 50
    code_ff: tuple = (0o37, 0o33)
    code_fb: int = 0o23
    llr_clip: float = 30.0
    histogram_bins: int = 64
    damping: float = 1.0
    seed: int = 0
    out_dir: str = "results"
    fixed_phi: bool = False
    use_calibration: bool = True

    def __post_init__(self):
        for name in ("n", "m", "trials", "turbo_iters", "inner_iters_max",
                     "training_blocks", "histogram_bins"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError(f"rho must be in (0, 1], got {self.rho}")
        if not self.snr_db_list:
            raise ConfigError("snr_db_list must be non-empty")
        if self.m >= self.n:
            raise ConfigError(f"m must be < n for compression, got m={self.m}, n={self.n}")
        if self.inner_tol <= 0:
            raise ConfigError(f"inner_tol must be > 0, got {self.inner_tol}")
        if not 0.0 < self.damping <= 1.0:
            raise ConfigError(f"damping must be in (0, 1], got {self.damping}")
        if self.llr_clip <= 0:
            raise ConfigError(f"llr_clip must be > 0, got {self.llr_clip}")

    def polynomials(self):
        return CodePolynomials(feedforward=self.code_ff, feedback=self.code_fb)

    def mpdq_config(self):
        return MpdqConfig(self.inner_iters_max, self.inner_tol, self.damping)

    def system(self, snr_db):
        return SystemConfig(
            n=self.n, m=self.m, rho=self.rho, snr_db=snr_db,
            polynomials=self.polynomials(), mpdq=self.mpdq_config(),
            llr_clip=self.llr_clip, histogram_bins=self.histogram_bins,
        )

    def fingerprint(self, snr_db):
        return config_fingerprint(
            self.n, self.m, self.rho, snr_db, self.turbo_iters,
            self.inner_iters_max, self.inner_tol, self.training_blocks,
            self.code_ff, self.code_fb, self.llr_clip, self.histogram_bins,
            self.damping, self.seed,
        )


_REQUIRED = ("n", "m", "rho", "snr_db_list", "trials")

_PARSERS = {
    "n": int, "m": int, "trials": int, "turbo_iters": int,
    "inner_iters_max": int, "training_blocks": int, "histogram_bins": int,
    "seed": int,
    "rho": float, "inner_tol": float, "llr_clip": float, "damping": float,
    "snr_db_list": lambda s: tuple(float(v) for v in s.split(",") if v.strip() != ""),
    "code_ff": lambda s: tuple(int(v, 8) for v in s.split(",") if v.strip() != ""),
    "code_fb": lambda s: int(s, 8),
    "out_dir": str,
    "fixed_phi": lambda s: {"true": True, "false": False}[s.lower()],
    "use_calibration": lambda s: {"true": True, "false": False}[s.lower()],
}


def load_config(path):
    """Parse and validate a flat key = value config file."""
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}")
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw.strip()!r}")
        key = key.strip()
        value = value.strip()
        if key not in _PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except (ValueError, KeyError):
            raise ConfigError(f"{path}:{lineno}: cannot parse {key} from {value!r}")
    for name in _REQUIRED:
        if name not in values:
            raise ConfigError(f"{path}: missing required field {name!r}")
    return ExperimentConfig(**values)


def quick_overrides(cfg):
    """Desk-scale variant for fast runs: N=200, M=100, 50 trials."""
    return replace(cfg, n=200, m=100, trials=50)


@dataclass
class TrialOutcome:
    trial: int
    signal_energy: float
    error_energies: list
    rsnr_db: list
    diverged: bool
    zero_block: bool


@dataclass
class MonteCarloResults:
    """Aggregated table rows plus the raw per-trial records."""

    table_rows: list = field(default_factory=list)
    trial_rows: list = field(default_factory=list)
    n_diverged: int = 0
    n_zero_blocks: int = 0
    schedules: dict = field(default_factory=dict)
    interrupted: bool = False


def run_trial(cfg, snr_idx, trial_idx, schedule):
    """One end-to-end realization; fully determined by (cfg.seed, indices)."""
    snr_db = cfg.snr_db_list[snr_idx]
    trellis = cached_trellis(cfg.polynomials())
    phi_slot = 0 if cfg.fixed_phi else trial_idx
    phi = sample_measurement_matrix(
        cfg.m, cfg.n,
        streams.substream(cfg.seed, streams.CTX_TRIAL, snr_idx, phi_slot, streams.MATRIX),
    )
    x = sample_sparse_signal(
        SourceParams(cfg.n, cfg.rho),
        streams.substream(cfg.seed, streams.CTX_TRIAL, snr_idx, trial_idx, streams.SIGNAL),
    )
    signal_energy = float(x @ x)
    if signal_energy == 0.0:
        return TrialOutcome(trial_idx, 0.0, [], [], False, True)
    bits = one_bit_quantize(measure(phi, x))
    chan = ChannelParams(snr_db, cfg.m, coded_length(trellis, cfg.m))
    z = awgn_transmit(
        bpsk_modulate(conv_encode(trellis, bits), chan), chan,
        streams.substream(cfg.seed, streams.CTX_TRIAL, snr_idx, trial_idx, streams.CHANNEL_NOISE),
    )
    tcfg = TurboConfig(
        n_turbo_iters=cfg.turbo_iters, mpdq=cfg.mpdq_config(), schedule=schedule,
        snr_db=snr_db, rho=cfg.rho, llr_clip=cfg.llr_clip,
    )
    result = turbo_decode(z, phi, trellis, tcfg, truth=x)
    err = [float(((xh - x) ** 2).sum()) for xh in result.x_hats]
    return TrialOutcome(trial_idx, signal_energy, err, result.rsnr_db, result.diverged, False)


def _worker_count():
    env = os.environ.get("TURBOCS_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return 1


def ensure_schedule(cfg, snr_idx, log=None):
    """Load the persisted schedule for one SNR, fitting and saving it first
    if absent.  Returns None when calibration is disabled."""
    if not cfg.use_calibration:
        return None
    snr_db = cfg.snr_db_list[snr_idx]
    fp = cfg.fingerprint(snr_db)
    cal_dir = os.path.join(cfg.out_dir, "calibration")
    path = os.path.join(cal_dir, f"schedule_{fp}.txt")
    if os.path.exists(path):
        schedule = load_schedule(path)
        if schedule.config_hash == fp and len(schedule) >= cfg.turbo_iters:
            return schedule
    if log:
        log(f"calibrating snr={snr_db:g} dB (T={cfg.training_blocks}, {cfg.turbo_iters} iters)")
    rng = streams.substream(cfg.seed, streams.CTX_CALIBRATION, snr_idx)
    schedule = calibrate_schedule(
        cfg.system(snr_db), cfg.training_blocks, cfg.turbo_iters, rng, config_hash=fp
    )
    try:
        os.makedirs(cal_dir, exist_ok=True)
        save_schedule(path, schedule)
    except OSError as err:
        raise OutputError(path, err)
    return schedule


def run_monte_carlo(cfg, log=None):
    """Sweep all configured SNRs, ``cfg.trials`` realizations each.

    Per-iteration RSNR is aggregated as the ratio of summed energies; the
    stderr column is the spread of per-trial dB values.  A KeyboardInterrupt
    flushes what has been computed so far (interrupted flag set).
    """
    results = MonteCarloResults()
    workers = _worker_count()
    try:
        for snr_idx, snr_db in enumerate(cfg.snr_db_list):
            schedule = ensure_schedule(cfg, snr_idx, log=log)
            results.schedules[snr_db] = schedule
            outcomes = [None] * cfg.trials
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    futures = {
                        pool.submit(run_trial, cfg, snr_idx, t, schedule): t
                        for t in range(cfg.trials)
                    }
                    for fut, t in futures.items():
                        outcomes[t] = fut.result()
            else:
                for t in range(cfg.trials):
                    outcomes[t] = run_trial(cfg, snr_idx, t, schedule)
            _aggregate_snr(cfg, snr_db, outcomes, results)
            if log:
                last = [r for r in results.table_rows if r[0] == snr_db]
                if last:
                    log(f"snr={snr_db:g} dB: iter1 {last[0][2]:.2f} dB, "
                        f"iter{cfg.turbo_iters} {last[-1][2]:.2f} dB "
                        f"({last[0][3]} trials)")
    except KeyboardInterrupt:
        results.interrupted = True
    return results


def _aggregate_snr(cfg, snr_db, outcomes, results):
    usable = [o for o in outcomes if o is not None and not o.zero_block]
    results.n_zero_blocks += sum(1 for o in outcomes if o is not None and o.zero_block)
    results.n_diverged += sum(1 for o in usable if o.diverged)
    for o in usable:
        for it, r in enumerate(o.rsnr_db, start=1):
            results.trial_rows.append((snr_db, o.trial, it, r))
    if not usable:
        return
    for it in range(cfg.turbo_iters):
        sig = [o.signal_energy for o in usable]
        err = [o.error_energies[it] for o in usable]
        mean_db = aggregate_rsnr_db(sig, err)
        per_trial = np.array([o.rsnr_db[it] for o in usable])
        stderr = float(per_trial.std(ddof=1) / np.sqrt(len(per_trial))) if len(per_trial) > 1 else 0.0
        results.table_rows.append((snr_db, it + 1, mean_db, len(usable), stderr))


def _version_string():
    try:
        describe = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=os.path.dirname(__file__), capture_output=True, text=True, timeout=5,
        )
        tag = describe.stdout.strip() if describe.returncode == 0 else ""
    except (OSError, subprocess.TimeoutExpired):
        tag = ""
    base = "turbocs-0.1.0"
    return f"{base}+{tag}" if tag else base


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as err:
        raise OutputError(path, err)
    return path


def write_results(results, out_dir, cfg=None, curves=None, trajectories=None,
                  wall_time_s=None):
    """Write the fixed-schema CSV set plus the run manifest; returns the
    list of written paths."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as err:
        raise OutputError(out_dir, err)
    written = []

    if results is not None and results.table_rows:
        lines = ["snr_db,iteration,mean_rsnr_db,trial_count,stderr"]
        for snr, it, mean, count, stderr in results.table_rows:
            lines.append(f"{snr:.6g},{it},{mean:.6g},{count},{stderr:.6g}")
        written.append(_write_text(os.path.join(out_dir, "results.csv"), "\n".join(lines) + "\n"))

    if results is not None and results.trial_rows:
        lines = ["snr_db,trial,iteration,rsnr_db"]
        for snr, trial, it, r in results.trial_rows:
            lines.append(f"{snr:.6g},{trial},{it},{r:.6g}")
        written.append(_write_text(os.path.join(out_dir, "trials.csv"), "\n".join(lines) + "\n"))

    for name, curve in (curves or {}).items():
        path = os.path.join(out_dir, f"exit_{name}.csv")
        try:
            curve.write_csv(path)
        except OSError as err:
            raise OutputError(path, err)
        written.append(path)

    for name, traj in (trajectories or {}).items():
        path = os.path.join(out_dir, f"trajectory_{name}.csv")
        try:
            traj.write_csv(path)
        except OSError as err:
            raise OutputError(path, err)
        written.append(path)

    manifest = ["# turbo-cs run manifest"]
    if cfg is not None:
        for key in sorted(vars(cfg)):
            value = getattr(cfg, key)
            if key == "code_ff":
                value = ",".join(oct(v)[2:] for v in value)
            elif key == "code_fb":
                value = oct(value)[2:]
            elif key == "snr_db_list":
                value = ",".join(f"{v:g}" for v in value)
            manifest.append(f"{key} = {value}")
        manifest.append(f"master_seed = {cfg.seed}")
    manifest.append(f"version = {_version_string()}")
    if wall_time_s is not None:
        manifest.append(f"wall_time_s = {wall_time_s:.3f}")
    if results is not None:
        manifest.append(f"diverged_trials = {results.n_diverged}")
        manifest.append(f"zero_energy_blocks = {results.n_zero_blocks}")
        manifest.append(f"interrupted = {results.interrupted}")
    written.append(_write_text(os.path.join(out_dir, "manifest.txt"), "\n".join(manifest) + "\n"))
    return written
