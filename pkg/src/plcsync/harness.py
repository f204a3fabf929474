"""Monte Carlo experiment runner, scenario files and result emission.

Every trial owns independent random streams derived from
``(seed, snr_index, trial)``, so results do not depend on worker count or
execution order.
"""

from __future__ import annotations

import configparser
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .analytics import feasibility_offsets, predict_offsets
from .channel import (ChannelMode, ChannelProfile, apply_resample_model, generate_channel,
                      rotate_grid)
from .core import Modulation, SystemConfig, TimingParams, build_index_sets, theta_line
from .estimator import (DegenerateFrameError, Scheme, Variant, ancillary_phases, build_E,
                        estimate_lambda2, estimate_snr, ols, ols_be, wls_be)
from .noise import NoiseKind, NoiseSpec, generate
from .ofdm import assemble_grid, demodulate, random_symbols

CSV_HEADER = ("snr_db,variant,scheme,mse_xi,mse_eta,bias_xi,bias_eta,"
              "pred_var_xi,pred_var_eta,trials,failures")


class ConfigError(ValueError):
    """Invalid or incomplete scenario description."""


@dataclass(frozen=True)
class Scenario:
    """Everything needed to reproduce one Monte Carlo experiment.

    ``signal`` selects uniform constellation symbols over a generated
    channel (``"ofdm"``) or complex Gaussian received symbols ``H X``
    drawn directly (``"gaussian"``). ``kappa`` mixes a random error into the
    channel estimate used by the data-aided weights.
    """

    cfg: SystemConfig = field(default_factory=SystemConfig)
    timing: TimingParams = field(default_factory=TimingParams)
    channel_profile: ChannelProfile = field(default_factory=ChannelProfile)
    channel_mode: ChannelMode = ChannelMode.PHASE_MODEL
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    snr_points: tuple = (10.0, 15.0, 20.0)
    trials: int = 2000
    variants: tuple = (Variant.OLS, Variant.WLS_BE, Variant.OLS_BE, Variant.PS)
    scheme: Scheme = Scheme.NDA
    seed: int = 0
    phi: float = 1.0
    kappa: float = 0.0
    signal: str = "ofdm"
    include_attenuation: bool = False
    noiseless: bool = False

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if len(self.snr_points) == 0:
            raise ConfigError("at least one SNR point is required")
        if not self.variants:
            raise ConfigError("at least one estimator variant is required")
        if self.signal not in ("ofdm", "gaussian"):
            raise ConfigError(f"unknown signal model {self.signal!r}")
        if not 0 <= self.kappa <= 1:
            raise ConfigError("kappa must lie in [0, 1]")
        if self.signal == "gaussian" and self.channel_mode is ChannelMode.RESAMPLE:
            raise ConfigError("the Gaussian signal model only supports the phase model")
        object.__setattr__(self, "snr_points", tuple(float(s) for s in self.snr_points))
        object.__setattr__(self, "variants", tuple(self.variants))


@dataclass(frozen=True)
class ResultRow:
    snr_db: float
    variant: str
    scheme: str
    mse_xi: float
    mse_eta: float
    bias_xi: float
    bias_eta: float
    predicted_var_xi: float
    predicted_var_eta: float
    trials: int
    failures: int

    def csv_fields(self) -> list[str]:
        return [repr(float(self.snr_db)), self.variant, self.scheme, repr(float(self.mse_xi)),
                repr(float(self.mse_eta)), repr(float(self.bias_xi)), repr(float(self.bias_eta)),
                repr(float(self.predicted_var_xi)), repr(float(self.predicted_var_eta)),
                str(int(self.trials)), str(int(self.failures))]


# Single trial ---------------------------------------------------------------

def trial_streams(seed: int, snr_index: int, trial: int) -> list[np.random.Generator]:
    """Independent generators for symbols, channel, noise and CSI error."""
    ss = np.random.SeedSequence([int(seed) & (2 ** 64 - 1), int(snr_index), int(trial)])
    return [np.random.default_rng(s) for s in ss.spawn(4)]


@dataclass
class TrialFrame:
    """Received grid of one trial with the side information of the genie variants."""

    rx: np.ndarray
    symbols: np.ndarray
    ctf: np.ndarray
    ctf_estimate: np.ndarray
    noise_power: float
    snr_sc: float


def simulate_frame(s: Scenario, snr_db: float, snr_index: int, trial: int) -> TrialFrame:
    """Build the received frequency grid of one trial."""
    cfg = s.cfg
    sets = build_index_sets(cfg)
    sym_rng, chan_rng, noise_rng, csi_rng = trial_streams(s.seed, snr_index, trial)

    if s.signal == "gaussian":
        shape = (cfg.n_blocks, sets.i2_plus.size)
        sd = math.sqrt(cfg.sigma_x2 * s.channel_profile.sigma_h2 / 2)
        sym = (sym_rng.standard_normal(shape) + 1j * sym_rng.standard_normal(shape)) * sd
        tx = assemble_grid(sym, sets)
        ctf = np.ones((cfg.n_blocks, cfg.n_fft), dtype=complex)
        signal_power = cfg.sigma_x2 * s.channel_profile.sigma_h2
        chan = None
    else:
        tx = assemble_grid(random_symbols(sym_rng, cfg), sets)
        chan = generate_channel(chan_rng, cfg, s.channel_profile)
        ctf = chan.ctf
        signal_power = cfg.sigma_x2 * chan.power

    snr_lin = 10.0 ** (snr_db / 10.0)
    ref_power = cfg.nu * signal_power / snr_lin
    spec = s.noise.with_power(ref_power)
    n_samp = cfg.n_blocks * cfg.n_sym
    w = np.zeros(n_samp) if s.noiseless else generate(spec, noise_rng, n_samp, cfg)

    if s.channel_mode is ChannelMode.RESAMPLE:
        rx_t = apply_resample_model(tx, chan, s.timing, cfg)
        rx = demodulate(rx_t.samples + w, cfg).data
    else:
        rx = rotate_grid(tx.data, ctf, s.timing.xi, s.timing.eta, cfg, s.include_attenuation)
        rx = rx + demodulate(w, cfg).data

    ctf_est = ctf
    if s.kappa > 0:
        jv = np.fft.fft(csi_rng.standard_normal((cfg.n_blocks, cfg.n_fft)), axis=1, norm="ortho")
        jv *= np.sqrt(np.mean(np.abs(ctf) ** 2, axis=1, keepdims=True))
        ctf_est = math.sqrt(1 - s.kappa ** 2) * ctf + s.kappa * jv
    total = 0.0 if s.noiseless else spec.total_power
    snr_sc = signal_power / total if total > 0 else math.inf
    return TrialFrame(rx, tx.data, ctf, ctf_est, total, snr_sc)


def run_trial(s: Scenario, snr_index: int, trial: int) -> tuple[np.ndarray, np.ndarray]:
    """Estimation errors ``(n_variants, 2)`` and failure flags ``(n_variants,)`` of one trial.

    Unwrapping failures keep their (large) errors; degenerate frames yield
    NaN errors.
    """
    cfg = s.cfg
    sets = build_index_sets(cfg)
    fr = simulate_frame(s, s.snr_points[snr_index], snr_index, trial)
    E = build_E(cfg)
    truth = np.array([s.timing.xi, s.timing.eta])
    true_theta = np.asarray(theta_line(np.arange(cfg.n_blocks), s.timing.xi, s.timing.eta, cfg))

    errs = np.full((len(s.variants), 2), np.nan)
    fails = np.zeros(len(s.variants), dtype=bool)
    cache: dict = {}

    def phases(blind: bool):
        key = blind and s.scheme is Scheme.DA
        if key in cache:
            return cache[key]
        weights = None
        if s.scheme is Scheme.DA:
            if blind:
                s_w = estimate_snr(fr.rx, sets, cfg).sigma_w2_hat
                weights = estimate_lambda2(fr.rx, fr.symbols, fr.ctf_estimate, s_w, sets)
            else:
                weights = estimate_lambda2(fr.rx, fr.symbols, fr.ctf, fr.noise_power, sets)
        cache[key] = ancillary_phases(fr.rx, sets, s.scheme, weights, s.phi)
        return cache[key]

    for i, variant in enumerate(s.variants):
        try:
            ph = phases(variant is Variant.PS)
        except DegenerateFrameError:
            fails[i] = True
            continue
        fails[i] = bool(np.max(np.abs(ph.unwrapped - true_theta)) > np.pi)
        init = ols(ph.unwrapped, E)
        theta0 = (init.xi_hat, init.eta_hat)
        if variant is Variant.OLS:
            est = init
        elif variant is Variant.PS:
            snr_hat = estimate_snr(fr.rx, sets, cfg).snr_hat / cfg.nu
            est = ols_be(ph.unwrapped, E, theta0, snr_hat, cfg, Variant.PS)
        else:
            snr_sc = min(fr.snr_sc, 1e12)
            solver = wls_be if variant is Variant.WLS_BE else ols_be
            est = solver(ph.unwrapped, E, theta0, snr_sc, cfg)
        errs[i] = np.array([est.xi_hat, est.eta_hat]) - truth
    return errs, fails


def _run_chunk(args) -> tuple[int, int, np.ndarray, np.ndarray]:
    s, snr_index, start, stop = args
    errs = np.empty((stop - start, len(s.variants), 2))
    fails = np.empty((stop - start, len(s.variants)), dtype=bool)
    for t in range(start, stop):
        errs[t - start], fails[t - start] = run_trial(s, snr_index, t)
    return snr_index, start, errs, fails


def run_trials(s: Scenario, workers: int = 1, chunk: int = 250) -> tuple[np.ndarray, np.ndarray]:
    """All per-trial errors, shape ``(n_snr, trials, n_variants, 2)``, and failure flags."""
    n_snr, n_var = len(s.snr_points), len(s.variants)
    errs = np.empty((n_snr, s.trials, n_var, 2))
    fails = np.empty((n_snr, s.trials, n_var), dtype=bool)
    tasks = [(s, i, a, min(a + chunk, s.trials)) for i in range(n_snr) for a in range(0, s.trials, chunk)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, tasks))
    else:
        results = [_run_chunk(t) for t in tasks]
    for i, a, e, f in results:
        errs[i, a:a + e.shape[0]] = e
        fails[i, a:a + e.shape[0]] = f
    return errs, fails


def predicted_snr(s: Scenario, snr_db: float) -> float:
    """Per-subcarrier SNR seen by the estimator at a nominal SNR point."""
    ref = s.noise.with_power(1.0)
    return 10.0 ** (snr_db / 10.0) / s.cfg.nu / ref.total_power


def run_scenario(s: Scenario, workers: int = 1) -> list[ResultRow]:
    """Empirical MSE and bias per SNR point and variant, with analytic variances attached."""
    feas = feasibility_offsets(s.timing.xi, s.timing.eta, s.cfg)
    if not feas.inside:
        warnings.warn("timing offsets lie outside the unwrapping region; expect failures",
                      RuntimeWarning, stacklevel=2)
    errs, fails = run_trials(s, workers)
    rows = []
    for i, snr_db in enumerate(s.snr_points):
        pred = predict_offsets(s.cfg, s.timing.xi, s.timing.eta, predicted_snr(s, snr_db))
        for j, variant in enumerate(s.variants):
            e = errs[i, :, j, :]
            ok = ~np.isnan(e[:, 0])
            e = e[ok]
            mse = np.mean(e ** 2, axis=0) if e.size else np.full(2, np.nan)
            bias = np.mean(e, axis=0) if e.size else np.full(2, np.nan)
            rows.append(ResultRow(snr_db, variant.value, s.scheme.value, float(mse[0]), float(mse[1]),
                                  float(bias[0]), float(bias[1]), pred.var_xi, pred.var_eta,
                                  s.trials, int(np.sum(fails[i, :, j]))))
    return rows


# Output --------------------------------------------------------------------

def format_csv(rows: Sequence[ResultRow]) -> str:
    if not rows:
        raise ValueError("no result rows to write")
    return "\n".join([CSV_HEADER] + [",".join(r.csv_fields()) for r in rows]) + "\n"


def emit_csv(rows: Sequence[ResultRow], path) -> Path:
    """Write rows as CSV with shortest round-trip floats."""
    text = format_csv(rows)
    p = Path(path)
    p.write_text(text)
    return p


def emit_report(rows: Sequence[ResultRow], path=None) -> str:
    """Fixed-width text summary (MSE in dB next to the analytic variance)."""
    if not rows:
        raise ValueError("no result rows to report")

    def db(x: float) -> str:
        return f"{10 * math.log10(x):8.2f}" if x > 0 else "    -inf"

    lines = [f"{'SNR':>6} {'variant':>7} {'scheme':>6} {'MSE xi dB':>9} {'pred dB':>8} "
             f"{'MSE eta dB':>10} {'pred dB':>8} {'fail':>5}"]
    for r in rows:
        lines.append(f"{r.snr_db:6.1f} {r.variant:>7} {r.scheme:>6} {db(r.mse_xi):>9} "
                     f"{db(r.predicted_var_xi)} {db(r.mse_eta):>10} {db(r.predicted_var_eta)} "
                     f"{r.failures:5d}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


# Scenario files --------------------------------------------------------------

def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def parse_snr_sweep(text: str) -> list[float]:
    """Expand ``"a:b:step"`` (inclusive) or a comma list into SNR points."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad SNR sweep {text!r}")
        a, b, step = map(float, parts)
        if step <= 0 or b < a:
            raise ConfigError(f"bad SNR sweep {text!r}")
        n = int(math.floor((b - a) / step + 1e-9)) + 1
        return [a + i * step for i in range(n)]
    return _floats(text)


def scenario_from_config(parser: configparser.ConfigParser) -> Scenario:
    """Build a :class:`Scenario` from parsed INI sections.

    Sections ``system``, ``timing``, ``channel``, ``noise`` and ``run`` are
    all optional; missing keys take the defaults.
    """
    def sec(name: str) -> configparser.SectionProxy:
        if not parser.has_section(name):
            parser.add_section(name)
        return parser[name]

    try:
        sy, tm, ch, nz, rn = (sec(n) for n in ("system", "timing", "channel", "noise", "run"))
        cfg = SystemConfig(
            n_fft=sy.getint("n_fft", 512), n_cp=sy.getint("n_cp", 64),
            n_blocks=sy.getint("n_blocks", 10), n_null=sy.getint("n_null", 64),
            t_sam=sy.getfloat("t_sam", 1e-8),
            modulation=Modulation.parse(sy.get("modulation", "psk16")),
            sigma_x2=sy.getfloat("sigma_x2", 1.0))
        timing = TimingParams(tm.getfloat("xi", 0.1), tm.getfloat("eta", 1e-5), tm.getint("int_offset", 0))
        profile = ChannelProfile(ch.get("profile", "flat"), ch.getfloat("rate", 5.0),
                                 ch.getfloat("decay", 0.5), ch.getfloat("sigma_h2", 1.0))
        mode = ChannelMode.parse(ch.get("mode", "phase"))
        kind = NoiseKind.parse(nz.get("model", "awgn"))
        opt = {key: nz.getfloat(key) for key in ("A", "T", "m", "beta", "t_ac") if key.lower() in nz}
        n0_text = nz.get("n0", "random").strip().lower()
        n0 = None if n0_text == "random" else int(n0_text)
        noise = NoiseSpec(kind, 1.0, n0=n0, **opt)
        return Scenario(
            cfg=cfg, timing=timing, channel_profile=profile, channel_mode=mode, noise=noise,
            snr_points=tuple(parse_snr_sweep(rn.get("snr_db", "10,15,20"))),
            trials=rn.getint("trials", 2000),
            variants=tuple(Variant.parse(v) for v in rn.get("variants", "OLS,WLS_BE,OLS_BE,PS").split(",")
                           if v.strip()),
            scheme=Scheme.parse(rn.get("scheme", "NDA")), seed=rn.getint("seed", 0),
            phi=rn.getfloat("phi", 1.0), kappa=ch.getfloat("kappa", 0.0),
            signal=rn.get("signal", "ofdm").strip().lower(),
            include_attenuation=ch.getboolean("attenuation", False),
            noiseless=rn.getboolean("noiseless", False))
    except ConfigError:
        raise
    except (ValueError, KeyError, configparser.Error) as exc:
        raise ConfigError(str(exc)) from exc


def load_scenario(path) -> Scenario:
    """Read a scenario INI file. Raises :class:`OSError` or :class:`ConfigError`."""
    text = Path(path).read_text()
    return loads_scenario(text)


def loads_scenario(text: str) -> Scenario:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return scenario_from_config(parser)


def with_overrides(s: Scenario, **kwargs) -> Scenario:
    """Copy of ``s`` with the non-``None`` keyword arguments replaced."""
    return replace(s, **{k: v for k, v in kwargs.items() if v is not None})
