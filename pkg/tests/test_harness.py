import math
from pathlib import Path

import numpy as np
import pytest

from plcsync.analytics import first_terms, predict_offsets
from plcsync.channel import ChannelMode, ChannelProfile
from plcsync.core import SystemConfig, TimingParams
from plcsync.estimator import Scheme, Variant
from plcsync.harness import (CSV_HEADER, ConfigError, ResultRow, Scenario, emit_csv, emit_report, format_csv,
                             load_scenario, loads_scenario, parse_snr_sweep, predicted_snr, run_scenario,
                             run_trial, run_trials, simulate_frame, trial_streams, with_overrides)
from plcsync.noise import NoiseKind, NoiseSpec

DATA = Path(__file__).parent / "data"
ALL = (Variant.OLS, Variant.WLS_BE, Variant.OLS_BE, Variant.PS)


def mini(**kw):
    base = dict(snr_points=(10.0, 20.0), trials=12, seed=1234)
    base.update(kw)
    return Scenario(**base)


class TestScenario:
    def test_defaults(self):
        s = Scenario()
        assert s.trials == 2000 and s.variants == ALL
        assert (s.timing.xi, s.timing.eta) == (0.1, 1e-5)

    @pytest.mark.parametrize("kw", [dict(trials=0), dict(snr_points=()), dict(variants=()),
                                    dict(signal="qam"), dict(kappa=1.5),
                                    dict(signal="gaussian", channel_mode=ChannelMode.RESAMPLE)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            Scenario(**kw)

    def test_config_error_is_value_error(self):
        assert issubclass(ConfigError, ValueError)


class TestStreams:
    def test_distinct(self):
        a = [g.random() for g in trial_streams(1, 0, 0)]
        assert len(set(a)) == 4
        assert trial_streams(1, 0, 1)[0].random() != a[0]
        assert trial_streams(1, 1, 0)[0].random() != a[0]
        assert trial_streams(2, 0, 0)[0].random() != a[0]

    def test_reproducible(self):
        assert trial_streams(7, 2, 3)[2].random() == trial_streams(7, 2, 3)[2].random()

    def test_noise_power_reference(self):
        s = mini(noise=NoiseSpec(NoiseKind.AWGN))
        fr = simulate_frame(s, 20.0, 1, 0)
        assert fr.snr_sc == pytest.approx(100 / SystemConfig().nu, rel=1e-12)


class TestRunScenario:
    def test_noiseless_exact(self):
        rows = run_scenario(mini(trials=1, noiseless=True, snr_points=(20.0,)))
        assert len(rows) == 4
        for r in rows:
            assert r.mse_xi < 1e-18 and r.mse_eta < 1e-24, r
            assert r.failures == 0

    def test_noiseless_multipath_and_da(self):
        s = mini(trials=2, noiseless=True, snr_points=(20.0,), scheme=Scheme.DA,
                 channel_profile=ChannelProfile("multipath"))
        for r in run_scenario(s):
            assert r.mse_xi < 1e-18 and r.mse_eta < 1e-24, r

    def test_deterministic(self):
        s = mini()
        assert format_csv(run_scenario(s)) == format_csv(run_scenario(s))

    def test_seed_matters(self):
        assert format_csv(run_scenario(mini())) != format_csv(run_scenario(mini(seed=1)))

    def test_worker_count_invariant(self):
        s = mini(trials=8)
        e1, f1 = run_trials(s, workers=1, chunk=3)
        e2, f2 = run_trials(s, workers=2, chunk=3)
        np.testing.assert_array_equal(e1, e2)
        np.testing.assert_array_equal(f1, f2)

    def test_order_invariant(self):
        s = mini()
        fwd = [run_trial(s, 0, t)[0] for t in range(6)]
        rev = [run_trial(s, 0, t)[0] for t in reversed(range(6))][::-1]
        np.testing.assert_array_equal(np.array(fwd), np.array(rev))
        errs, _ = run_trials(s, chunk=5)
        np.testing.assert_array_equal(errs[0, :6], np.array(fwd))

    def test_mse_dominates_bias(self):
        for r in run_scenario(mini()):
            assert r.mse_xi >= r.bias_xi ** 2 * (1 - 1e-12)
            assert r.mse_eta >= r.bias_eta ** 2 * (1 - 1e-12)

    def test_no_failures_at_10db(self):
        rows = run_scenario(mini(trials=200, snr_points=(10.0, 15.0)))
        assert all(r.failures == 0 for r in rows)

    def test_infeasible_warns(self):
        s = mini(trials=5, timing=TimingParams(0.0, 1.5 / 576), variants=(Variant.OLS,), snr_points=(30.0,))
        with pytest.warns(RuntimeWarning):
            rows = run_scenario(s)
        assert rows[0].failures == 5

    def test_predictions_attached(self):
        r = run_scenario(mini(trials=1, snr_points=(15.0,), variants=(Variant.OLS,)))[0]
        p = predict_offsets(SystemConfig(), 0.1, 1e-5, 10 ** 1.5 / SystemConfig().nu)
        assert (r.predicted_var_xi, r.predicted_var_eta) == (p.var_xi, p.var_eta)

    def test_class_a_prediction_snr(self):
        s = mini(noise=NoiseSpec(NoiseKind.CLASS_A, A=1.0, T=0.1))
        assert predicted_snr(s, 20.0) == pytest.approx(100 / SystemConfig().nu * 0.1 / 1.1)

    def test_ps_matches_analytics_at_20db(self):
        cfg = SystemConfig()
        rows = run_scenario(mini(trials=2000, snr_points=(20.0,), variants=(Variant.PS,), seed=5))
        r = rows[0]
        pred = predict_offsets(cfg, 0.1, 1e-5, predicted_snr(Scenario(), 20.0))
        assert abs(10 * math.log10(r.mse_eta / pred.var_eta)) < 3.0
        assert r.mse_eta <= 2 * first_terms(cfg, predicted_snr(Scenario(), 20.0))[1]

    def test_csi_error_tolerated(self):
        mse = []
        for kappa in (0.0, 0.1):
            s = mini(scheme=Scheme.DA, kappa=kappa, snr_points=(15.0,), trials=300, variants=(Variant.PS,))
            errs, _ = run_trials(s)
            mse.append(10 * np.log10(np.mean(errs[0, :, 0, :] ** 2, axis=0)))
        assert np.all(np.abs(mse[1] - mse[0]) < 0.2)

    @pytest.mark.parametrize("kw", [
        dict(channel_mode=ChannelMode.RESAMPLE),
        dict(channel_mode=ChannelMode.RESAMPLE, channel_profile=ChannelProfile("multipath"),
             timing=TimingParams(0.1, 1e-5, 0)),
        dict(signal="gaussian"),
        dict(scheme=Scheme.DA, kappa=0.1),
        dict(include_attenuation=True),
        dict(noise=NoiseSpec(NoiseKind.CYCLO, n0=None)),
        dict(noise=NoiseSpec(NoiseKind.COLORED, beta=0.72)),
    ])
    def test_modes_run(self, kw):
        rows = run_scenario(mini(trials=20, snr_points=(20.0,), **kw))
        for r in rows:
            assert r.failures == 0
            assert 10 * math.log10(r.mse_eta) < -120


class TestEmit:
    def row(self, **kw):
        base = dict(snr_db=10.0, variant="OLS", scheme="NDA", mse_xi=0.1, mse_eta=1e-14, bias_xi=-0.003,
                    bias_eta=2e-8, predicted_var_xi=1 / 3, predicted_var_eta=1e-13, trials=5, failures=0)
        base.update(kw)
        return ResultRow(**base)

    def test_header(self):
        text = format_csv([self.row()])
        assert text.split("\n")[0] == ("snr_db,variant,scheme,mse_xi,mse_eta,bias_xi,bias_eta,"
                                       "pred_var_xi,pred_var_eta,trials,failures")
        assert CSV_HEADER == text.split("\n")[0]

    def test_round_trip_floats(self):
        line = format_csv([self.row()]).split("\n")[1].split(",")
        assert float(line[7]) == 1 / 3
        assert line[7] == repr(1 / 3)
        assert line[4] == "1e-14"

    def test_empty(self, tmp_path):
        p = tmp_path / "out.csv"
        with pytest.raises(ValueError):
            emit_csv([], p)
        assert not p.exists()
        with pytest.raises(ValueError):
            emit_report([])

    def test_io_error(self, tmp_path):
        with pytest.raises(OSError):
            emit_csv([self.row()], tmp_path / "missing" / "out.csv")

    def test_report(self, tmp_path):
        text = emit_report([self.row(), self.row(mse_eta=0.0)], tmp_path / "r.txt")
        assert "-inf" in text and "-140.00" in text
        assert (tmp_path / "r.txt").read_text() == text

    def test_golden(self, tmp_path):
        s = load_scenario(DATA / "golden_mini.ini")
        out = emit_csv(run_scenario(s), tmp_path / "g.csv")
        assert out.read_text() == (DATA / "golden_mini.csv").read_text()


class TestConfig:
    def test_full_file(self):
        s = loads_scenario("""
[system]
n_fft = 256
n_cp = 32
n_blocks = 8
n_null = 32
modulation = qam16
[timing]
xi = -0.2
eta = 2e-5
[channel]
profile = multipath
rate = 3
mode = resample
kappa = 0.1
[noise]
model = class_a
A = 0.1
T = 0.01
[run]
snr_db = 5:15:5
trials = 50
variants = OLS, PS
scheme = DA
seed = 99
""")
        assert s.cfg.n_fft == 256 and s.cfg.modulation.order == 16
        assert (s.timing.xi, s.timing.eta) == (-0.2, 2e-5)
        assert s.channel_profile.kind == "multipath" and s.channel_mode is ChannelMode.RESAMPLE
        assert s.noise.kind is NoiseKind.CLASS_A and s.noise.A == 0.1 and s.noise.T == 0.01
        assert s.snr_points == (5.0, 10.0, 15.0)
        assert s.variants == (Variant.OLS, Variant.PS) and s.scheme is Scheme.DA
        assert s.seed == 99 and s.trials == 50 and s.kappa == 0.1

    def test_empty_file_defaults(self):
        s = loads_scenario("")
        assert s.cfg == SystemConfig() and s.trials == 2000
        assert s.noise.n0 is None

    def test_cyclo_fixed_start(self):
        assert loads_scenario("[noise]\nmodel = cyclo\nn0 = 0\n").noise.n0 == 0

    @pytest.mark.parametrize("text", [
        "[system]\nn_fft = 500\n", "[timing]\nxi = 0.7\n", "[noise]\nmodel = pink\n",
        "[run]\ntrials = 0\n", "[run]\nsnr_db = 10:5:1\n", "[run]\nvariants = MLE\n",
        "[run]\ntrials = many\n", "not an ini file", "[channel]\nprofile = rayleigh\n",
    ])
    def test_errors(self, text):
        with pytest.raises(ConfigError):
            loads_scenario(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_scenario(tmp_path / "nope.ini")

    def test_sweep(self):
        assert parse_snr_sweep("0:30:2.5") == [2.5 * i for i in range(13)]
        assert parse_snr_sweep("10, 20") == [10.0, 20.0]
        with pytest.raises(ConfigError):
            parse_snr_sweep("1:2")
        with pytest.raises(ConfigError):
            parse_snr_sweep("0:10:0")

    def test_overrides(self):
        s = with_overrides(Scenario(), seed=3, trials=None)
        assert s.seed == 3 and s.trials == 2000
