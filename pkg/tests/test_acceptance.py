"""Acceptance criteria. Each test prints one ``CRITERION n: PASS|FAIL`` line.

Tolerances are pinned as module constants. The lines are repeated in the
terminal summary.
"""

import math
import time

import numpy as np

from conftest import ACCEPTANCE_LINES
from plcsync.analytics import feasibility_offsets, first_terms, predict_offsets, recovery_map
from plcsync.channel import ChannelProfile, rotate_grid
from plcsync.core import SystemConfig, TimingParams, build_index_sets
from plcsync.estimator import (Scheme, Variant, estimate_lambda2, estimate_offsets, estimate_snr, llf_bruteforce,
                               llf_value, practical_scheme)
from plcsync.harness import Scenario, predicted_snr, run_trials, simulate_frame
from plcsync.noise import NoiseKind, NoiseSpec, frequency_frames, gaussianity_report
from plcsync.ofdm import random_grid

CFG = SystemConfig()
XI, ETA = 0.1, 1e-5

# criterion 1
EXACT_XI_TOL, EXACT_ETA_TOL, EXACT_RUNTIME_S = 1e-9, 1e-12, 1.0
# criterion 2
VAR_SNRS, VAR_TRIALS, VAR_FACTOR, VAR_FIRST_TERM_CAP, VAR_RUNTIME_S = (15.0, 20.0, 25.0), 10_000, 1.5, 2.0, 120.0
# criterion 3
BE_SNR, BE_TRIALS, BE_RESIDUAL, BE_PRED_REL = 10.0, 10_000, 0.10, 0.20
# criterion 4
HEX_POINTS = 41
# criterion 5
KURT_FRAMES = 500
KURT_TARGETS = {"class_a A=1 T=1": (2.98, 0.10), "class_a A=0.01 T=0.01": (2.61, 0.15),
                "nakagami m=0.5": (2.98, 0.10), "nakagami m=1": (2.98, 0.10),
                "nakagami m=2": (2.98, 0.10), "nakagami m=10": (2.98, 0.10)}
GAUSS_P_MIN = 0.4
# criterion 6
ORDER_SNR, ORDER_TRIALS, CYCLO_GAP_DB, CLASS_A_STEP_DB = 20.0, 2000, 1.0, 5.0
# criterion 7
SNR_EST_TRIALS, SNR_EST_TOL_DB = 1000, 0.5
# criterion 8
LLF_POINTS, LLF_TRIALS, LLF_FRACTION, LLF_HALF_WIDTH_SD = 101, 100, 0.99, 5.0
# criterion 9
ROBUST_SNRS, ROBUST_TRIALS, ROBUST_GAP_DB = (10.0, 15.0, 20.0, 25.0), 2000, 1.5


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def db(x: float) -> float:
    return 10 * math.log10(x)


def test_criterion_1_exact_recovery():
    start = time.perf_counter()
    sets = build_index_sets(CFG)
    tx = random_grid(np.random.default_rng(1), CFG)
    gain = 0.8
    rx = rotate_grid(tx.data, gain, XI, ETA, CFG)
    ctf = np.full((CFG.n_blocks, CFG.n_fft), gain, dtype=complex)
    worst = [0.0, 0.0]
    for scheme in (Scheme.NDA, Scheme.DA):
        weights = None
        if scheme is Scheme.DA:
            weights = estimate_lambda2(rx, tx.data, ctf, 1e-12, sets)
        ests = [estimate_offsets(rx, CFG, Variant.OLS, scheme=scheme, weights=weights, sets=sets),
                practical_scheme(rx, CFG, scheme, symbols=tx.data, ctf=ctf, sets=sets)]
        for e in ests:
            worst[0] = max(worst[0], abs(e.xi_hat - XI))
            worst[1] = max(worst[1], abs(e.eta_hat - ETA))
    elapsed = time.perf_counter() - start
    ok = worst[0] < EXACT_XI_TOL and worst[1] < EXACT_ETA_TOL and elapsed < EXACT_RUNTIME_S
    verdict(1, ok, f"max|dxi|={worst[0]:.2e} (<{EXACT_XI_TOL:g}), max|deta|={worst[1]:.2e} "
                   f"(<{EXACT_ETA_TOL:g}), {elapsed:.3f}s")


def test_criterion_2_variance_agreement():
    start = time.perf_counter()
    s = Scenario(timing=TimingParams(XI, ETA), snr_points=VAR_SNRS, trials=VAR_TRIALS,
                 variants=(Variant.OLS,), seed=2002)
    errs, _ = run_trials(s)
    elapsed = time.perf_counter() - start
    ok, parts = elapsed < VAR_RUNTIME_S, []
    for i, snr_db in enumerate(VAR_SNRS):
        rho = predicted_snr(s, snr_db)
        p = predict_offsets(CFG, XI, ETA, rho)
        f_xi, f_eta = first_terms(CFG, rho)
        v = errs[i, :, 0, :].var(axis=0, ddof=1)
        r = v / [p.var_xi, p.var_eta]
        ok &= bool(np.all((r > 1 / VAR_FACTOR) & (r < VAR_FACTOR)))
        ok &= bool(v[0] <= VAR_FIRST_TERM_CAP * f_xi and v[1] <= VAR_FIRST_TERM_CAP * f_eta)
        parts.append(f"{snr_db:g}dB ratio xi={r[0]:.3f} eta={r[1]:.3f}")
    verdict(2, ok, "; ".join(parts) + f"; {elapsed:.1f}s")


def test_criterion_3_bias_erasure():
    s = Scenario(timing=TimingParams(XI, ETA), snr_points=(BE_SNR,), trials=BE_TRIALS,
                 variants=(Variant.OLS, Variant.OLS_BE), seed=3003)
    errs, _ = run_trials(s)
    pre = float(np.mean(errs[0, :, 0, 0]))
    post = float(np.mean(errs[0, :, 1, 0]))
    pred = predict_offsets(CFG, XI, ETA, predicted_snr(s, BE_SNR)).bias_xi
    ok = abs(post) < BE_RESIDUAL * abs(pre) and abs(pre / pred - 1) < BE_PRED_REL
    verdict(3, ok, f"pre-BE bias={pre:.3e} (pred {pred:.3e}), post-BE bias={post:.3e} "
                   f"({abs(post / pre):.1%} of pre)")


def boundary_free(ref: np.ndarray) -> np.ndarray:
    """Cells whose 3x3 neighbourhood carries a single label."""
    rows, cols = ref.shape
    pad = np.pad(ref, 1, mode="edge")
    hood = np.stack([pad[1 + di:1 + di + rows, 1 + dj:1 + dj + cols] for di in (-1, 0, 1) for dj in (-1, 0, 1)])
    return hood.all(axis=0) | (~hood).all(axis=0)


def test_criterion_4_hexagon():
    ns = CFG.n_sym
    xs = np.linspace(-0.6, 0.6, HEX_POINTS)
    es = np.linspace(-1.2, 1.2, HEX_POINTS) / ns
    got = recovery_map(CFG, xs, es, rng=np.random.default_rng(4))
    feas = [[feasibility_offsets(x, e, CFG) for e in es] for x in xs]
    ref = np.array([[f.c1 and f.c2 for f in row] for row in feas])
    hexagon = np.array([[f.inside for f in row] for row in feas])
    wrong = boundary_free(ref) & (got != ref)
    wrong_hex = boundary_free(hexagon) & (got != hexagon)
    verdict(4, int(wrong.sum()) == 0,
            f"{int(wrong.sum())} misclassified of {int(boundary_free(ref).sum())} off-boundary cells "
            f"against C1 and C2 ({int((wrong & ref).sum())} inside but not recovered); "
            f"{int(wrong_hex.sum())} against the hexagon")


def test_criterion_5_frequency_kurtosis():
    specs = {
        "class_a A=1 T=1": NoiseSpec(NoiseKind.CLASS_A, A=1.0, T=1.0),
        "class_a A=0.01 T=0.01": NoiseSpec(NoiseKind.CLASS_A, A=0.01, T=0.01),
        **{f"nakagami m={m:g}": NoiseSpec(NoiseKind.NAKAGAMI, m=m) for m in (0.5, 1.0, 2.0, 10.0)},
    }
    ok, parts = True, []
    for i, (name, spec) in enumerate(specs.items()):
        rep = gaussianity_report(frequency_frames(spec, np.random.default_rng(500 + i), KURT_FRAMES, CFG))
        target, tol = KURT_TARGETS[name]
        ok &= abs(rep.kurtosis - target) <= tol
        parts.append(f"{name}: {rep.kurtosis:.3f}")
    g = gaussianity_report(frequency_frames(NoiseSpec(), np.random.default_rng(599), KURT_FRAMES, CFG))
    ok &= g.p_value > GAUSS_P_MIN
    parts.append(f"gaussian p={g.p_value:.3f}")
    verdict(5, bool(ok), "; ".join(parts))


def test_criterion_6_noise_ordering():
    noises = {
        "awgn": NoiseSpec(),
        "cyclo": NoiseSpec(NoiseKind.CYCLO, n0=None),
        "col.337": NoiseSpec(NoiseKind.COLORED, beta=0.337),
        "col.72": NoiseSpec(NoiseKind.COLORED, beta=0.72),
        "A1T1": NoiseSpec(NoiseKind.CLASS_A, A=1.0, T=1.0),
        "A1T.1": NoiseSpec(NoiseKind.CLASS_A, A=1.0, T=0.1),
        "A1T.01": NoiseSpec(NoiseKind.CLASS_A, A=1.0, T=0.01),
    }
    mse = {}
    for name, spec in noises.items():
        s = Scenario(timing=TimingParams(XI, ETA), noise=spec, snr_points=(ORDER_SNR,), trials=ORDER_TRIALS,
                     variants=(Variant.PS,), seed=6006)
        errs, _ = run_trials(s)
        mse[name] = db(float(np.mean(errs[0, :, 0, 1] ** 2)))
    ok = abs(mse["awgn"] - mse["cyclo"]) < CYCLO_GAP_DB
    ok &= max(mse["awgn"], mse["cyclo"]) < mse["col.337"] < mse["col.72"]
    step1, step2 = mse["A1T.1"] - mse["A1T1"], mse["A1T.01"] - mse["A1T.1"]
    ok &= step1 >= CLASS_A_STEP_DB and step2 >= CLASS_A_STEP_DB
    verdict(6, bool(ok), ", ".join(f"{k}={v:.2f}dB" for k, v in mse.items())
            + f"; Class-A steps {step1:.1f}/{step2:.1f} dB")


def test_criterion_7_snr_estimator():
    s = Scenario(timing=TimingParams(XI, ETA), snr_points=(20.0,), trials=1, seed=7007)
    sets = build_index_sets(CFG)
    est = [db(estimate_snr(simulate_frame(s, 20.0, 0, t).rx, sets, CFG).snr_hat) for t in range(SNR_EST_TRIALS)]
    med = float(np.median(np.abs(np.array(est) - 20.0)))
    verdict(7, med < SNR_EST_TOL_DB, f"median |SNR_hat - 20| = {med:.3f} dB over {SNR_EST_TRIALS} trials")


def test_criterion_8_llf_oracle():
    s = Scenario(timing=TimingParams(XI, ETA), snr_points=(20.0,), trials=1, seed=8008)
    sd_xi, sd_eta = (math.sqrt(v) for v in first_terms(CFG, predicted_snr(s, 20.0)))
    xs = XI + np.linspace(-1, 1, LLF_POINTS) * LLF_HALF_WIDTH_SD * sd_xi
    es = ETA + np.linspace(-1, 1, LLF_POINTS) * LLF_HALF_WIDTH_SD * sd_eta
    worst = np.inf
    for t in range(LLF_TRIALS):
        rx = simulate_frame(s, 20.0, 0, t).rx
        ps = practical_scheme(rx, CFG)
        _, surf = llf_bruteforce(rx, xs, es, CFG)
        worst = min(worst, llf_value(rx, ps.xi_hat, ps.eta_hat, CFG) / surf.max())
    verdict(8, worst >= LLF_FRACTION, f"worst PS/lattice-max LLF ratio {worst:.5f} over {LLF_TRIALS} trials")


def test_criterion_9_gaussian_assumption():
    mse = {}
    for signal, profile in (("ofdm", ChannelProfile("multipath")), ("gaussian", ChannelProfile("flat"))):
        s = Scenario(timing=TimingParams(XI, ETA), channel_profile=profile, signal=signal,
                     snr_points=ROBUST_SNRS, trials=ROBUST_TRIALS, variants=(Variant.PS,), seed=9009)
        errs, _ = run_trials(s)
        mse[signal] = np.array([[db(float(np.mean(errs[i, :, 0, j] ** 2))) for j in (0, 1)]
                                for i in range(len(ROBUST_SNRS))])
    gap = np.abs(mse["ofdm"] - mse["gaussian"])
    verdict(9, bool(gap.max() < ROBUST_GAP_DB),
            f"max gap xi={gap[:, 0].max():.2f} dB, eta={gap[:, 1].max():.2f} dB over {ROBUST_SNRS} dB")
