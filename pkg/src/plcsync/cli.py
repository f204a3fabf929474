"""Command-line entry point.

Subcommands::

    simulate SCENARIO [--out CSV] [--workers N] [--seed S] [--trials T]
    analyze --snr-sweep a:b:step [--xi X] [--eta E]
    noise-fit --variant KIND [--params k=v,...] [--frames F]
    feasibility --xi X --eta E

Exit status is 0 on success, 2 for configuration errors and 3 for I/O errors.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np

from .analytics import feasibility_offsets, predict_offsets
from .core import SystemConfig
from .harness import ConfigError, emit_csv, emit_report, format_csv, load_scenario, parse_snr_sweep, with_overrides
from .noise import NoiseKind, NoiseSpec, frequency_frames, gaussianity_report

EXIT_CONFIG = 2
EXIT_IO = 3


def _system_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-fft", type=int, default=512)
    p.add_argument("--n-cp", type=int, default=64)
    p.add_argument("--n-blocks", type=int, default=10)
    p.add_argument("--n-null", type=int, default=64)


def _cfg(args) -> SystemConfig:
    return SystemConfig(n_fft=args.n_fft, n_cp=args.n_cp, n_blocks=args.n_blocks, n_null=args.n_null)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plcsync", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    sim.add_argument("scenario", help="scenario INI file")
    sim.add_argument("--out", help="CSV output path (default: stdout)")
    sim.add_argument("--report", help="also write a text report here")
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--trials", type=int)

    ana = sub.add_parser("analyze", help="closed-form predictions over an SNR sweep")
    ana.add_argument("--snr-sweep", required=True, help="a:b:step in dB (inclusive)")
    ana.add_argument("--xi", type=float, default=0.1)
    ana.add_argument("--eta", type=float, default=1e-5)
    _system_args(ana)

    nf = sub.add_parser("noise-fit", help="frequency-domain Gaussianity of a noise model")
    nf.add_argument("--variant", required=True, help="awgn, class_a, nakagami, cyclo or colored")
    nf.add_argument("--params", default="", help="comma separated key=value pairs, e.g. A=1,T=0.1")
    nf.add_argument("--frames", type=int, default=500)
    nf.add_argument("--seed", type=int, default=0)
    _system_args(nf)

    fe = sub.add_parser("feasibility", help="check the unwrapping region")
    fe.add_argument("--xi", type=float, required=True)
    fe.add_argument("--eta", type=float, required=True)
    _system_args(fe)
    return parser


def _parse_params(text: str) -> dict:
    out = {}
    for item in filter(None, (t.strip() for t in text.split(","))):
        if "=" not in item:
            raise ConfigError(f"bad parameter {item!r}, expected key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = float(v)
    return out


def _cmd_simulate(args) -> int:
    from .harness import run_scenario

    s = with_overrides(load_scenario(args.scenario), seed=args.seed, trials=args.trials)
    rows = run_scenario(s, workers=args.workers)
    if args.out:
        emit_csv(rows, args.out)
    else:
        sys.stdout.write(format_csv(rows))
    if args.report:
        emit_report(rows, args.report)
    return 0


def _cmd_analyze(args) -> int:
    cfg = _cfg(args)
    print("snr_db,var_xi,var_eta,bias_xi,bias_eta,mse_xi,mse_eta")
    for snr_db in parse_snr_sweep(args.snr_sweep):
        p = predict_offsets(cfg, args.xi, args.eta, 10 ** (snr_db / 10) / cfg.nu)
        vals = (snr_db, p.var_xi, p.var_eta, p.bias_xi, p.bias_eta, p.mse_xi, p.mse_eta)
        print(",".join(repr(float(v)) for v in vals))
    return 0


def _cmd_noise_fit(args) -> int:
    cfg = _cfg(args)
    params = _parse_params(args.params)
    kind = NoiseKind.parse(args.variant)
    n0 = int(params.pop("n0", 0))
    spec = NoiseSpec(kind, params.pop("power", 1.0), n0=n0, **params)
    frames = frequency_frames(spec, np.random.default_rng(args.seed), args.frames, cfg)
    rep = gaussianity_report(frames)
    print("variant,params,kurtosis,skewness,p_value")
    print(f"{kind.value},{spec.label()},{rep.kurtosis!r},{rep.skewness!r},{rep.p_value!r}")
    return 0


def _cmd_feasibility(args) -> int:
    cfg = _cfg(args)
    f = feasibility_offsets(args.xi, args.eta, cfg)
    print(f"{'inside' if f.inside else 'outside'} c1={f.c1} c2={f.c2}")
    for i, (x, y) in enumerate(f.vertices, start=1):
        print(f"A{i},{float(x)!r},{float(y)!r}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"simulate": _cmd_simulate, "analyze": _cmd_analyze,
                "noise-fit": _cmd_noise_fit, "feasibility": _cmd_feasibility}
    try:
        return handlers[args.command](args)
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
