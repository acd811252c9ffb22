"""Command-line entry point: ``mlda run | diagnose | estimate``.

Exit codes: 0 success, 1 invalid input (config, arguments, files), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from pydantic import ValidationError

from .config import bundled_configs, load_config
from .model import ContractViolation
from .samplers import StartupError
from .storage import ChainFormatError

log = logging.getLogger("mlda")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _resolve_config(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    bundled = bundled_configs()
    if name in bundled:
        return bundled[name]
    raise FileNotFoundError(f"config {name!r} not found (bundled: {', '.join(bundled) or 'none'})")


def _seed(arg) -> int | None:
    if arg is not None:
        return arg
    env = os.environ.get("MLDA_SEED")
    if env is None or env == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise ContractViolation(f"MLDA_SEED must be an integer, got {env!r}") from None


def _cmd_run(args) -> int:
    from .runner import run_experiment

    config = load_config(_resolve_config(args.config))
    out = Path(args.output_dir) if args.output_dir else Path("runs") / config.name
    summary = run_experiment(config, out, seed=_seed(args.seed), chains=args.chains, threads=args.threads)
    ess = [p["ess"] for p in summary["diagnostics"]["parameters"]]
    shown = ", ".join("nan" if e is None else f"{e:.1f}" for e in ess[:8])
    print(f"wrote {out}")
    print(f"ESS (first parameters): {shown}")
    if "estimator" in summary:
        for c in summary["estimator"]["chains"]:
            print(f"chain {c['chain']}: standard {c['standard']:.6g}  multilevel {c['multilevel']:.6g}")
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    from .runner import diagnose

    report = diagnose(args.chain_dir, acf_lags=args.acf_lags)
    if args.output:
        Path(args.output).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for p in report["parameters"]:
        ess = "degenerate" if p["ess"] is None else f"{p['ess']:.1f}"
        print(f"theta[{p['index']}]  ESS {ess}")
    for level, rates in sorted(report.get("acceptance_rate", {}).items()):
        print(f"level {level} acceptance " + " ".join("-" if r is None else f"{r:.3f}" for r in rates))
    return EXIT_OK


def _cmd_estimate(args) -> int:
    from .runner import estimate

    result = estimate(args.chain_dir, args.qoi_name, reference=args.reference)
    if args.output:
        Path(args.output).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    for c in result["chains"]:
        print(f"chain {c['chain']}: standard {c['standard']:.10g}  multilevel {c['multilevel']:.10g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlda", description="Multilevel delayed-acceptance MCMC experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("config", help="config path or bundled config name")
    run.add_argument("--seed", type=int, help="overrides MLDA_SEED and the config seed")
    run.add_argument("--output-dir")
    run.add_argument("--chains", type=int)
    run.add_argument("--threads", type=int, default=1)
    run.set_defaults(func=_cmd_run)

    dg = sub.add_parser("diagnose", help="recompute diagnostics for a run directory")
    dg.add_argument("chain_dir")
    dg.add_argument("--acf-lags", type=int)
    dg.add_argument("--output")
    dg.set_defaults(func=_cmd_diagnose)

    es = sub.add_parser("estimate", help="multilevel estimate of a recorded QoI")
    es.add_argument("chain_dir")
    es.add_argument("qoi_name")
    es.add_argument("--reference", type=float)
    es.add_argument("--output")
    es.set_defaults(func=_cmd_estimate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: invalid config\n{exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ContractViolation, ChainFormatError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (StartupError, RuntimeError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
