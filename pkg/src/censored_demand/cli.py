"""Command-line front end: ``censored-demand {generate,fit,evaluate,report,all}``.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
Logs go to stderr; the paths of written files go to stdout.
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Sequence

from .datamodel import DataValidationError
from .pipeline import ConfigError, RunConfig, run_evaluate, run_fit, run_generate, run_report
from .serialization import ModelFileError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="root seed (overrides the config)")
    common.add_argument("--threads", type=int,
                        help="worker threads; 0 = all available cores (overrides the config)")
    common.add_argument("--out", help="run directory (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(
        prog="censored-demand",
        description="Censorship-aware demand prediction: synthetic data, two-stage censored "
                    "models, simplex-weighted ensembles and bootstrap inference.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write a synthetic dataset + ground truth")
    sub.add_parser("fit", parents=[common], help="fit censored/uncensored models and ensembles")
    sub.add_parser("evaluate", parents=[common], help="RMSE, bootstrap tests, marginal effects")
    sub.add_parser("report", parents=[common], help="JSON and text tables (evaluates if needed)")
    sub.add_parser("all", parents=[common], help="generate (if no data path), fit and report")
    return parser


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    d = cfg.to_dict()
    if args.seed is not None:
        d["seed"] = args.seed
    if args.threads is not None:
        d["threads"] = args.threads
    if args.out is not None:
        d["out"] = args.out
    return RunConfig.from_dict(d)


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr,
                        force=True)
    log = logging.getLogger("censored_demand")
    try:
        cfg = load_config(args)
        written = []
        if args.command in ("generate", "all") and not (args.command == "all" and cfg.data_path):
            written += list(run_generate(cfg).values())
        if args.command in ("fit", "all"):
            run_fit(cfg)
            written.append(cfg.out_dir / "fit_summary.json")
        if args.command == "evaluate":
            run_evaluate(cfg)
            written.append(cfg.out_dir / "evaluation.json")
        if args.command in ("report", "all"):
            written += list(run_report(cfg).values())
    except (ConfigError, DataValidationError, ModelFileError, FileNotFoundError,
            ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - top-level guard maps failures to an exit code
        log.exception("runtime failure: %s", exc)
        return EXIT_RUNTIME
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
