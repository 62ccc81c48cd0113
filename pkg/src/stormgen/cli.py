"""Command-line entry point: `stormgen <stage> --config <path>`."""

from __future__ import annotations

import argparse
import logging
import sys
import traceback

from .downscale import VARIANTS
from .errors import IngestionError, PipelineError
from .pipeline import STAGE_ORDER, PipelineConfig, run_stage

EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_INTERNAL = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stormgen",
        description="Bias-correct and stochastically downscale daily "
                    "temperature simulations.")
    parser.add_argument("stage", choices=STAGE_ORDER + ["all"],
                        help="pipeline stage to run")
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--variant", choices=VARIANTS, default=None,
                        help="override the downscaling variant")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr,
                        level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    log = logging.getLogger("stormgen")
    try:
        cfg = PipelineConfig.load(args.config, seed=args.seed, variant=args.variant)
    except FileNotFoundError:
        log.error("config file not found: %s", args.config)
        return EXIT_USER_ERROR
    except (PipelineError, ValueError, KeyError, TypeError) as exc:
        log.error("bad config: %s", exc)
        return EXIT_USER_ERROR
    try:
        artifacts = run_stage(args.stage, cfg)
    except (PipelineError, IngestionError, ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_USER_ERROR
    except Exception:
        log.error("internal error:\n%s", traceback.format_exc())
        return EXIT_INTERNAL
    for p in artifacts:
        log.info("wrote %s", p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
