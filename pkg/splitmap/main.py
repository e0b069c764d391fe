"""Command-line entry point: run, validate and diagnose scenarios."""

import argparse
import json
import logging
import sys
from typing import Optional

from . import __version__
from .config import get_settings
from .errors import ConfigError, SplitmapError
from .runner import ScenarioRunner
from .scenarios import load_scenario
from .storage import read_field

logger = logging.getLogger(__name__)


def _configure_logging() -> None:
    settings = get_settings()
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper()),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splitmap", description="Split harmonic maps and heat flows")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, help_text in (("run", "execute the scenario pipeline"),
                            ("validate", "check boundary data compatibility"),
                            ("diagnose", "diagnostics of a saved field")):
        p = sub.add_parser(verb, help=help_text)
        p.add_argument("--config", required=True, help="scenario TOML file")
        p.add_argument("--out", help="artifact directory")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--threads", type=int, help="threads for independent diagnostic curves")
        if verb == "diagnose":
            p.add_argument("--field", help="field.csv of a previous run")
    return parser


def _error(exc: SplitmapError) -> int:
    print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
    return 2 if isinstance(exc, ConfigError) else 1


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging()
    try:
        scenario = load_scenario(args.config)
        if args.seed is not None:
            scenario = scenario.model_copy(update={"seed": args.seed})
        runner = ScenarioRunner(scenario, out_dir=args.out, threads=args.threads)
        if args.verb == "validate":
            report = runner.validate()
            print(report.model_dump_json(indent=2))
            return 0 if report.ok else 1
        if args.verb == "diagnose":
            path = getattr(args, "field", None) or scenario.field_path
            if not path:
                raise ConfigError("diagnose needs --field or field_path", field="field_path")
            runner.diagnose(read_field(path, runner.problem.grid))
        else:
            runner.run()
    except SplitmapError as exc:
        logger.error(f"{type(exc).__name__}: {exc.message}")
        return _error(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
