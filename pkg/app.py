"""
Command-line entry point of the δ-shell NLS laboratory.

    python app.py spectrum --a 1 --alpha -4
    python app.py bifurcation --a 1 --alpha -4 --n 2 --output folds.json
    python app.py evolve --eta -50 --sigma 3 --psi0-width 0.3 --format csv --output run.csv

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 numerical blow-up halt.
"""

import argparse
import logging
import sys
from typing import List, Optional

from Utils import constants
from Utils.config import SUBCOMMANDS, PSI0_KINDS, BACKENDS, RunConfig, configure_logging, load_config_file
from Utils.errors import NUMERICAL_ERRORS, ConfigError, WinterNLSError
from services.export_service import ExportService
from services.experiment_service import ExperimentService

logger = logging.getLogger(__name__)


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text}")


def _times(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value, JSON or artifact file with run settings")
    common.add_argument("--output", dest="output_path", help="artifact path (default: stdout)")
    common.add_argument("--format", dest="output_format", choices=["csv", "json"])
    common.add_argument("--timestamp", action="store_true", default=None, help="add generated_at to headers")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")

    model = common.add_argument_group("model")
    model.add_argument("--a", type=float)
    model.add_argument("--alpha", type=float)
    model.add_argument("--eta", type=float)
    model.add_argument("--sigma", type=float)
    model.add_argument("--g", type=int, choices=[-1, 1])

    numerics = common.add_argument_group("numerics")
    numerics.add_argument("--L", type=float)
    numerics.add_argument("--dx", type=float)
    numerics.add_argument("--dt", type=float)
    numerics.add_argument("--t-final", dest="t_final", type=float)
    numerics.add_argument("--q", type=float)
    numerics.add_argument("--psi0-kind", dest="psi0_kind", choices=PSI0_KINDS)
    numerics.add_argument("--psi0-center", dest="psi0_center", type=float)
    numerics.add_argument("--psi0-width", dest="psi0_width", type=float)
    numerics.add_argument("--psi0-momentum", dest="psi0_momentum", type=float)
    numerics.add_argument("--psi0-file", dest="psi0_file")
    numerics.add_argument("--observers-stride", dest="observers_stride", type=int)
    numerics.add_argument("--renormalize", type=_bool)
    numerics.add_argument("--snapshot", dest="snapshot_path", help="CSV path for a field snapshot")
    numerics.add_argument("--p-points", dest="p_points", type=int)
    numerics.add_argument("--lambda-max", dest="lambda_max", type=float)
    numerics.add_argument("--n", type=int)
    numerics.add_argument("--eta-min", dest="eta_min", type=float)
    numerics.add_argument("--ell", type=int, choices=[1, 2])
    numerics.add_argument("--backend", choices=BACKENDS)
    numerics.add_argument("--seed", type=int)
    numerics.add_argument("--times", type=_times, help="comma-separated observation times")

    parser = argparse.ArgumentParser(prog="winter-nls-lab", description="δ-shell NLS laboratory")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """
    Execute one subcommand.

    Args:
        argv: Arguments without the program name (default: sys.argv[1:])

    Returns:
        Exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return constants.EXIT_OK if e.code in (0, None) else constants.EXIT_CONFIG

    cli_values = vars(args).copy()
    subcommand = cli_values.pop("subcommand")
    config_path = cli_values.pop("config")
    log_level = cli_values.pop("log_level")

    try:
        configure_logging(log_level)
        file_values = load_config_file(config_path) if config_path else {}
        config = RunConfig.from_sources(subcommand, file_values=file_values, cli_values=cli_values)
    except ConfigError as e:
        print(f"❌ Configuration error: {e}", file=sys.stderr)
        return constants.EXIT_CONFIG

    exporter = ExportService(timestamp=config.timestamp)
    experiments = ExperimentService(exporter)
    try:
        outcome = experiments.run(config)
        echo = config.to_echo()
        if config.output_format == "csv" and outcome.table is not None:
            text = exporter.csv_document(echo, outcome.table, outcome.columns)
        else:
            text = exporter.json_document(echo, outcome.result)
        if config.output_path:
            exporter.write_atomic(config.output_path, text)
        else:
            sys.stdout.write(text)
    except ConfigError as e:
        print(f"❌ Configuration error: {e}", file=sys.stderr)
        return constants.EXIT_CONFIG
    except NUMERICAL_ERRORS as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return constants.EXIT_NUMERICAL
    except WinterNLSError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return constants.EXIT_NUMERICAL

    if outcome.halted:
        logger.warning("❌ Run halted by the blow-up detector")
        return constants.EXIT_BLOWUP
    return constants.EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
