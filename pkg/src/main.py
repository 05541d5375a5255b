import argparse
import logging
import sys

from src.cli.config import load_run_config
from src.cli.handlers import register_handlers
from src.config import settings
from src.runtime.worker import run

logging.basicConfig(
    level=settings.log_level,
    format="%(asctime)s [%(name)s] %(levelname)s: %(message)s",
)
logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mht", description="Mixed hitting-time duration models"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    register_handlers(subparsers)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = vars(build_parser().parse_args(argv))
    config_path = args.pop("config", None)
    raw = load_run_config(config_path) if config_path else {}
    raw.update(args)
    return run(raw)


if __name__ == "__main__":
    sys.exit(main())
