import argparse
import logging
import sys

from commands.evaluation import (
    EXIT_CONFIG, EXIT_NO_INPUTS, EXIT_OK, EXIT_PARTIAL, setup_evaluation_commands,
)
from commands.help import format_command_list, setup_help_command
from commands.reporting import setup_reporting_commands
from config import LOG_LEVEL, load_run_config
from errors import ConfigError, EmptyInput, EmptyJoin, EvalError, SchemaError, VideoLoadError

logger = logging.getLogger("vge")

# Flags that map one-to-one onto RunConfig fields
OVERRIDE_FIELDS = (
    "backend", "mock_script", "workers", "seed", "force", "segment_agg",
    "prompts", "videos_root", "flow_root", "annotations", "output_dir", "task_mode",
)


def configure_logging(level: str | None) -> None:
    logging.basicConfig(
        level=(level or LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="JSON run configuration")
    common.add_argument("--backend", choices=["real", "mock"])
    common.add_argument("--mock-script", help="JSON script for the mock backend")
    common.add_argument("--workers", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--force", action="store_true", default=None, help="re-evaluate videos already done")
    common.add_argument("--segment-agg", choices=["mean", "max"])
    common.add_argument("--output-dir", help="where records, tool reports and reports go")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vge", description="Agent-based evaluation of generated videos")
    subparsers = parser.add_subparsers(dest="command", metavar="<command>")
    common = common_options()

    # Commands - add new command modules here
    setup_evaluation_commands(subparsers, common)
    setup_reporting_commands(subparsers, common)
    setup_help_command(subparsers, common)

    parser.set_defaults(handler=None, subparsers=subparsers)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(getattr(args, "log_level", None))

    if args.handler is None:
        print(format_command_list(args.subparsers))
        return EXIT_OK

    overrides = {name: getattr(args, name, None) for name in OVERRIDE_FIELDS}
    try:
        config = load_run_config(args.config, overrides)
        return args.handler(args, config)
    except ConfigError as e:
        logger.error("configuration error: %s", e)
        return EXIT_CONFIG
    except (SchemaError, VideoLoadError) as e:
        logger.error("invalid input: %s", e)
        return EXIT_CONFIG
    except (EmptyInput, EmptyJoin) as e:
        logger.error("nothing to do: %s", e)
        return EXIT_NO_INPUTS
    except EvalError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_PARTIAL
    except KeyboardInterrupt:
        logger.warning("stopped")
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
