#!/usr/bin/env python3

# ----------------------------------------------------------------
# RapidStab 1.0 - Command Line Entry (GPLv3)
# Copyright (C) 2025 The RapidStab Authors
# License: GNU GPL v3+ <https://www.gnu.org/licenses/gpl-3.0.txt>
# This is free software with NO WARRANTY.
# ----------------------------------------------------------------

# Standard library imports
import logging
import signal
import sys
from typing import List, NoReturn, Optional

# Local application imports
from commands import COMMAND_TABLE
from config import RunConfig, config_manager
from errors import RapidStabError
import utils

logger = logging.getLogger(__name__)


def run(argv: Optional[List[str]] = None) -> int:
    """Parse, configure and dispatch one subcommand; returns the exit code"""
    args = utils.parse_arguments(argv)
    if args.info:
        utils.show_info()
        return 0
    if not args.command:
        utils.build_parser().print_help(sys.stderr)
        return 1

    utils.setup_logging(args.verbose)
    try:
        config_manager.reset()
        config_manager.load(args.config)
        cfg = RunConfig.from_manager(config_manager, args.command)
        COMMAND_TABLE[args.command](cfg)
    except RapidStabError as e:
        logger.debug("%s failed: %s", args.command, type(e).__name__)
        utils.clean_exit(e.exit_code, e.message)
    return 0


def main() -> NoReturn:
    # Register signal handler (for OS-level interrupts)
    signal.signal(signal.SIGINT, utils.handle_sigint)
    utils.clean_exit(run())


if __name__ == "__main__":
    main()
