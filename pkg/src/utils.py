# ----------------------------------------------------------------
# RapidStab 1.0 - Utils (GPLv3)
# Copyright (C) 2025 The RapidStab Authors
# License: GNU GPL v3+ <https://www.gnu.org/licenses/gpl-3.0.txt>
# This is free software with NO WARRANTY.
# ----------------------------------------------------------------

# Standard library imports
import argparse
import logging
import sys
from typing import Any, List, NoReturn, Optional, Tuple

# Local application imports
import info

COMMANDS = ("synth", "simulate", "kernel", "finite-dim", "saint-venant")


# =============================================================================
# LOGGING
# =============================================================================


def setup_logging(verbose: bool = False) -> None:
    """Single stderr handler; -v switches library diagnostics to DEBUG"""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbose else logging.WARNING)


# =============================================================================
# USER INTERFACE FUNCTIONS
# =============================================================================


def print_summary(title: str, rows: List[Tuple[str, Any]]) -> None:
    """Aligned key/value block on stdout"""
    print(f"\n{title}")
    width = max((len(str(key)) for key, _ in rows), default=0)
    for key, value in rows:
        if isinstance(value, float):
            value = f"{value:.6g}"
        print(f"  {str(key).ljust(width)} : {value}")
    print()


# =============================================================================
# PROGRAM INFORMATION
# =============================================================================


def show_info() -> None:
    """Show program information and license"""
    info.print_info()
    info.print_license_parts()


# =============================================================================
# COMMAND LINE ARGUMENTS
# =============================================================================


class ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1"""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        clean_exit(1, message)


def build_parser() -> argparse.ArgumentParser:
    parser = ArgumentParser(
        prog="rapidstab", description="Rapid stabilization toolkit for the linearized bilinear Schrödinger equation"
    )
    parser.add_argument("-i", "--info", action="store_true", help="Show program information and exit")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    helps = {
        "synth": "Synthesize gains and the transformation T",
        "simulate": "Simulate the closed loop from synthesized gains",
        "kernel": "Dump the kernels k12, k22 on a grid",
        "finite-dim": "Finite-dimensional (T, K) pole shift",
        "saint-venant": "Explicit Saint-Venant transformation and simulation",
    }
    for name in COMMANDS:
        sub = subparsers.add_parser(name, help=helps[name])
        sub.add_argument("--config", required=True, help="JSON run document")
        sub.add_argument("-v", "--verbose", action="store_true", help="Log diagnostics to stderr")
    return parser


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Handle command-line arguments"""
    return build_parser().parse_args(argv)


# =============================================================================
# EXIT AND SIGNAL HANDLING
# =============================================================================


def handle_sigint(signum: int, frame: Any) -> NoReturn:
    """Handle SIGINT (Ctrl+C) gracefully"""
    sys.stdout.write("\nRun interrupted.\n")
    sys.stdout.flush()
    sys.exit(128 + signum)  # In case of Ctrl+C, 128+2 as defined by POSIX


def clean_exit(code: int = 0, message: Optional[str] = None) -> NoReturn:
    """Flush, report a one-line error when given and exit with `code`"""
    sys.stdout.flush()
    if message:
        print(f"rapidstab: error: {message}", file=sys.stderr)
    sys.exit(code)
