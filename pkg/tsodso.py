#!/usr/bin/env python3
"""
tsodso.py
─────────
Entry point for the tsodsoGame command line. See ``tsodsoGame/cli.py`` for
the subcommands, or run

    python tsodso.py --help
"""

import sys

from tsodsoGame.cli import run_cli


if __name__ == "__main__":
    sys.exit(run_cli(sys.argv[1:]))
