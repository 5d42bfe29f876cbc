#!/usr/bin/env python3
"""
Nonlocal Wave Lab - command-line entry point.

Usage: python cli.py {simulate,verify,sweep,pair,resolvent} [--config PATH] [--out DIR]
       [--seed N] [--workers N] [--set KEY=VAL ...] [--log-level LEVEL]
"""

import sys

from app.cli import main

if __name__ == "__main__":
    sys.exit(main())
