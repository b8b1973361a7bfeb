#!/usr/bin/env python3
"""Render the bounds chart from the simulator's CSV output."""

import sys

from plotspec import main_for_kind

if __name__ == "__main__":
    sys.exit(main_for_kind("bounds"))
