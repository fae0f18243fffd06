#!/usr/bin/env python3
"""
Storage Sizing CLI - shared energy-storage sizing for peak-hour demand

Usage: python main.py <command> --input scenarios/<scenario>.json [options]

Commands: size, capacity, effdemand, admit, simulate, economics, sweep.
Settings can be placed in a .env file (see README.md).
"""

import os
import sys

# Add the src directory to Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "src"))

from cli import run


def main():
    """Main entry point"""
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
