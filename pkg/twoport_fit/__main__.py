"""
Main entry point for the two-port circuit design tool.
"""
import sys

from twoport_fit.cli.commands import main

if __name__ == '__main__':
    sys.exit(main())
