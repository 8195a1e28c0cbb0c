"""
Command-line interface for OrderScout.

Thin argparse layer over the library: every subcommand loads or generates
data, calls one library entry point and prints a result record.
"""

from .main import main

__all__ = ['main']
