"""
Entry point for running OrderScout as a module: python -m orderscout

This allows users to run:
    python -m orderscout gen-data --task relu --len 13 --size 5000 --out data/train.jsonl
    python -m orderscout search --task relu --len 13 --depth 3
"""

import sys
from orderscout.cli.main import main

if __name__ == '__main__':
    sys.exit(main())
