"""Acceptance criterion 10: steps ablation. Exits nonzero on failure."""
import sys

from bridgehaze.repro.__main__ import main

sys.exit(main(["10", *sys.argv[1:]]))
