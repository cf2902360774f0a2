"""Acceptance criterion 11: variance ablation. Exits nonzero on failure."""
import sys

from bridgehaze.repro.__main__ import main

sys.exit(main(["11", *sys.argv[1:]]))
