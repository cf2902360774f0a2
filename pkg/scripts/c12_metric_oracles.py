"""Acceptance criterion 12: metric oracles. Exits nonzero on failure."""
import sys

from bridgehaze.repro.__main__ import main

sys.exit(main(["12", *sys.argv[1:]]))
