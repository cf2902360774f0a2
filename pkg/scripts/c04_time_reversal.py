"""Acceptance criterion 4: time reversal. Exits nonzero on failure."""
import sys

from bridgehaze.repro.__main__ import main

sys.exit(main(["4", *sys.argv[1:]]))
