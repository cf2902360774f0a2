"""Acceptance criterion 5: rdc merge. Exits nonzero on failure."""
import sys

from bridgehaze.repro.__main__ import main

sys.exit(main(["5", *sys.argv[1:]]))
