"""Acceptance criterion 9: end to end toy. Exits nonzero on failure."""
import sys

from bridgehaze.repro.__main__ import main

sys.exit(main(["9", *sys.argv[1:]]))
