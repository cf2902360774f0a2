"""Acceptance criterion 6: gradient checks. Exits nonzero on failure."""
import sys

from bridgehaze.repro.__main__ import main

sys.exit(main(["6", *sys.argv[1:]]))
