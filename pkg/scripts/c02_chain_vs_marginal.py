"""Acceptance criterion 2: chain vs marginal. Exits nonzero on failure."""
import sys

from bridgehaze.repro.__main__ import main

sys.exit(main(["2", *sys.argv[1:]]))
