"""Acceptance criterion 3: posterior oracle. Exits nonzero on failure."""
import sys

from bridgehaze.repro.__main__ import main

sys.exit(main(["3", *sys.argv[1:]]))
