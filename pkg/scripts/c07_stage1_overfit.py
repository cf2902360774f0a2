"""Acceptance criterion 7: stage1 overfit. Exits nonzero on failure."""
import sys

from bridgehaze.repro.__main__ import main

sys.exit(main(["7", *sys.argv[1:]]))
