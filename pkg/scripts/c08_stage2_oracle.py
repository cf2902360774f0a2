"""Acceptance criterion 8: stage2 oracle. Exits nonzero on failure."""
import sys

from bridgehaze.repro.__main__ import main

sys.exit(main(["8", *sys.argv[1:]]))
