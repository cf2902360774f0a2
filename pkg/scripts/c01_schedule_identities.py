"""Acceptance criterion 1: schedule identities. Exits nonzero on failure."""
import sys

from bridgehaze.repro.__main__ import main

sys.exit(main(["1", *sys.argv[1:]]))
