"""``python -m bridgehaze.repro [N ...] [--cache DIR]``: run acceptance criteria."""
import argparse
import logging
import os
import sys

from . import TITLES, ToyModels, run


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="python -m bridgehaze.repro", description=__doc__)
    p.add_argument("criteria", nargs="*", type=int, help="criterion numbers (default: all)")
    p.add_argument("--cache", help="directory for trained toy checkpoints")
    args = p.parse_args(argv)
    logging.basicConfig(level=os.environ.get("BRIDGEHAZE_LOG", "WARNING").upper())
    models = ToyModels(cache_dir=args.cache)
    failed = []
    for n in args.criteria or sorted(TITLES):
        res = run(n, models)
        print(res.line(), flush=True)
        if not res.passed:
            failed.append(n)
    if failed:
        print(f"failed criteria: {failed}", file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
