import os

import numpy as np
import pytest
import torch

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.manual_seed(0)
    np.random.seed(0)
    yield


@pytest.fixture(scope="session")
def toy_models():
    """Toy models for the end-to-end criteria, trained once per session.

    Set BRIDGEHAZE_ACCEPTANCE_CACHE to a directory to reuse checkpoints across runs.
    """
    from bridgehaze.repro import ToyModels

    return ToyModels(cache_dir=os.environ.get("BRIDGEHAZE_ACCEPTANCE_CACHE"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
