import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from fgtseg.phantom import PhantomSpec, generate_phantom  # noqa: E402


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)
    np.random.seed(0)


@pytest.fixture(scope="session")
def phantom():
    return generate_phantom(PhantomSpec(seed=11, target_density=0.3), case_id="p11")


@pytest.fixture(scope="session")
def noisy_phantom():
    return generate_phantom(PhantomSpec(seed=12, noise_sigma=5.0, bias_field_strength=0.1), case_id="p12")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
