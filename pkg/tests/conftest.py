import numpy as np
import pytest
import torch

from intentraj.config import RunConfig
from intentraj.scenegen import GenConfig, generate_scenario


def tiny_config(**changes) -> RunConfig:
    """Gradient-check dimensions: 20x20 grid, tau=2, delta=3, d=m=8."""
    base = dict(tau=2, delta=3, H=20, W=20, res=1.0, d=8, m=8, edge=8, latent=4,
                hidden=16, conv=4, batch_size=4, epochs=1, pen_every=1)
    base.update(changes)
    return RunConfig(**base)


@pytest.fixture
def tiny_cfg():
    return tiny_config()


@pytest.fixture(scope="session")
def scenario():
    return generate_scenario(11, GenConfig())


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)
    np.random.seed(0)


# acceptance lines collected by tests/test_acceptance.py, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
