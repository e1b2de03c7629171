import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from pmsplan import worked_example as we
from pmsplan.priors import PriorSpec
from pmsplan.supply_model import estimate_sourcing

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def worked():
    """Network, data, sourcing and the middle-risk prior of the worked example."""
    net = we.network()
    data = we.dataset()
    return net, data, estimate_sourcing(data, net), PriorSpec(np.full(6, 0.1), 2.0)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
