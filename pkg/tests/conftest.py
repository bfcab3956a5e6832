import numpy as np
import pytest

from sphereflow.curvfun import SigmaK
from sphereflow.dual import polar_dual
from sphereflow.flow import (
    CONTRACTING,
    EXPANDING,
    FlowSpec,
    MaxRadiusAbove,
    MinRadiusBelow,
    dual_run,
    run,
)
from sphereflow.hypersurface import AxiGrid, perturbed_sphere

PROLATE = dict(r=np.pi / 4, amp=0.05, mode=2)

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def prolate(N=256, n=2):
    return perturbed_sphere(AxiGrid(N, n), **PROLATE)


@pytest.fixture(scope="session")
def prolate_contracting():
    """sigma_2 flow of the prolate shape at N=256 down to u_min < 0.015."""
    spec = FlowSpec(CONTRACTING, SigmaK(2), 0.2, 500, MinRadiusBelow(0.015))
    return run(spec, prolate())


@pytest.fixture(scope="session")
def prolate_expanding():
    """Expanding flow from the polar of the prolate shape until pi/2 - u* < 0.015."""
    spec = FlowSpec(EXPANDING, SigmaK(2), 0.2, 500, MaxRadiusAbove(np.pi / 2 - 0.015))
    return run(spec, polar_dual(prolate()).dual)


@pytest.fixture(scope="session")
def dual_reports():
    """dual_run on the prolate shape at N=128 and N=256."""
    return {N: dual_run(SigmaK(2), prolate(N), MinRadiusBelow(0.1), snapshot_stride=250) for N in (128, 256)}
