import numpy as np
import pytest

from eitinterp.forward import ConductivityField
from eitinterp.geometry import build_disk_mesh, build_pixel_partition
from eitinterp.sensitivity import assemble_sensitivity

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def _disk(refinement, m, level=0):
    mesh, layout = build_disk_mesh(refinement, m, 0.5)
    partition = build_pixel_partition(mesh, level)
    S = assemble_sensitivity(mesh, layout, partition, ConductivityField.constant(mesh, 1.0))
    return mesh, layout, partition, S


@pytest.fixture(scope="session")
def disk8():
    """Refinement 3 disk with 8 electrodes and one pixel per triangle."""
    return _disk(3, 8)


@pytest.fixture(scope="session")
def disk16():
    return _disk(4, 16)


@pytest.fixture(scope="session")
def disk16_coarse_pixels():
    """Refinement 4, 16 electrodes, pixels of 16 triangles."""
    return _disk(4, 16, level=2)
