import numpy as np
import pytest

# pass/fail lines registered by the acceptance suite, echoed at the end of
# the run so they are visible without -s
_ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from inpaintbench.backends import (
    OracleClassifier,
    OracleInpainter,
    OracleWorld,
    RandomAttributor,
    TemplateAttributor,
)


@pytest.fixture(scope="session")
def world():
    return OracleWorld()


@pytest.fixture(scope="session")
def small_world():
    # 8x8 grids keep the pixel-granularity ablation cheap
    return OracleWorld(grid_shape=(4, 4), patch_size=2, n_classes=4, region_size=4, seed=1)


@pytest.fixture
def classifier(world):
    return OracleClassifier(world)


@pytest.fixture
def ood_classifier(world):
    return OracleClassifier(world, ood_sensitive=True)


@pytest.fixture
def inpainter(world):
    return OracleInpainter(world)


@pytest.fixture
def ground_truth(world):
    return TemplateAttributor(world)


@pytest.fixture
def random_attributor(world):
    return RandomAttributor(0, world.grid_shape, world.patch_size)
