import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mvrecon.hierarchy import NodeTree, build_hierarchy, example_tree  # noqa: E402


@pytest.fixture
def example_h():
    return build_hierarchy(example_tree())


@pytest.fixture
def chain_h():
    return build_hierarchy(NodeTree.from_parents({"T": None, "X": "T"}))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
