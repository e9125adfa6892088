import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from esclab.scenario import load_default_scenario, parse_scenario
from esclab.taxonomy import load_default_taxonomy


@pytest.fixture(scope="session")
def taxonomy():
    return load_default_taxonomy()


@pytest.fixture(scope="session")
def scenario():
    return load_default_scenario()


def small_scenario(n_nations: int = 3, days: int = 4):
    """A tiny scenario for fast randomized fixtures."""
    names = ["Alpha", "Beta", "Gamma", "Delta"][:n_nations]
    return parse_scenario(
        {
            "name": "mini",
            "days": days,
            "initial_summary": "Calm start.",
            "nations": [
                {"name": name, "background": f"{name} background.",
                 "objectives": [f"{name} objective"]}
                for name in names
            ],
        }
    )


@pytest.fixture
def mini_scenario():
    return small_scenario()
