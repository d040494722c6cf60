import os

import pytest

from wtg.model import load_game

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)


@pytest.fixture(scope="session")
def figure1():
    return load_game(fixture_path("figure1.json"))
