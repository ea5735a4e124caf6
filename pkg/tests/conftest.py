import pathlib

import pytest

from misslab.graph import load_mgraph

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


def fixture_path(name: str) -> pathlib.Path:
    return FIXTURES / name


@pytest.fixture(scope="session")
def graphs():
    """All shipped example graphs, keyed by stem."""
    return {p.stem: load_mgraph(p) for p in sorted(FIXTURES.glob("*.mg"))}
