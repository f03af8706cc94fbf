import pathlib

import pytest

GOLDEN = pathlib.Path(__file__).parent / "golden"


@pytest.fixture
def golden_dir() -> pathlib.Path:
    return GOLDEN
