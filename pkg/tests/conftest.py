from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # oracles.py, generators.py

from whynot.explain import whynot_pipeline
from whynot.fixtures import attribute_alternatives, question

REPO = Path(__file__).resolve().parent.parent


@pytest.fixture
def fixture_question():
    return question()


@pytest.fixture(scope="session")
def fixture_pipeline():
    return whynot_pipeline(question(), attribute_alternatives())


@pytest.fixture(scope="session")
def scenario_dir(tmp_path_factory) -> Path:
    from whynot.fixtures import write_scenario
    directory = tmp_path_factory.mktemp("scenario")
    write_scenario(directory)
    return directory
