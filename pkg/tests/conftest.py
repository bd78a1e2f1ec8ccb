import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fsmqa import datasets
from fsmqa.gateway import ScriptedBackend

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def hotpot_records():
    return datasets.load(FIXTURES / "hotpot_fixture.json", "hotpotqa")


@pytest.fixture(scope="session")
def twowiki_records():
    return datasets.load(FIXTURES / "twowiki_fixture.json", "2wiki")


@pytest.fixture(scope="session")
def musique_records():
    return datasets.load(FIXTURES / "musique_fixture.jsonl", "musique")


@pytest.fixture(scope="session")
def canonical_record(hotpot_records):
    return hotpot_records[0]


@pytest.fixture(scope="session")
def canonical_rules():
    data = json.loads((FIXTURES / "canonical_script.json").read_text(encoding="utf-8"))
    return data["rules"]


@pytest.fixture()
def canonical_backend(canonical_rules):
    return ScriptedBackend(canonical_rules)
