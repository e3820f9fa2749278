import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kbqa_metarl.data import GeneratorSizes, generate_dataset  # noqa: E402
from kbqa_metarl.kb import KnowledgeBase  # noqa: E402

TOY_TYPES = {
    "SergioPiacentini": "person",
    "AntoinetteSandbach": "person",
    "HermineMospointner": "person",
    "Bob": "person",
    "Austria": "country",
    "Valdeobispo": "country",
    "Spain": "country",
    "politician": "occupation",
    "judge": "occupation",
    "lawyer": "occupation",
    "footballer": "occupation",
}

TOY_TRIPLES = [
    ("SergioPiacentini", "occupation_of", "footballer"),
    ("SergioPiacentini", "occupation_of", "politician"),
    ("AntoinetteSandbach", "position_held", "judge"),
    ("AntoinetteSandbach", "position_held", "politician"),
    ("AntoinetteSandbach", "occupation_of", "lawyer"),
    ("HermineMospointner", "country_of_citizenship", "Austria"),
    ("Bob", "country_of_citizenship", "Spain"),
    ("Bob", "country_of_citizenship", "Austria"),
    ("Bob", "occupation_of", "lawyer"),
    ("Austria", "has_citizen", "HermineMospointner"),
    ("Austria", "has_citizen", "Bob"),
    ("Spain", "has_citizen", "Bob"),
]


@pytest.fixture
def toy_kb():
    return KnowledgeBase.from_triples(TOY_TRIPLES, TOY_TYPES)


@pytest.fixture(scope="session")
def small_dataset():
    sizes = GeneratorSizes(entities_per_type=30, n_train=140, n_valid=14, n_test=35)
    return generate_dataset(7, sizes)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
