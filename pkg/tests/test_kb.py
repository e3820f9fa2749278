import itertools

import pytest

from conftest import TOY_TRIPLES, TOY_TYPES
from kbqa_metarl.kb import KBFormatError, KnowledgeBase, select, select_all


def brute_select(e, r, t):
    return {o for s, rr, o in TOY_TRIPLES if s == e and rr == r and TOY_TYPES[o] == t}


def test_select_matches_brute_force(toy_kb):
    rels = {r for _, r, _ in TOY_TRIPLES} | {"missing"}
    for e, r, t in itertools.product(TOY_TYPES, rels, set(TOY_TYPES.values()) | {"void"}):
        assert select(toy_kb, e, r, t) == brute_select(e, r, t)


def test_select_examples(toy_kb):
    assert toy_kb.select("SergioPiacentini", "occupation_of", "occupation") == {"footballer", "politician"}
    assert toy_kb.select("SergioPiacentini", "no_such_relation", "occupation") == set()
    # typed filter: Bob's citizenships are countries, not people
    assert toy_kb.select("Bob", "country_of_citizenship", "person") == set()
    assert toy_kb.select("Nobody", "occupation_of", "occupation") == set()


def test_union_over_types_is_all_objects(toy_kb):
    for e, r in {(s, r) for s, r, _ in TOY_TRIPLES}:
        union = set().union(*(toy_kb.select(e, r, t) for t in toy_kb.types))
        assert union == {o for s, rr, o in TOY_TRIPLES if (s, rr) == (e, r)}


def test_select_all(toy_kb):
    groups = select_all(toy_kb, "country", "has_citizen", "person")
    assert groups == {"Austria": {"HermineMospointner", "Bob"}, "Spain": {"Bob"}}
    for s, g in groups.items():
        assert g == toy_kb.select(s, "has_citizen", "person")
    assert select_all(toy_kb, "planet", "has_citizen", "person") == {}
    # cached result is not shared with callers
    groups.clear()
    assert len(toy_kb.select_all("country", "has_citizen", "person")) == 2


def test_entities_of_type_sorted(toy_kb):
    assert toy_kb.entities_of_type("country") == ("Austria", "Spain", "Valdeobispo")


def test_round_trip(toy_kb, tmp_path):
    path = tmp_path / "kb.txt"
    toy_kb.save(path)
    again = KnowledgeBase.load(path)
    assert again == toy_kb
    assert again.dumps() == toy_kb.dumps()


def test_untyped_triple_rejected():
    with pytest.raises(ValueError):
        KnowledgeBase.from_triples([("a", "r", "b")], {"a": "x"})


@pytest.mark.parametrize(
    "text, line",
    [
        ("#type a x\na r\n", 2),
        ("#type a x\n#type a y\n", 2),
        ("#type a\n", 1),
        ("#bogus a x\n", 1),
        ("#type a x\n\na r b\n", 3),
    ],
)
def test_loader_errors_carry_line_numbers(text, line):
    with pytest.raises(KBFormatError) as info:
        KnowledgeBase.loads(text)
    assert info.value.lineno == line
    assert f"line {line}" in str(info.value)
