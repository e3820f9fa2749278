"""Synthetic knowledge base and question generator covering seven question categories.

Every generated question carries the KB artifacts it mentions and a gold
program; the gold answer is whatever that program executes to. Entity
mentions appear in ``question_tokens`` as the entity ids themselves.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .interpreter import (
    Action,
    Bools,
    Count,
    Entities,
    Program,
    answer_from_json,
    answer_to_json,
    execute,
)
from .kb import KnowledgeBase
from .programmer import Artifacts

CATEGORIES = (
    "Simple Question",
    "Logical Reasoning",
    "Quantitative Reasoning",
    "Verification (Boolean)",
    "Comparative Reasoning",
    "Quantitative (Count)",
    "Comparative (Count)",
)

# training-set sizes of the seven categories in the public CQA release, in thousands
CQA_PROPORTIONS = (462, 93, 99, 43, 41, 122, 42)

TYPE_WORDS = {
    "person": "people",
    "country": "countries",
    "city": "cities",
    "river": "rivers",
    "occupation": "occupations",
    "organization": "organizations",
    "language": "languages",
    "award": "awards",
}

# forward relation, inverse relation, subject type, object type, (min, max) objects per subject,
# object-side phrase of forward, object-side phrase of inverse
RELATION_PAIRS = (
    ("citizenship", "has_citizen", "person", "country", (1, 2), "have as citizen", "are citizens of"),
    ("occupation", "practiced_by", "person", "occupation", (1, 3), "are professions of", "practice"),
    ("position_held", "held_by", "person", "occupation", (0, 2), "were positions held by", "held the position"),
    ("flows_through", "has_river", "river", "country", (1, 3), "are crossed by", "flow through"),
    ("located_in", "has_city", "city", "country", (1, 1), "contain", "are located in"),
    ("member_of", "has_member", "person", "organization", (0, 2), "have as member", "are members of"),
    ("speaks", "spoken_by", "person", "language", (1, 2), "are spoken by", "speak"),
    ("official_language", "official_in", "country", "language", (1, 2), "are official in", "have as official language"),
    ("won", "awarded_to", "person", "award", (0, 2), "were won by", "won"),
    ("born_in", "birthplace_of", "person", "city", (1, 1), "are birthplaces of", "were born in"),
    ("headquartered_in", "hosts", "organization", "city", (1, 1), "host the headquarters of", "are based in"),
    ("borders", "borders", "country", "country", (1, 3), "border", "border"),
)


@dataclass(frozen=True)
class RelationInfo:
    name: str
    subject_type: str
    object_type: str
    phrase: tuple  # read as "which <objects> <phrase> <subject>"


def relation_table() -> dict:
    table = {}
    for fwd, inv, st, ot, _, fwd_phrase, inv_phrase in RELATION_PAIRS:
        table[fwd] = RelationInfo(fwd, st, ot, tuple(fwd_phrase.split()))
        table[inv] = RelationInfo(inv, ot, st, tuple(inv_phrase.split()))
    return table


RELATIONS = relation_table()


@dataclass(frozen=True)
class Sample:
    id: str
    category: str
    question_tokens: tuple
    artifacts: Artifacts
    gold_answer: object
    gold_program: Optional[Program] = None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "category": self.category,
            "question": list(self.question_tokens),
            "entities": list(self.artifacts.entities),
            "relations": list(self.artifacts.relations),
            "types": list(self.artifacts.types),
            "answer": answer_to_json(self.gold_answer),
            "program": None if self.gold_program is None else str(self.gold_program),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Sample":
        program = obj.get("program")
        return cls(
            id=obj["id"],
            category=obj["category"],
            question_tokens=tuple(obj["question"]),
            artifacts=Artifacts(tuple(obj["entities"]), tuple(obj["relations"]), tuple(obj["types"])),
            gold_answer=answer_from_json(obj["answer"]),
            gold_program=None if program is None else Program.parse(program),
        )

    @property
    def text(self) -> str:
        return " ".join(self.question_tokens)


def save_samples(path, samples) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json(), sort_keys=True) + "\n")


def load_samples(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [Sample.from_json(json.loads(line)) for line in fh if line.strip()]


class GenerationError(RuntimeError):
    pass


@dataclass
class GeneratorSizes:
    entities_per_type: int = 100
    n_train: int = 3000
    n_valid: int = 300
    n_test: int = 700
    max_number: int = 4
    retries: int = 500


# -- knowledge base ------------------------------------------------------------


def generate_kb(rng: np.random.Generator, entities_per_type: int) -> KnowledgeBase:
    entity_types = {}
    by_type = {}
    for t in TYPE_WORDS:
        ids = [f"{t}_{k:03d}" for k in range(entities_per_type)]
        by_type[t] = ids
        entity_types.update((e, t) for e in ids)
    triples = set()
    for fwd, inv, st, ot, (lo, hi), _, _ in RELATION_PAIRS:
        objects = by_type[ot]
        for s in by_type[st]:
            n = int(rng.integers(lo, hi + 1))
            for o in rng.choice(len(objects), size=min(n, len(objects)), replace=False):
                o = objects[int(o)]
                if o == s:
                    continue
                triples.add((s, fwd, o))
                triples.add((o, inv, s))
    return KnowledgeBase.from_triples(triples, entity_types)


# -- question templates ------------------------------------------------------------


def _ordered_unique(items):
    seen = []
    for x in items:
        if x not in seen:
            seen.append(x)
    return tuple(seen)


def _artifacts(entities, relations, types):
    return Artifacts(_ordered_unique(entities), _ordered_unique(relations), _ordered_unique(types))


class _Templates:
    def __init__(self, kb: KnowledgeBase, rng: np.random.Generator, max_number: int):
        self.kb = kb
        self.rng = rng
        self.max_number = max_number
        self.relations = sorted(RELATIONS)

    def _pick(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def _relation(self):
        return RELATIONS[self._pick(self.relations)]

    def _subject(self, rel):
        return self._pick(self.kb.entities_of_type(rel.subject_type))

    def simple(self):
        rel = self._relation()
        e = self._subject(rel)
        t = rel.object_type
        lead = self._pick((("which",), ("what",), ("name", "the")))
        words = (*lead, TYPE_WORDS[t], *rel.phrase, e)
        program = Program([Action("SELECT", (e, rel.name, t))])
        return words, _artifacts([e], [rel.name], [t]), program

    def logical(self):
        rel1 = self._relation()
        t = rel1.object_type
        others = [RELATIONS[r] for r in self.relations if RELATIONS[r].object_type == t]
        rel2 = rel1 if self.rng.random() < 0.5 else self._pick(others)
        e1 = self._subject(rel1)
        e2 = self._subject(rel2)
        if e1 == e2:
            return None
        op, conj = self._pick((("UNION", ("or",)), ("INTERSECTION", ("and",)), ("DIFFERENCE", ("but", "not"))))
        words = ("which", TYPE_WORDS[t], *rel1.phrase, e1, *conj, *rel2.phrase, e2)
        program = Program([Action("SELECT", (e1, rel1.name, t)), Action(op, (e2, rel2.name, t))])
        return words, _artifacts([e1, e2], [rel1.name, rel2.name], [t]), program

    def verification(self):
        rel = self._relation()
        e1 = self._subject(rel)
        t = rel.object_type
        found = sorted(self.kb.select(e1, rel.name, t))
        pool = [x for x in self.kb.entities_of_type(t) if x != e1]
        n_checks = 1 if self.rng.random() < 0.4 else 2
        checks = []
        for _ in range(n_checks):
            cands = found if (found and self.rng.random() < 0.5) else pool
            cands = [x for x in cands if x not in checks]
            if not cands:
                return None
            checks.append(self._pick(cands))
        words = ["is", checks[0]]
        if n_checks == 2:
            words += ["and", checks[1]]
        words += ["among", "the", TYPE_WORDS[t], "that", *rel.phrase, e1]
        actions = [Action("SELECT", (e1, rel.name, t))] + [Action("BOOL", (x,)) for x in checks]
        return tuple(words), _artifacts([e1, *checks], [rel.name], [t]), Program(actions)

    def _aggregate(self):
        rel = self._relation()
        # subjects are the answer type, counted objects are the relation's object type
        return rel, rel.subject_type, rel.object_type

    def quantitative(self):
        rel, t1, t2 = self._aggregate()
        op, word = self._pick((("ARGMAX", "most"), ("ARGMIN", "fewest")))
        words = ("which", TYPE_WORDS[t1], "have", "the", word, TYPE_WORDS[t2], "that", *rel.phrase, "them")
        program = Program([Action("SELECT_ALL", (t1, rel.name, t2)), Action(op, ())])
        return words, _artifacts([], [rel.name], [t1, t2]), program

    def _threshold(self):
        n = int(self.rng.integers(1, self.max_number + 1))
        op, cmp_words = self._pick(
            (("GREATER_THAN", ("more", "than")), ("LESS_THAN", ("fewer", "than")), ("EQUAL_TO", ("exactly",)))
        )
        return n, op, cmp_words

    def comparative(self):
        rel, t1, t2 = self._aggregate()
        n, op, cmp_words = self._threshold()
        words = ("which", TYPE_WORDS[t1], "have", *cmp_words, str(n), TYPE_WORDS[t2], "that", *rel.phrase, "them")
        program = Program([Action("SELECT_ALL", (t1, rel.name, t2)), Action(op, (n,))])
        return words, _artifacts([], [rel.name], [t1, t2]), program

    def count(self):
        rel = self._relation()
        t = rel.object_type
        e1 = self._subject(rel)
        form = int(self.rng.integers(3))
        if form == 0:
            words = ("how", "many", TYPE_WORDS[t], *rel.phrase, e1)
            actions = [Action("SELECT", (e1, rel.name, t))]
            ents = [e1]
        else:
            e2 = self._subject(rel)
            if e2 == e1:
                return None
            op, conj = (("INTERSECTION", "and"), ("UNION", "or"))[form - 1]
            words = ("how", "many", TYPE_WORDS[t], *rel.phrase, e1, conj, e2)
            actions = [Action("SELECT", (e1, rel.name, t)), Action(op, (e2, rel.name, t))]
            ents = [e1, e2]
        actions.append(Action("COUNT", ()))
        return words, _artifacts(ents, [rel.name], [t]), Program(actions)

    def comparative_count(self):
        rel, t1, t2 = self._aggregate()
        n, op, cmp_words = self._threshold()
        words = ("how", "many", TYPE_WORDS[t1], "have", *cmp_words, str(n), TYPE_WORDS[t2], "that", *rel.phrase, "them")
        program = Program(
            [Action("SELECT_ALL", (t1, rel.name, t2)), Action(op, (n,)), Action("COUNT", ())]
        )
        return words, _artifacts([], [rel.name], [t1, t2]), program

    def by_category(self, category):
        return {
            "Simple Question": self.simple,
            "Logical Reasoning": self.logical,
            "Quantitative Reasoning": self.quantitative,
            "Verification (Boolean)": self.verification,
            "Comparative Reasoning": self.comparative,
            "Quantitative (Count)": self.count,
            "Comparative (Count)": self.comparative_count,
        }[category]


def _informative(answer) -> bool:
    if isinstance(answer, Entities):
        return bool(answer.members)
    if isinstance(answer, Count):
        return answer.value > 0
    return isinstance(answer, Bools)


def category_counts(total: int, proportions=CQA_PROPORTIONS) -> list:
    """Split ``total`` across categories by largest remainder, at least one each
    when ``total`` allows it."""
    weights = np.asarray(proportions, dtype=float)
    raw = weights / weights.sum() * total
    floor = 1 if total >= len(weights) else 0
    counts = np.maximum(np.floor(raw).astype(int), floor)
    while counts.sum() < total:
        counts[int(np.argmax(raw - counts))] += 1
    while counts.sum() > total:
        counts[int(np.argmax(np.where(counts > floor, counts - raw, -np.inf)))] -= 1
    return counts.tolist()


def generate_samples(kb, rng, counts, prefix, max_number=4, retries=500) -> list:
    templates = _Templates(kb, rng, max_number)
    samples = []
    for category, n in zip(CATEGORIES, counts):
        make = templates.by_category(category)
        for _ in range(n):
            for _attempt in range(retries):
                built = make()
                if built is None:
                    continue
                words, artifacts, program = built
                answer = execute(program, kb)
                if _informative(answer):
                    break
            else:
                raise GenerationError(f"template {make.__name__!r} produced no usable question in {retries} tries")
            samples.append((category, words, artifacts, answer, program))
    order = rng.permutation(len(samples))
    return [
        Sample(f"{prefix}{k:05d}", *samples[int(i)])
        for k, i in enumerate(order)
    ]


def generate_dataset(seed: int, sizes: GeneratorSizes = None, proportions=CQA_PROPORTIONS):
    """Returns ``(kb, train, valid, test)``; deterministic in ``seed``."""
    sizes = sizes or GeneratorSizes()
    rng = np.random.default_rng(seed)
    kb = generate_kb(rng, sizes.entities_per_type)
    splits = []
    for prefix, total in (("train", sizes.n_train), ("valid", sizes.n_valid), ("test", sizes.n_test)):
        counts = category_counts(total, proportions) if total else [0] * len(CATEGORIES)
        splits.append(generate_samples(kb, rng, counts, f"{prefix}-", sizes.max_number, sizes.retries))
    return (kb, *splits)


def write_dataset(out_dir, kb, train, valid, test) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kb.save(out / "kb.txt")
    save_samples(out / "train.jsonl", train)
    save_samples(out / "valid.jsonl", valid)
    save_samples(out / "test.jsonl", test)


def read_dataset(data_dir):
    d = Path(data_dir)
    kb = KnowledgeBase.load(d / "kb.txt")
    return kb, load_samples(d / "train.jsonl"), load_samples(d / "valid.jsonl"), load_samples(d / "test.jsonl")
