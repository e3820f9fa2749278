"""In-memory typed triple store.

Entities carry exactly one type. Lookups never raise on unknown ids: an
unknown entity, relation or type simply selects nothing, which lets the
policy explore nonsensical programs without crashing the training loop.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

EntitySet = frozenset
EntityMap = dict

TYPE_PREFIX = "#type"


class KBFormatError(ValueError):
    """Raised by the loader for malformed KB files; carries the 1-based line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class KnowledgeBase:
    entity_types: dict[str, str]
    triples: frozenset[tuple[str, str, str]]
    _index: dict = field(default=None, repr=False, compare=False)
    _by_type: dict = field(default=None, repr=False, compare=False)
    _groups: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for s, r, o in self.triples:
            if s not in self.entity_types or o not in self.entity_types:
                raise ValueError(f"triple ({s}, {r}, {o}) references an untyped entity")
        index = defaultdict(set)
        for s, r, o in self.triples:
            index[(s, r)].add(o)
        by_type = defaultdict(list)
        for e in sorted(self.entity_types):
            by_type[self.entity_types[e]].append(e)
        object.__setattr__(self, "_index", {k: frozenset(v) for k, v in index.items()})
        object.__setattr__(self, "_by_type", {k: tuple(v) for k, v in by_type.items()})
        object.__setattr__(self, "_groups", {})

    @classmethod
    def from_triples(cls, triples: Iterable[tuple[str, str, str]], entity_types: dict[str, str]):
        return cls(dict(entity_types), frozenset(tuple(t) for t in triples))

    @property
    def entities(self) -> frozenset[str]:
        return frozenset(self.entity_types)

    @property
    def relations(self) -> frozenset[str]:
        return frozenset(r for _, r, _ in self.triples)

    @property
    def types(self) -> frozenset[str]:
        return frozenset(self.entity_types.values())

    def entities_of_type(self, t: str) -> tuple[str, ...]:
        """Entities of type ``t`` in lexicographic order."""
        return self._by_type.get(t, ())

    def objects(self, e: str, r: str) -> frozenset[str]:
        return self._index.get((e, r), frozenset())

    def select(self, e: str, r: str, t: str) -> frozenset[str]:
        """All objects ``x`` of ``(e, r, x)`` whose type is ``t``."""
        types = self.entity_types
        return frozenset(x for x in self.objects(e, r) if types[x] == t)

    def select_all(self, t1: str, r: str, t2: str) -> dict[str, frozenset[str]]:
        """Map every ``t1``-typed subject to its nonempty ``select(s, r, t2)``."""
        key = (t1, r, t2)
        if key in self._groups:
            return dict(self._groups[key])
        groups = {}
        for s in self.entities_of_type(t1):
            found = self.select(s, r, t2)
            if found:
                groups[s] = found
        self._groups[key] = groups
        return dict(groups)

    # -- persistence ---------------------------------------------------------

    def dumps(self) -> str:
        lines = [f"{TYPE_PREFIX} {e} {self.entity_types[e]}" for e in sorted(self.entity_types)]
        lines.extend(f"{s} {r} {o}" for s, r, o in sorted(self.triples))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "KnowledgeBase":
        entity_types: dict[str, str] = {}
        triples = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split()
            if fields[0] == TYPE_PREFIX:
                if len(fields) != 3:
                    raise KBFormatError(lineno, f"type line needs 'entity type', got {line!r}")
                _, e, t = fields
                if entity_types.get(e, t) != t:
                    raise KBFormatError(lineno, f"entity {e!r} already has type {entity_types[e]!r}")
                entity_types[e] = t
            elif fields[0].startswith("#"):
                raise KBFormatError(lineno, f"unknown directive {fields[0]!r}")
            else:
                if len(fields) != 3:
                    raise KBFormatError(lineno, f"expected 'subject relation object', got {line!r}")
                triples.append((lineno, tuple(fields)))
        for lineno, (s, r, o) in triples:
            for e in (s, o):
                if e not in entity_types:
                    raise KBFormatError(lineno, f"entity {e!r} has no #type line")
        return cls.from_triples((t for _, t in triples), entity_types)

    @classmethod
    def load(cls, path) -> "KnowledgeBase":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def select(kb: KnowledgeBase, e: str, r: str, t: str) -> frozenset[str]:
    return kb.select(e, r, t)


def select_all(kb: KnowledgeBase, t1: str, r: str, t2: str) -> dict[str, frozenset[str]]:
    return kb.select_all(t1, r, t2)
