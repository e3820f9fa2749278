"""Program representation, execution and answer scoring.

Programs run on a small sequential machine: a working entity set, an
optional working map (subject -> group) for aggregate questions, a list of
boolean verification results and an optional terminal value set by COUNT.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union

from .kb import KnowledgeBase

OPERATORS = (
    "SELECT",
    "UNION",
    "INTERSECTION",
    "DIFFERENCE",
    "COUNT",
    "BOOL",
    "SELECT_ALL",
    "ARGMAX",
    "ARGMIN",
    "GREATER_THAN",
    "LESS_THAN",
    "EQUAL_TO",
)

# argument kinds per operator
SIGNATURES = {
    "SELECT": ("entity", "relation", "type"),
    "UNION": ("entity", "relation", "type"),
    "INTERSECTION": ("entity", "relation", "type"),
    "DIFFERENCE": ("entity", "relation", "type"),
    "COUNT": (),
    "BOOL": ("entity",),
    "SELECT_ALL": ("type", "relation", "type"),
    "ARGMAX": (),
    "ARGMIN": (),
    "GREATER_THAN": ("int",),
    "LESS_THAN": ("int",),
    "EQUAL_TO": ("int",),
}

SET_COMBINATORS = ("UNION", "INTERSECTION", "DIFFERENCE")
THRESHOLDS = ("GREATER_THAN", "LESS_THAN", "EQUAL_TO")

# machine state kinds used by validate()
NONE, SET, MAP, BOOLS, TERMINAL = "none", "set", "map", "bools", "terminal"

# which state kinds each operator may follow
ALLOWED_AFTER = {
    "SELECT": (NONE, SET, MAP),
    "SELECT_ALL": (NONE, SET, MAP),
    "UNION": (SET,),
    "INTERSECTION": (SET,),
    "DIFFERENCE": (SET,),
    "BOOL": (SET, BOOLS),
    "COUNT": (SET, MAP),
    "ARGMAX": (MAP,),
    "ARGMIN": (MAP,),
    "GREATER_THAN": (MAP,),
    "LESS_THAN": (MAP,),
    "EQUAL_TO": (MAP,),
}

RESULT_KIND = {
    "SELECT": SET,
    "SELECT_ALL": MAP,
    "UNION": SET,
    "INTERSECTION": SET,
    "DIFFERENCE": SET,
    "BOOL": BOOLS,
    "COUNT": TERMINAL,
    "ARGMAX": SET,
    "ARGMIN": SET,
    "GREATER_THAN": SET,
    "LESS_THAN": SET,
    "EQUAL_TO": SET,
}

_SLOT_RE = re.compile(r"^(ENT|REL|TYPE|NUM)_\d+$")


class ExecutionError(RuntimeError):
    def __init__(self, index: int, message: str):
        super().__init__(f"action {index}: {message}")
        self.index = index


# -- answers -----------------------------------------------------------------


@dataclass(frozen=True)
class Entities:
    members: frozenset

    def __init__(self, members=()):
        object.__setattr__(self, "members", frozenset(members))

    def __repr__(self):
        return f"Entities({sorted(self.members)})"


@dataclass(frozen=True)
class Count:
    value: int

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("count must be nonnegative")


@dataclass(frozen=True)
class Bools:
    values: tuple

    def __init__(self, values):
        values = tuple(bool(v) for v in values)
        if not values:
            raise ValueError("boolean answer needs at least one value")
        object.__setattr__(self, "values", values)


AnswerValue = Union[Entities, Count, Bools]


def answer_to_json(answer: AnswerValue) -> dict:
    if isinstance(answer, Entities):
        return {"kind": "entities", "value": sorted(answer.members)}
    if isinstance(answer, Count):
        return {"kind": "count", "value": answer.value}
    return {"kind": "bools", "value": list(answer.values)}


def answer_from_json(obj: dict) -> AnswerValue:
    kind = obj["kind"]
    if kind == "entities":
        return Entities(obj["value"])
    if kind == "count":
        return Count(int(obj["value"]))
    if kind == "bools":
        return Bools(obj["value"])
    raise ValueError(f"unknown answer kind {kind!r}")


def reward(predicted: AnswerValue, gold: AnswerValue) -> float:
    """Partial credit in [0, 1].

    Mismatched answer kinds score 0. Entity sets score their Jaccard overlap
    (two empty sets agree). Counts must match exactly. Boolean lists score the
    fraction of agreeing positions and 0 when their lengths differ.
    """
    if type(predicted) is not type(gold):
        return 0.0
    if isinstance(gold, Entities):
        union = predicted.members | gold.members
        if not union:
            return 1.0
        return len(predicted.members & gold.members) / len(union)
    if isinstance(gold, Count):
        return 1.0 if predicted.value == gold.value else 0.0
    if len(predicted.values) != len(gold.values):
        return 0.0
    hits = sum(a == b for a, b in zip(predicted.values, gold.values))
    return hits / len(gold.values)


# -- programs ----------------------------------------------------------------


@dataclass(frozen=True)
class Action:
    op: str
    args: tuple = ()

    def __str__(self):
        return f"{self.op}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class Program:
    actions: tuple

    def __init__(self, actions=()):
        object.__setattr__(self, "actions", tuple(actions))

    def __len__(self):
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def __str__(self):
        return "\n".join(str(a) for a in self.actions)

    @classmethod
    def parse(cls, text: str) -> "Program":
        """Inverse of ``str(program)``: one ``OP(arg, ...)`` per line."""
        actions = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            m = re.fullmatch(r"([A-Z_]+)\((.*)\)", line)
            if m is None or m.group(1) not in SIGNATURES:
                raise ValueError(f"line {lineno}: cannot parse action {line!r}")
            op, body = m.groups()
            args = [a.strip() for a in body.split(",")] if body.strip() else []
            kinds = SIGNATURES[op]
            if len(args) != len(kinds):
                raise ValueError(f"line {lineno}: {op} takes {len(kinds)} arguments")
            args = [int(a) if k == "int" else a for a, k in zip(args, kinds)]
            actions.append(Action(op, tuple(args)))
        return cls(actions)


@dataclass(frozen=True)
class Verdict:
    ok: bool
    index: Optional[int] = None
    reason: str = ""

    def __bool__(self):
        return self.ok


def validate(program: Program) -> Verdict:
    if len(program) == 0:
        return Verdict(False, 0, "empty program")
    kind = NONE
    for i, action in enumerate(program):
        sig = SIGNATURES.get(action.op)
        if sig is None:
            return Verdict(False, i, f"unknown operator {action.op!r}")
        if len(action.args) != len(sig):
            return Verdict(False, i, f"{action.op} takes {len(sig)} arguments")
        for arg, k in zip(action.args, sig):
            if (k == "int") != (isinstance(arg, int) and not isinstance(arg, bool)):
                return Verdict(False, i, f"bad argument {arg!r} for {action.op}")
        if kind == TERMINAL:
            return Verdict(False, i, "action after terminal COUNT")
        if kind not in ALLOWED_AFTER[action.op]:
            if i == 0:
                return Verdict(False, 0, "program must start with SELECT or SELECT_ALL")
            return Verdict(False, i, f"{action.op} cannot follow a {kind} state")
        kind = RESULT_KIND[action.op]
    return Verdict(True)


def _check_resolved(index: int, action: Action) -> None:
    for arg in action.args:
        if isinstance(arg, str) and _SLOT_RE.match(arg):
            raise ExecutionError(index, f"unresolved slot reference {arg!r}")


def step(kb: KnowledgeBase, state: tuple, action: Action) -> tuple:
    """Apply one action to ``(working_set, working_map, bools, terminal)``.

    Exposed so search can share execution of common program prefixes.
    """
    working, groups, bools, terminal = state
    op, args = action.op, action.args
    if op == "SELECT":
        return kb.select(*args), None, bools, terminal
    if op == "UNION":
        return working | kb.select(*args), groups, bools, terminal
    if op == "INTERSECTION":
        return working & kb.select(*args), groups, bools, terminal
    if op == "DIFFERENCE":
        return working - kb.select(*args), groups, bools, terminal
    if op == "BOOL":
        return working, groups, bools + (args[0] in working,), terminal
    if op == "COUNT":
        n = len(groups) if groups is not None else len(working)
        return working, groups, bools, Count(n)
    if op == "SELECT_ALL":
        return working, kb.select_all(*args), bools, terminal
    if op in ("ARGMAX", "ARGMIN"):
        if not groups:
            return frozenset(), None, bools, terminal
        sizes = {s: len(g) for s, g in groups.items()}
        best = max(sizes.values()) if op == "ARGMAX" else min(sizes.values())
        return frozenset(s for s, n in sizes.items() if n == best), None, bools, terminal
    n = args[0]
    groups = groups or {}
    if op == "GREATER_THAN":
        keep = (s for s, g in groups.items() if len(g) > n)
    elif op == "LESS_THAN":
        keep = (s for s, g in groups.items() if len(g) < n)
    else:
        keep = (s for s, g in groups.items() if len(g) == n)
    return frozenset(keep), None, bools, terminal


INITIAL_STATE = (frozenset(), None, (), None)


def final_answer(state: tuple) -> AnswerValue:
    working, _, bools, terminal = state
    if terminal is not None:
        return terminal
    if bools:
        return Bools(bools)
    return Entities(working)


def execute(program: Program, kb: KnowledgeBase) -> AnswerValue:
    verdict = validate(program)
    if not verdict:
        raise ExecutionError(verdict.index, verdict.reason)
    state = INITIAL_STATE
    for i, action in enumerate(program):
        _check_resolved(i, action)
        state = step(kb, state, action)
    return final_answer(state)
