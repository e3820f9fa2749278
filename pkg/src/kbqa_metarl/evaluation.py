"""Macro and micro F1 over a test split, for frozen or per-question adapted models."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .data import CATEGORIES
from .interpreter import Entities, answer_from_json, answer_to_json, reward
from .retriever import Retriever
from .trainer import decode_answer, infer

F1_CONVENTION = "entity answers: set F1; count and boolean answers: reward value (exact / positional match)"


def answer_f1(predicted, gold) -> float:
    if isinstance(gold, Entities) and isinstance(predicted, Entities):
        p, g = predicted.members, gold.members
        if not p and not g:
            return 1.0
        hit = len(p & g)
        if hit == 0:
            return 0.0
        precision, recall = hit / len(p), hit / len(g)
        return 2 * precision * recall / (precision + recall)
    return reward(predicted, gold)


@dataclass
class QuestionRecord:
    id: str
    category: str
    predicted: dict
    f1: float
    program: Optional[str]


@dataclass
class EvalReport:
    per_category_f1: dict
    macro_f1: float
    micro_f1: float
    records: list = field(default_factory=list)
    mode: str = "frozen"
    convention: str = F1_CONVENTION

    @classmethod
    def from_records(cls, records, mode="frozen") -> "EvalReport":
        if not records:
            raise ValueError("no questions to evaluate")
        by_cat: dict = {}
        for r in records:
            by_cat.setdefault(r.category, []).append(r.f1)
        order = [c for c in CATEGORIES if c in by_cat] + sorted(c for c in by_cat if c not in CATEGORIES)
        per_cat = {c: sum(by_cat[c]) / len(by_cat[c]) for c in order}
        macro = sum(per_cat.values()) / len(per_cat)
        micro = sum(r.f1 for r in records) / len(records)
        return cls(per_cat, macro, micro, list(records), mode)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        obj = json.loads(text)
        obj["records"] = [QuestionRecord(**r) for r in obj["records"]]
        return cls(**obj)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    def summary(self) -> str:
        lines = [f"{c:<26} {v * 100:6.2f}" for c, v in self.per_category_f1.items()]
        lines.append(f"{'macro F1':<26} {self.macro_f1 * 100:6.2f}")
        lines.append(f"{'micro F1':<26} {self.micro_f1 * 100:6.2f}")
        return "\n".join(lines)


def report_from_predictions(samples, predictions, programs=None, mode="frozen") -> EvalReport:
    programs = programs or [None] * len(samples)
    records = [
        QuestionRecord(s.id, s.category, answer_to_json(p), answer_f1(p, s.gold_answer), prog)
        for s, p, prog in zip(samples, predictions, programs)
    ]
    return EvalReport.from_records(records, mode)


def evaluate(agent, test, corpus, kb, cfg, adapted: bool = False, retriever: Optional[Retriever] = None) -> EvalReport:
    """Greedy decode each test question, optionally after adapting a copy on its support set."""
    if not test:
        raise ValueError("test set is empty")
    if adapted and retriever is None and corpus:
        retriever = Retriever(corpus, agent.embedding(), cfg.threshold)
    preds, progs = [], []
    for s in test:
        if adapted:
            out = infer(agent, s, retriever, kb, cfg)
        else:
            out = decode_answer(agent, agent.params, s, kb, cfg.max_decode_len)
        preds.append(out.answer)
        progs.append(None if out.program is None else str(out.program))
    return report_from_predictions(test, preds, progs, "adapted" if adapted else "frozen")


def predicted_answer(record: QuestionRecord):
    return answer_from_json(record.predicted)
