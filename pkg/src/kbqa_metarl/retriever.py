"""Unsupervised support-set retrieval.

Relevance of a candidate question to a query is the product of

* artifact similarity: how closely the numbers of mentioned entities,
  relations and types agree, and
* semantic similarity: a greedy word-alignment score over word embeddings,
  oriented from the query to the candidate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels


@dataclass(frozen=True)
class QuestionProfile:
    entity_count: int
    relation_count: int
    type_count: int
    content_tokens: tuple
    token_embeddings: np.ndarray

    @property
    def counts(self):
        return (self.entity_count, self.relation_count, self.type_count)


@dataclass(frozen=True)
class SupportSet:
    members: tuple  # ((sample, score), ...), best first

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @property
    def samples(self):
        return [s for s, _ in self.members]


class Embedding:
    """Read-only snapshot of a word-embedding table."""

    def __init__(self, index: dict, table: np.ndarray, unk: int = 0):
        self.index = index
        self.table = np.array(table, dtype=np.float64, copy=True)
        self.table.setflags(write=False)
        self.unk = unk

    def __call__(self, tokens: Sequence[str]) -> np.ndarray:
        ids = [self.index.get(t, self.unk) for t in tokens]
        return self.table[ids].reshape(len(ids), self.table.shape[1])


def content_tokens(sample) -> tuple:
    entities = set(sample.artifacts.entities)
    return tuple(w for w in sample.question_tokens if w not in entities)


def profile(sample, embed: Callable) -> QuestionProfile:
    words = content_tokens(sample)
    art = sample.artifacts
    return QuestionProfile(len(art.entities), len(art.relations), len(art.types), words, embed(words))


def _count_similarity(c1, c2):
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    top = np.maximum(c1, c2)
    safe = np.where(top > 0, top, 1.0)
    return np.where(top > 0, 1.0 - np.abs(c1 - c2) / safe, 1.0)


def artifact_similarity(p1: QuestionProfile, p2: QuestionProfile) -> float:
    return float(np.prod(_count_similarity(p1.counts, p2.counts)))


def semantic_similarity(p1: QuestionProfile, p2: QuestionProfile, threshold: float) -> float:
    """Directional (p1 -> p2) alignment similarity in [0, 1]."""
    offsets = np.array([0, len(p2.token_embeddings)], dtype=np.int64)
    q = _as_matrix(p1.token_embeddings, p2.token_embeddings)
    c = _as_matrix(p2.token_embeddings, p1.token_embeddings)
    return float(kernels.semantic_scores(q, c, offsets, threshold)[0])


def _as_matrix(x, other):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1 or x.size == 0:
        dim = np.asarray(other).shape[-1] if np.asarray(other).size else 1
        x = x.reshape(-1, dim)
    return x


def relevance(p1: QuestionProfile, p2: QuestionProfile, threshold: float) -> float:
    return artifact_similarity(p1, p2) * semantic_similarity(p1, p2, threshold)


class Retriever:
    """Scores a query against a fixed corpus in one pass per query."""

    def __init__(self, corpus: Sequence, embed: Callable, threshold: float = 0.85):
        self.corpus = list(corpus)
        self.threshold = threshold
        self.embed = embed
        profiles = [profile(s, embed) for s in self.corpus]
        self.counts = np.array([p.counts for p in profiles], dtype=float).reshape(len(profiles), 3)
        sizes = [len(p.content_tokens) for p in profiles]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        dim = embed([]).shape[1]
        mats = [p.token_embeddings for p in profiles if len(p.content_tokens)]
        self.stacked = np.concatenate(mats) if mats else np.zeros((0, dim))

    def scores(self, query) -> np.ndarray:
        p = profile(query, self.embed)
        art = np.prod(_count_similarity(np.array(p.counts, dtype=float)[None, :], self.counts), axis=1)
        sem = kernels.semantic_scores(p.token_embeddings, self.stacked, self.offsets, self.threshold)
        return art * sem

    def retrieve(self, query, n: int) -> SupportSet:
        scores = self.scores(query)
        order = np.argsort(-scores, kind="stable")
        picked = []
        for k in order:
            cand = self.corpus[k]
            if cand.id == query.id:
                continue
            picked.append((cand, float(scores[k])))
            if len(picked) == n:
                break
        return SupportSet(tuple(picked))


def retrieve(query, corpus: Sequence, n: int, threshold: float, embed: Callable) -> SupportSet:
    """Top-``n`` corpus questions most relevant to ``query`` (query itself excluded)."""
    if n <= 0 or not corpus:
        return SupportSet(())
    return Retriever(corpus, embed, threshold).retrieve(query, n)
