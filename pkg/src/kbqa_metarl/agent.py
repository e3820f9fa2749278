"""Binds policy parameters to the vocabularies that turn samples into model input."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .interpreter import Entities, ExecutionError, Program, execute, reward, validate
from .programmer import (
    Dims,
    InputSequence,
    InputVocab,
    OutputVocab,
    Params,
    load_checkpoint,
    save_checkpoint,
)
from .retriever import Embedding

REL_MARK = "<rels>"
TYPE_MARK = "<types>"


def input_words(sample) -> list:
    """Question with entity mentions replaced by ``<eK>`` markers, then relation and type ids."""
    slots = {e: f"<e{k}>" for k, e in enumerate(sample.artifacts.entities, start=1)}
    words = [slots.get(w, w) for w in sample.question_tokens]
    words.append(REL_MARK)
    words.extend(sample.artifacts.relations)
    words.append(TYPE_MARK)
    words.extend(sample.artifacts.types)
    return words


def build_input_vocab(samples, extra=()) -> InputVocab:
    words = set(extra)
    for s in samples:
        words.update(input_words(s))
    return InputVocab(sorted(words))


@dataclass
class Agent:
    params: Params
    in_vocab: InputVocab
    out_vocab: OutputVocab
    _inputs: dict = field(default_factory=dict, repr=False)

    @classmethod
    def create(cls, in_vocab: InputVocab, out_vocab: OutputVocab, d_emb=50, d_h=128, seed=0) -> "Agent":
        dims = Dims(len(in_vocab), len(out_vocab), d_emb, d_h)
        return cls(Params.init(dims, seed), in_vocab, out_vocab)

    def with_params(self, params: Params) -> "Agent":
        return Agent(params, self.in_vocab, self.out_vocab, self._inputs)

    def copy(self) -> "Agent":
        return self.with_params(self.params.copy())

    def encode(self, sample) -> InputSequence:
        seq = self._inputs.get(sample.id)
        if seq is None:
            seq = InputSequence(
                self.in_vocab.ids(input_words(sample)),
                sample.artifacts,
                self.out_vocab.mask(sample.artifacts),
            )
            self._inputs[sample.id] = seq
        return seq

    def program(self, tokens, sample) -> Optional[Program]:
        """Decoded program, or None when the tokens do not form a valid program."""
        program = self.out_vocab.decode_program(tokens, sample.artifacts)
        if program is None or not validate(program):
            return None
        return program

    def answer(self, tokens, sample, kb):
        program = self.program(tokens, sample)
        if program is None:
            return None
        try:
            return execute(program, kb)
        except ExecutionError:
            return None

    def score(self, tokens, sample, kb) -> float:
        ans = self.answer(tokens, sample, kb)
        return 0.0 if ans is None else reward(ans, sample.gold_answer)

    def embedding(self) -> Embedding:
        return Embedding(self.in_vocab.index, self.params["emb_in"], self.in_vocab.index[InputVocab.UNK])

    def save(self, path, extra: Optional[dict] = None) -> None:
        meta = {"in_vocab": list(self.in_vocab.tokens), "out_vocab": self.out_vocab.to_dict()}
        meta.update(extra or {})
        save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path) -> "Agent":
        params, meta = load_checkpoint(path)
        in_vocab = InputVocab(meta["in_vocab"])
        if list(in_vocab.tokens) != meta["in_vocab"]:
            raise ValueError("checkpoint input vocabulary is not in canonical order")
        return cls(params, in_vocab, OutputVocab(**meta["out_vocab"]))


EMPTY_ANSWER = Entities()
