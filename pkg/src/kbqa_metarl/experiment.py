"""End-to-end pipeline shared by the CLI and the ablation check.

The training split is cut into disjoint consecutive pools: the first
``n_pretrain`` questions are BFS-annotated for imitation, the next ``n_pg``
drive policy gradient, and the next ``n_meta`` become meta-training tasks.
The whole training split is the retrieval corpus.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .agent import Agent, build_input_vocab
from .config import ExperimentConfig
from .data import GeneratorSizes, generate_dataset
from .evaluation import EvalReport, evaluate
from .interpreter import Program
from .programmer import OutputVocab
from .trainer import AnnotatedSample, bfs_annotate, meta_train, pg_train, pretrain_teacher_forcing

log = logging.getLogger(__name__)


def dataset_for(cfg: ExperimentConfig):
    sizes = GeneratorSizes(cfg.entities_per_type, cfg.n_train, cfg.n_valid, cfg.n_test, cfg.max_number)
    return generate_dataset(cfg.seed, sizes, cfg.proportion_values)


def pools(train, cfg: ExperimentConfig):
    a, b = cfg.n_pretrain, cfg.n_pretrain + cfg.n_pg
    return train[:a], train[a:b], train[b : b + cfg.n_meta]


def annotate(samples, kb, max_len: int):
    """Annotated samples plus the ids BFS could not solve."""
    found, missed = [], []
    for s in samples:
        a = bfs_annotate(s, kb, max_len)
        (found.append(a) if a is not None else missed.append(s.id))
    return found, missed


def save_annotations(path, annotated) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in annotated:
            fh.write(json.dumps({"id": a.sample.id, "program": str(a.program)}, sort_keys=True) + "\n")


def load_annotations(path, samples, kb) -> list:
    by_id = {s.id: s for s in samples}
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out.append(AnnotatedSample.checked(by_id[rec["id"]], Program.parse(rec["program"]), kb))
    return out


def new_agent(train, valid, test, cfg: ExperimentConfig) -> Agent:
    t = cfg.training
    return Agent.create(build_input_vocab(list(train) + list(valid) + list(test)), OutputVocab(), t.d_emb, t.d_h, t.init_seed)


@dataclass
class AblationResult:
    seed: int
    n_annotated: int
    frozen_pg: EvalReport
    adapted_meta: EvalReport

    @property
    def gain(self) -> float:
        return self.adapted_meta.macro_f1 - self.frozen_pg.macro_f1


def run_ablation(cfg: ExperimentConfig, out_dir=None) -> AblationResult:
    """Pretrain, PG, meta-train; compare frozen PG against adapted meta inference on test."""
    kb, train, valid, test = dataset_for(cfg)
    pre_pool, pg_pool, meta_pool = pools(train, cfg)
    annotated, _ = annotate(pre_pool, kb, cfg.training.bfs_max_len)
    agent = new_agent(train, valid, test, cfg)
    agent = pretrain_teacher_forcing(agent, annotated, cfg.training)
    pg = pg_train(agent, pg_pool, kb, cfg.training)
    frozen = evaluate(pg, test, train, kb, cfg.training, adapted=False)
    log_path = None
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        log_path = Path(out_dir) / "meta_log.jsonl"
    meta = meta_train(pg, meta_pool, train, kb, cfg.training, log_path=log_path)
    adapted = evaluate(meta, test, train, kb, cfg.training, adapted=True)
    if out_dir is not None:
        frozen.save(Path(out_dir) / "frozen_pg.json")
        adapted.save(Path(out_dir) / "adapted_meta.json")
    log.info("seed %d: frozen PG %.4f, adapted meta %.4f", cfg.seed, frozen.macro_f1, adapted.macro_f1)
    return AblationResult(cfg.seed, len(annotated), frozen, adapted)
