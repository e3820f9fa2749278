"""Learning procedures: pseudo-gold search, imitation pretraining, policy
gradient, and retrieval-based meta reinforcement learning."""

from __future__ import annotations

import itertools
import json
import logging
import math
import time
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .agent import EMPTY_ANSWER, Agent
from .config import TrainingConfig
from .interpreter import (
    ALLOWED_AFTER,
    INITIAL_STATE,
    NONE,
    OPERATORS,
    RESULT_KIND,
    SIGNATURES,
    Action,
    Bools,
    Count,
    Program,
    execute,
    final_answer,
    reward,
    step,
)
from .programmer import Params, greedy_decode, logprob_grad, sample as sample_trajectories
from .retriever import Retriever, SupportSet

log = logging.getLogger(__name__)


# -- pseudo-gold search ------------------------------------------------------------


@dataclass(frozen=True)
class AnnotatedSample:
    sample: object
    program: Program

    @classmethod
    def checked(cls, sample, program: Program, kb) -> "AnnotatedSample":
        if reward(execute(program, kb), sample.gold_answer) != 1.0:
            raise ValueError(f"program does not answer {sample.id} exactly")
        return cls(sample, program)


def numbers_in(sample, max_number: int = 9) -> list:
    found = {int(w) for w in sample.question_tokens if w.isdigit() and int(w) <= max_number}
    return sorted(found)


def candidate_actions(sample, max_number: int = 9) -> list:
    """Every action over the sample's artifacts, in canonical search order."""
    art = sample.artifacts
    pools = {"entity": art.entities, "relation": art.relations, "type": art.types, "int": numbers_in(sample, max_number)}
    actions = []
    for op in OPERATORS:
        for args in itertools.product(*(pools[k] for k in SIGNATURES[op])):
            actions.append(Action(op, tuple(args)))
    return actions


def _could_finish(op: str, gold) -> bool:
    if isinstance(gold, Count):
        return op == "COUNT"
    if isinstance(gold, Bools):
        return op == "BOOL"
    return op not in ("COUNT", "BOOL")


def bfs_annotate(sample, kb, max_len: int = 3, max_number: int = 9) -> Optional[AnnotatedSample]:
    """Shortest, then lexicographically first, program whose answer scores 1.0."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    gold = sample.gold_answer
    actions = candidate_actions(sample, max_number)
    frontier = [((), INITIAL_STATE, NONE)]
    for depth in range(1, max_len + 1):
        last = depth == max_len
        grown = []
        for prefix, state, kind in frontier:
            for action in actions:
                if kind not in ALLOWED_AFTER[action.op]:
                    continue
                if last and not _could_finish(action.op, gold):
                    continue
                new_state = step(kb, state, action)
                program = prefix + (action,)
                if reward(final_answer(new_state), gold) == 1.0:
                    return AnnotatedSample.checked(sample, Program(program), kb)
                if not last:
                    grown.append((program, new_state, RESULT_KIND[action.op]))
        frontier = grown
    return None


# -- optimisation helpers ------------------------------------------------------------


class Adam:
    """Adam on a flat parameter vector (ascent when ``ascend=True``)."""

    def __init__(self, size, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    @classmethod
    def from_config(cls, size, cfg: TrainingConfig):
        return cls(size, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)

    def step(self, flat: np.ndarray, grad: np.ndarray, ascend=True) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        delta = self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        flat += delta if ascend else -delta


def question_rng(seed: int, sample) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(sample.id.encode())])


def rollout(agent: Agent, params: Params, sample, kb, k: int, max_len: int, rng):
    """Sample ``k`` trajectories for ``sample`` and score them with the interpreter."""
    seq = agent.encode(sample)
    trajs = sample_trajectories(params, seq, k, max_len, rng)
    rewards = np.array([agent.score(t.tokens, sample, kb) for t in trajs])
    return trajs, rewards


def policy_gradient(agent: Agent, params: Params, sample, trajs, rewards, grad=None, scale=1.0):
    """Accumulate the ascent direction of (1/K) sum_k R_k log p(tau_k)."""
    seq = agent.encode(sample)
    weights = scale * np.asarray(rewards, dtype=float) / len(trajs)
    _, grad = logprob_grad(params, seq, [t.tokens for t in trajs], weights, grad=grad)
    return grad


# -- imitation and policy gradient ------------------------------------------------------


def pretrain_teacher_forcing(agent: Agent, annotated: Sequence[AnnotatedSample], cfg: TrainingConfig, history=None) -> Agent:
    """Minimise mean per-token cross-entropy of the pseudo-gold programs with Adam."""
    if not annotated:
        raise ValueError("nothing to pretrain on")
    params = agent.params.copy()
    opt = Adam.from_config(params.flat.size, cfg)
    rng = np.random.default_rng(cfg.seed)
    targets = [agent.out_vocab.encode_program(a.program, a.sample.artifacts) for a in annotated]
    for epoch in range(cfg.pretrain_epochs):
        order = rng.permutation(len(annotated))
        for lo in range(0, len(order), cfg.pretrain_batch):
            batch = order[lo : lo + cfg.pretrain_batch]
            n_tokens = sum(len(targets[i]) for i in batch)
            grad = params.zeros_like()
            total = 0.0
            for i in batch:
                seq = agent.encode(annotated[i].sample)
                logps, grad = logprob_grad(params, seq, [targets[i]], [1.0 / n_tokens], grad=grad)
                total += float(logps[0])
            if history is not None:
                history.append(-total / n_tokens)
            opt.step(params.flat, grad.flat, ascend=True)
        log.info("pretrain epoch %d done", epoch)
    return agent.with_params(params)


def pg_train(agent: Agent, samples, kb, cfg: TrainingConfig, history=None) -> Agent:
    """REINFORCE with Adam; a batch whose rewards are all zero leaves the parameters alone."""
    if not samples:
        raise ValueError("no samples")
    params = agent.params.copy()
    opt = Adam.from_config(params.flat.size, cfg)
    rng = np.random.default_rng(cfg.seed)
    baseline = 0.0
    for _ in range(cfg.pg_epochs):
        order = rng.permutation(len(samples))
        for lo in range(0, len(order), cfg.pg_batch):
            batch = [samples[i] for i in order[lo : lo + cfg.pg_batch]]
            grad = params.zeros_like()
            mean_rewards = []
            nonzero = False
            for s in batch:
                trajs, rewards = rollout(agent, params, s, kb, cfg.k, cfg.max_decode_len, rng)
                mean_rewards.append(rewards.mean())
                signal = rewards - baseline if cfg.baseline else rewards
                if cfg.baseline:
                    baseline = cfg.baseline_decay * baseline + (1 - cfg.baseline_decay) * rewards.mean()
                if np.any(signal != 0):
                    nonzero = True
                    grad = policy_gradient(agent, params, s, trajs, signal, grad, scale=1.0 / len(batch))
            if history is not None:
                history.append(float(np.mean(mean_rewards)))
            if nonzero:
                opt.step(params.flat, grad.flat, ascend=True)
    return agent.with_params(params)


# -- meta learning -----------------------------------------------------------------


@dataclass(frozen=True)
class PseudoTask:
    meta_test: object
    support: SupportSet

    def __post_init__(self):
        if any(s.id == self.meta_test.id for s in self.support.samples):
            raise ValueError("meta-test question appears in its own support set")


def adapt(agent: Agent, params: Params, support, kb, cfg: TrainingConfig, rng, rewards_out=None) -> Params:
    """One plain policy-gradient step of size ``inner_lr`` per support question.

    ``params`` is never modified; the adapted copy is returned.
    """
    adapted = params.copy()
    samples = support.samples if isinstance(support, SupportSet) else list(support)
    for s in samples:
        trajs, rewards = rollout(agent, adapted, s, kb, cfg.k, cfg.max_decode_len, rng)
        if rewards_out is not None:
            rewards_out.append(rewards.mean())
        if np.any(rewards != 0):
            grad = policy_gradient(agent, adapted, s, trajs, rewards)
            adapted.flat += cfg.inner_lr * grad.flat
    return adapted


def meta_test_step(agent: Agent, adapted: Params, task: PseudoTask, kb, cfg: TrainingConfig, rng):
    """Score ``k_meta`` trajectories of the task's own question under the adapted
    parameters and take one ``inner_lr`` step; returns ``(params'', grad, mean reward)``."""
    trajs, rewards = rollout(agent, adapted, task.meta_test, kb, cfg.k_meta, cfg.max_decode_len, rng)
    grad = adapted.zeros_like()
    if np.any(rewards != 0):
        grad = policy_gradient(agent, adapted, task.meta_test, trajs, rewards)
    moved = adapted.copy()
    moved.flat += cfg.inner_lr * grad.flat
    return moved, grad, float(rewards.mean())


def build_tasks(agent: Agent, q_meta, corpus, cfg: TrainingConfig) -> list:
    """Freeze one support set per meta question using the current embeddings."""
    retriever = Retriever(corpus, agent.embedding(), cfg.threshold)
    return [PseudoTask(q, retriever.retrieve(q, cfg.n_support)) for q in q_meta]


def outer_update(params: Params, finals: Sequence[Params], grads: Sequence[Params], cfg: TrainingConfig) -> Params:
    if cfg.outer == "reptile":
        # (1 - a) * theta + a * mean(theta''): a=0 keeps theta, a=1 with one task gives theta'' exactly
        mean_final = sum(p.flat for p in finals) / len(finals)
        return Params(params.dims, (1.0 - cfg.outer_lr) * params.flat + cfg.outer_lr * mean_final)
    mean_grad = sum(g.flat for g in grads) / len(grads)
    return Params(params.dims, params.flat + cfg.outer_lr * mean_grad)


def meta_train(
    agent: Agent,
    q_meta,
    corpus,
    kb,
    cfg: TrainingConfig,
    log_path=None,
    checkpoint_dir=None,
    tasks=None,
) -> Agent:
    """Meta-train the policy over pseudo tasks built around ``q_meta``."""
    if tasks is None:
        tasks = build_tasks(agent, q_meta, corpus, cfg)
    tasks = [t for t in tasks if len(t.support)]
    if not tasks:
        return agent.copy()
    params = agent.params.copy()
    rng = np.random.default_rng(cfg.seed)
    per_epoch = math.ceil(len(tasks) / cfg.batch_tasks)
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    start = time.time()
    try:
        for it in range(cfg.meta_epochs * per_epoch):
            picks = rng.choice(len(tasks), size=min(cfg.batch_tasks, len(tasks)), replace=False)
            finals, grads, inner, outer_rewards = [], [], [], []
            for i in picks:
                task = tasks[int(i)]
                adapted = adapt(agent, params, task.support, kb, cfg, rng, inner)
                moved, grad, r = meta_test_step(agent, adapted, task, kb, cfg, rng)
                finals.append(moved)
                grads.append(grad)
                outer_rewards.append(r)
            params = outer_update(params, finals, grads, cfg)
            record = {
                "iteration": it,
                "meta_test_reward": float(np.mean(outer_rewards)),
                "inner_reward": float(np.mean(inner)) if inner else 0.0,
                "wall_time": round(time.time() - start, 3),
            }
            if log_fh:
                log_fh.write(json.dumps(record) + "\n")
            if checkpoint_dir and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
                Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
                agent.with_params(params).save(Path(checkpoint_dir) / f"meta-{it + 1:05d}.npz")
    finally:
        if log_fh:
            log_fh.close()
    return agent.with_params(params)


@dataclass
class Inference:
    answer: object
    program: Optional[Program]
    tokens: list
    support: SupportSet


def infer(agent: Agent, q_test, retriever: Optional[Retriever], kb, cfg: TrainingConfig) -> Inference:
    """Adapt a copy of the meta-learned policy on the retrieved support set, then decode greedily."""
    support = retriever.retrieve(q_test, cfg.n_support) if retriever is not None and cfg.n_support else SupportSet(())
    adapted = adapt(agent, agent.params, support, kb, cfg, question_rng(cfg.seed, q_test))
    return decode_answer(agent, adapted, q_test, kb, cfg.max_decode_len, support)


def decode_answer(agent: Agent, params: Params, sample, kb, max_len: int, support=SupportSet(())) -> Inference:
    tokens = greedy_decode(params, agent.encode(sample), max_len)
    program = agent.program(tokens, sample)
    answer = agent.answer(tokens, sample, kb) if program is not None else None
    if answer is None:
        log.debug("invalid program for %s: %s", sample.id, [agent.out_vocab.tokens[t] for t in tokens])
        answer = EMPTY_ANSWER
    return Inference(answer, program, tokens, support)
