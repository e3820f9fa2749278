import math
from dataclasses import replace

import numpy as np
import pytest

from kbqa_metarl import _kernels_py, kernels
from kbqa_metarl.interpreter import Entities
from kbqa_metarl.programmer import Artifacts
from kbqa_metarl.retriever import (
    Embedding,
    QuestionProfile,
    Retriever,
    artifact_similarity,
    content_tokens,
    profile,
    relevance,
    retrieve,
    semantic_similarity,
)
from kbqa_metarl.data import Sample
from oracles import ref_count_sim, ref_semantic


def prof(counts=(1, 1, 1), vecs=()):
    vecs = np.asarray(vecs, dtype=float).reshape(len(vecs), -1) if len(vecs) else np.zeros((0, 3))
    return QuestionProfile(*counts, tuple(f"w{i}" for i in range(len(vecs))), vecs)


def test_artifact_similarity_examples():
    assert artifact_similarity(prof((2, 1, 1)), prof((1, 1, 1))) == 0.5
    assert artifact_similarity(prof((0, 1, 1)), prof((0, 1, 1))) == 1.0
    assert artifact_similarity(prof((3, 2, 1)), prof((1, 1, 2))) == pytest.approx((1 / 3) * 0.5 * 0.5)
    assert artifact_similarity(prof((0, 1, 1)), prof((2, 1, 1))) == 0.0


def test_semantic_identity_and_disjoint():
    eye = np.eye(3)
    assert semantic_similarity(prof(vecs=eye), prof(vecs=eye), 0.85) == 1.0
    # orthogonal words and orthogonal remainders: nothing aligns
    assert semantic_similarity(prof(vecs=[[1, 0, 0]]), prof(vecs=[[0, 1, 0]]), 0.85) == 0.0
    assert semantic_similarity(prof(vecs=[]), prof(vecs=[]), 0.85) == 0.0


def test_semantic_hand_fixture():
    # q1 = (a, b, c), q2 = (a', d): a~a' aligns (cos 0.96 > 0.85); b, c and d remain
    a = [1.0, 0.0, 0.0]
    a2 = [0.96, 0.28, 0.0]
    b = [0.0, 1.0, 0.0]
    c = [0.0, 0.0, 1.0]
    d = [0.0, 1.0, 1.0]
    sem_int = 0.96
    # remainder sums: b + c = (0, 1, 1) and d = (0, 1, 1) -> cosine 1, so sem_diff = 2 * 0
    assert semantic_similarity(prof(vecs=[a, b, c]), prof(vecs=[a2, d]), 0.85) == pytest.approx(1.0, abs=1e-12)
    # d = (0, 0.6, 0.8): cos(b, d) = 0.6 and cos(c, d) = 0.8 stay below the threshold
    d = [0.0, 0.6, 0.8]
    sem_diff = 2 * (1 - 1.4 / math.sqrt(2))
    expect = sem_int / (sem_int + sem_diff)
    got = semantic_similarity(prof(vecs=[a, b, c]), prof(vecs=[a2, d]), 0.85)
    assert abs(got - expect) < 1e-9
    # with d = (0, 1, 0), b aligns too: sem_int = 1.96, c remains against nothing
    got = semantic_similarity(prof(vecs=[a, b, c]), prof(vecs=[a2, [0.0, 1.0, 0.0]]), 0.85)
    assert abs(got - 1.96 / 2.96) < 1e-9


def test_zero_vectors_have_zero_cosine():
    got = semantic_similarity(prof(vecs=[[0, 0, 0]]), prof(vecs=[[0, 0, 0]]), 0.0)
    assert got == 0.0


def test_greedy_removes_matched_partner():
    # both q1 words prefer the single q2 word; only the first can take it
    got = semantic_similarity(prof(vecs=[[1, 0, 0], [1, 0, 0]]), prof(vecs=[[1, 0, 0]]), 0.85)
    expect = 1.0 / (1.0 + 1 * (1 - 0.0))
    assert got == pytest.approx(expect, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_kernels_agree_with_oracle(seed):
    rng = np.random.default_rng(seed)
    base = rng.normal(size=(6, 4))
    q = base[rng.integers(0, 6, 5)] + 0.05 * rng.normal(size=(5, 4))
    cands = [base[rng.integers(0, 6, int(n))] + 0.05 * rng.normal(size=(int(n), 4)) for n in rng.integers(0, 6, 8)]
    offsets = np.concatenate([[0], np.cumsum([len(c) for c in cands])]).astype(np.int64)
    stacked = np.concatenate(cands)
    for thr in (0.5, 0.85, 0.99):
        want = [ref_semantic(q, c, thr) for c in cands]
        assert np.allclose(_kernels_py.semantic_scores(q, stacked, offsets, thr), want, atol=1e-12)
        assert np.allclose(kernels.semantic_scores(q, stacked, offsets, thr), want, atol=1e-12)


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


def _corpus(n=50, seed=0):
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(12)]
    out = []
    for i in range(n):
        ne, nr, nt = (int(x) for x in rng.integers(0, 3, 3))
        ents = tuple(f"e{i}_{k}" for k in range(ne))
        toks = tuple(rng.choice(words, int(rng.integers(2, 7)))) + ents
        out.append(Sample(f"q{i:02d}", "Simple Question", toks, Artifacts(ents, tuple(f"r{k}" for k in range(nr)), tuple(f"t{k}" for k in range(nt))), Entities()))
    return out


def _embedding(seed=0, dim=5):
    rng = np.random.default_rng(seed)
    index = {f"w{i}": i + 1 for i in range(12)}
    table = rng.normal(size=(13, dim))
    table[1:4] = table[1] + 0.01 * rng.normal(size=(3, dim))  # a near-synonym cluster
    return Embedding(index, table, 0)


def test_retrieve_matches_brute_force():
    corpus = _corpus()
    embed = _embedding()
    retr = Retriever(corpus, embed, 0.85)
    for query in corpus[:10]:
        scores = []
        for k, c in enumerate(corpus):
            if c.id == query.id:
                continue
            qa, ca = query.artifacts, c.artifacts
            sa = ref_count_sim(
                (len(qa.entities), len(qa.relations), len(qa.types)), (len(ca.entities), len(ca.relations), len(ca.types))
            )
            ss = ref_semantic(embed(content_tokens(query)), embed(content_tokens(c)), 0.85)
            scores.append((-sa * ss, k, c.id))
        brute = [cid for _, _, cid in sorted(scores)[:5]]
        got = retr.retrieve(query, 5)
        assert [s.id for s in got.samples] == brute
        assert retrieve(query, corpus, 5, 0.85, embed).samples == got.samples
        vals = [v for _, v in got.members]
        assert vals == sorted(vals, reverse=True)
        assert all(0 <= v <= 1 for v in vals)


def test_duplicate_query_ranks_first_with_score_one():
    corpus = _corpus()
    embed = _embedding()
    dup = replace(corpus[7], id="dup")
    got = retrieve(corpus[7], corpus + [dup], 5, 0.85, embed)
    assert got.members[0][1] == pytest.approx(1.0, abs=1e-12)
    scores = dict((s.id, v) for s, v in got.members)
    assert scores["dup"] == pytest.approx(1.0, abs=1e-12)


def test_clamping_and_ties():
    corpus = _corpus(4)
    embed = _embedding()
    got = retrieve(corpus[0], corpus, 10, 0.85, embed)
    assert len(got) == 3
    same = [replace(corpus[1], id=f"c{k}") for k in range(4)]
    ids = [s.id for s in retrieve(corpus[1], same, 4, 0.85, embed).samples]
    assert ids == ["c0", "c1", "c2", "c3"]
    assert len(retrieve(corpus[0], corpus, 0, 0.85, embed)) == 0


def test_profile_excludes_entities_and_embedding_is_read_only():
    s = _corpus(3)[2]
    embed = _embedding()
    p = profile(s, embed)
    assert not set(p.content_tokens) & set(s.artifacts.entities)
    assert p.counts == (len(s.artifacts.entities), len(s.artifacts.relations), len(s.artifacts.types))
    with pytest.raises(ValueError):
        embed.table[0, 0] = 1.0
    assert relevance(p, p, 0.85) == pytest.approx(1.0)


def test_pure_python_switch():
    import os
    import subprocess
    import sys

    env = dict(os.environ, KBQA_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from kbqa_metarl import kernels; print(kernels.BACKEND)"], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"
