"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def _unit_rows(x):
    norms = np.sqrt((x * x).sum(axis=1))
    safe = np.where(norms > 0, norms, 1.0)
    return x / safe[:, None], norms > 0


def _cosine(a, b):
    na = np.sqrt(a @ a)
    nb = np.sqrt(b @ b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def align_score(cos, q_emb, c_emb, threshold):
    """Greedy word alignment score for one candidate given its cosine matrix."""
    n_q, n_c = cos.shape
    used = np.zeros(n_c, dtype=bool)
    matched = np.zeros(n_q, dtype=bool)
    sem_int = 0.0
    for m in range(n_q):
        best = -np.inf
        best_n = -1
        for n in range(n_c):
            if not used[n] and cos[m, n] > best:
                best = cos[m, n]
                best_n = n
        if best_n >= 0 and best > threshold:
            sem_int += best
            used[best_n] = True
            matched[m] = True
    rest_q = int(n_q - matched.sum())
    rest_c = int(n_c - used.sum())
    if rest_q == 0 and rest_c == 0:
        sem_diff = 0.0
    else:
        d = q_emb.shape[1]
        r1 = q_emb[~matched].sum(axis=0) if rest_q else np.zeros(d)
        r2 = c_emb[~used].sum(axis=0) if rest_c else np.zeros(d)
        sem_diff = max(rest_q, rest_c) * (1.0 - _cosine(r1, r2))
    total = sem_int + sem_diff
    return sem_int / total if total > 0 else 0.0


def semantic_scores(q_emb, corpus_emb, offsets, threshold):
    """Directional semantic similarity of one query against many candidates.

    ``corpus_emb`` stacks every candidate's token embeddings; candidate ``k``
    owns rows ``offsets[k]:offsets[k + 1]``.
    """
    q_emb = np.ascontiguousarray(q_emb, dtype=np.float64)
    corpus_emb = np.ascontiguousarray(corpus_emb, dtype=np.float64)
    q_unit, q_ok = _unit_rows(q_emb)
    c_unit, c_ok = _unit_rows(corpus_emb)
    cos_all = q_unit @ c_unit.T
    cos_all[~q_ok, :] = 0.0
    cos_all[:, ~c_ok] = 0.0
    out = np.empty(len(offsets) - 1)
    for k in range(len(offsets) - 1):
        lo, hi = offsets[k], offsets[k + 1]
        out[k] = align_score(cos_all[:, lo:hi], q_emb, corpus_emb[lo:hi], threshold)
    return out
