"""Attention LSTM encoder-decoder policy with hand-written backpropagation.

The policy reads a question (with entity mentions replaced by slot markers)
followed by the serialized relation and type artifacts, and emits output
tokens: operators, END, positional artifact slots (ENT_k, REL_k, TYPE_k) and
small integer literals (NUM_n). Slots beyond the artifacts present in the
current question are masked to probability zero.

All parameters live in one flat float64 vector; named matrices are views
into it. Parameter order in the flat vector (and in checkpoints) is
``PARAM_ORDER``.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .interpreter import OPERATORS, SIGNATURES, Action, Program

CHECKPOINT_VERSION = 1
INIT_SCALE = 0.08

PARAM_ORDER = (
    "emb_in",
    "emb_out",
    "enc_wx",
    "enc_wh",
    "enc_b",
    "att",
    "dec_wx",
    "dec_wh",
    "dec_b",
    "out_w",
    "out_b",
)


# -- vocabularies --------------------------------------------------------------


@dataclass(frozen=True)
class Artifacts:
    """KB artifacts mentioned by one question, indexed by slot position."""

    entities: tuple = ()
    relations: tuple = ()
    types: tuple = ()


class OutputVocab:
    END = 0

    def __init__(self, max_entities=3, max_relations=2, max_types=2, max_number=9):
        self.max_entities = max_entities
        self.max_relations = max_relations
        self.max_types = max_types
        self.max_number = max_number
        tokens = ["<END>", *OPERATORS]
        tokens += [f"ENT_{k}" for k in range(1, max_entities + 1)]
        tokens += [f"REL_{k}" for k in range(1, max_relations + 1)]
        tokens += [f"TYPE_{k}" for k in range(1, max_types + 1)]
        tokens += [f"NUM_{n}" for n in range(max_number + 1)]
        self.tokens = tuple(tokens)
        self.index = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self.tokens)

    def to_dict(self):
        return {
            "max_entities": self.max_entities,
            "max_relations": self.max_relations,
            "max_types": self.max_types,
            "max_number": self.max_number,
        }

    def mask(self, artifacts: Artifacts) -> np.ndarray:
        allowed = np.ones(len(self), dtype=bool)
        for prefix, n, cap in (
            ("ENT", len(artifacts.entities), self.max_entities),
            ("REL", len(artifacts.relations), self.max_relations),
            ("TYPE", len(artifacts.types), self.max_types),
        ):
            for k in range(n + 1, cap + 1):
                allowed[self.index[f"{prefix}_{k}"]] = False
        return allowed

    def slot_token(self, kind: str, value, artifacts: Artifacts) -> int:
        if kind == "int":
            return self.index[f"NUM_{value}"]
        table = {"entity": artifacts.entities, "relation": artifacts.relations, "type": artifacts.types}[kind]
        prefix = {"entity": "ENT", "relation": "REL", "type": "TYPE"}[kind]
        return self.index[f"{prefix}_{table.index(value) + 1}"]

    def encode_program(self, program: Program, artifacts: Artifacts) -> list[int]:
        """Program -> output token ids, terminated by END."""
        ids = []
        for action in program:
            ids.append(self.index[action.op])
            for kind, arg in zip(SIGNATURES[action.op], action.args):
                ids.append(self.slot_token(kind, arg, artifacts))
        ids.append(self.END)
        return ids

    def decode_program(self, ids: Sequence[int], artifacts: Artifacts) -> Optional[Program]:
        """Output token ids -> Program, or None when the tokens are ill-formed.

        Reading stops at the first END; a sequence cut off at the length limit
        is read as-is.
        """
        tables = {"entity": artifacts.entities, "relation": artifacts.relations, "type": artifacts.types}
        prefixes = {"entity": "ENT_", "relation": "REL_", "type": "TYPE_", "int": "NUM_"}
        actions = []
        i = 0
        ids = list(ids)
        if self.END in ids:
            ids = ids[: ids.index(self.END)]
        while i < len(ids):
            op = self.tokens[ids[i]]
            if op not in SIGNATURES:
                return None
            args = []
            for kind in SIGNATURES[op]:
                i += 1
                if i >= len(ids):
                    return None
                tok = self.tokens[ids[i]]
                if not tok.startswith(prefixes[kind]):
                    return None
                k = int(tok[len(prefixes[kind]) :])
                if kind == "int":
                    args.append(k)
                else:
                    if k > len(tables[kind]):
                        return None
                    args.append(tables[kind][k - 1])
            actions.append(Action(op, tuple(args)))
            i += 1
        if not actions:
            return None
        return Program(actions)


class InputVocab:
    UNK = "<unk>"

    def __init__(self, tokens: Sequence[str]):
        tokens = [self.UNK] + sorted(set(tokens) - {self.UNK})
        self.tokens = tuple(tokens)
        self.index = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self.tokens)

    def ids(self, words: Sequence[str]) -> np.ndarray:
        unk = self.index[self.UNK]
        return np.array([self.index.get(w, unk) for w in words], dtype=np.int64)


@dataclass
class InputSequence:
    tokens: np.ndarray
    artifacts: Artifacts = field(default_factory=Artifacts)
    mask: Optional[np.ndarray] = None


# -- parameters ----------------------------------------------------------------


@dataclass(frozen=True)
class Dims:
    n_in: int
    n_out: int
    d_emb: int = 50
    d_h: int = 128

    def shapes(self):
        e, h = self.d_emb, self.d_h
        return {
            "emb_in": (self.n_in, e),
            "emb_out": (self.n_out, e),
            "enc_wx": (4 * h, e),
            "enc_wh": (4 * h, h),
            "enc_b": (4 * h,),
            "att": (h, h),
            "dec_wx": (4 * h, e + h),
            "dec_wh": (4 * h, h),
            "dec_b": (4 * h,),
            "out_w": (self.n_out, h),
            "out_b": (self.n_out,),
        }


class Params:
    """Flat parameter vector with named matrix views (also used for gradients)."""

    def __init__(self, dims: Dims, flat: Optional[np.ndarray] = None):
        shapes = dims.shapes()
        size = sum(int(np.prod(shapes[n])) for n in PARAM_ORDER)
        if flat is None:
            flat = np.zeros(size)
        if flat.shape != (size,):
            raise ValueError(f"expected {size} parameters, got {flat.shape}")
        self.dims = dims
        self.flat = flat
        self._views = {}
        offset = 0
        for name in PARAM_ORDER:
            n = int(np.prod(shapes[name]))
            self._views[name] = flat[offset : offset + n].reshape(shapes[name])
            offset += n

    @classmethod
    def init(cls, dims: Dims, seed: int) -> "Params":
        params = cls(dims)
        rng = np.random.default_rng(seed)
        params.flat[:] = rng.uniform(-INIT_SCALE, INIT_SCALE, size=params.flat.size)
        return params

    def __getitem__(self, name):
        return self._views[name]

    def __setitem__(self, name, value):
        self._views[name][...] = value

    def __iter__(self):
        return iter(PARAM_ORDER)

    def copy(self) -> "Params":
        return Params(self.dims, self.flat.copy())

    def zeros_like(self) -> "Params":
        return Params(self.dims)

    def __eq__(self, other):
        return isinstance(other, Params) and self.dims == other.dims and np.array_equal(self.flat, other.flat)


def save_checkpoint(path, params: Params, meta: Optional[dict] = None) -> None:
    """Write ``params`` plus a JSON header (format version, dims, caller metadata)."""
    header = {
        "version": CHECKPOINT_VERSION,
        "dims": {"n_in": params.dims.n_in, "n_out": params.dims.n_out, "d_emb": params.dims.d_emb, "d_h": params.dims.d_h},
        "param_order": list(PARAM_ORDER),
        "meta": meta or {},
    }
    buf = io.BytesIO()
    np.savez(buf, header=np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8), flat=params.flat)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> tuple[Params, dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(data["header"].tobytes().decode())
        flat = data["flat"].copy()
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')}")
    if header["param_order"] != list(PARAM_ORDER):
        raise ValueError("checkpoint parameter order does not match this build")
    return Params(Dims(**header["dims"]), flat), header["meta"]


# -- forward / backward ----------------------------------------------------------


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _log_softmax(logits, mask):
    if mask is not None:
        logits = np.where(mask, logits, -np.inf)
    top = logits.max(axis=-1, keepdims=True)
    shifted = logits - top
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass
class EncoderStates:
    outputs: np.ndarray  # (M, d_h)
    h: np.ndarray
    c: np.ndarray
    tokens: np.ndarray = None
    cache: list = field(default_factory=list, repr=False)


def encode(params: Params, seq: InputSequence) -> EncoderStates:
    tokens = np.asarray(seq.tokens)
    n_in = params.dims.n_in
    if tokens.size == 0:
        raise ValueError("empty input sequence")
    if tokens.min() < 0 or tokens.max() >= n_in:
        raise ValueError(f"input token id out of range [0, {n_in})")
    d_h = params.dims.d_h
    wx, wh, b = params["enc_wx"], params["enc_wh"], params["enc_b"]
    xs = params["emb_in"][tokens]
    pre_x = xs @ wx.T + b
    h = np.zeros(d_h)
    c = np.zeros(d_h)
    outputs = np.empty((len(tokens), d_h))
    cache = []
    for i in range(len(tokens)):
        z = pre_x[i] + wh @ h
        gi = _sigmoid(z[:d_h])
        gf = _sigmoid(z[d_h : 2 * d_h])
        gg = np.tanh(z[2 * d_h : 3 * d_h])
        go = _sigmoid(z[3 * d_h :])
        c_new = gf * c + gi * gg
        tc = np.tanh(c_new)
        h_new = go * tc
        cache.append((h, c, gi, gf, gg, go, tc))
        h, c = h_new, c_new
        outputs[i] = h
    return EncoderStates(outputs, h, c, tokens, cache)


def _decoder_cell(params: Params, prev, h, c, enc: EncoderStates, mask):
    """One batched decoder step; returns (logp, h_new, c_new, cache)."""
    d_h = params.dims.d_h
    states = enc.outputs
    u = h @ params["att"]
    scores = u @ states.T
    scores -= scores.max(axis=1, keepdims=True)
    alpha = np.exp(scores)
    alpha /= alpha.sum(axis=1, keepdims=True)
    ctx = alpha @ states
    x = np.concatenate([params["emb_out"][prev], ctx], axis=1)
    z = x @ params["dec_wx"].T + h @ params["dec_wh"].T + params["dec_b"]
    gi = _sigmoid(z[:, :d_h])
    gf = _sigmoid(z[:, d_h : 2 * d_h])
    gg = np.tanh(z[:, 2 * d_h : 3 * d_h])
    go = _sigmoid(z[:, 3 * d_h :])
    c_new = gf * c + gi * gg
    tc = np.tanh(c_new)
    h_new = go * tc
    logp = _log_softmax(h_new @ params["out_w"].T + params["out_b"], mask)
    cache = (prev, h, c, u, alpha, x, gi, gf, gg, go, tc, h_new)
    return logp, h_new, c_new, cache


def _check_out_tokens(params: Params, tokens):
    n_out = params.dims.n_out
    for t in np.ravel(tokens):
        if not 0 <= t < n_out:
            raise ValueError(f"output token id {t} out of range [0, {n_out})")


def decode_step(params: Params, prev_token: int, g_prev, enc: EncoderStates, mask=None):
    """Distribution over the output vocabulary after ``prev_token``.

    ``g_prev`` is the decoder state ``(h, c)``; returns ``(dist, (h, c))``.
    """
    _check_out_tokens(params, [prev_token])
    h, c = g_prev
    logp, h_new, c_new, _ = _decoder_cell(params, np.array([prev_token]), h[None, :], c[None, :], enc, mask)
    return np.exp(logp[0]), (h_new[0], c_new[0])


def initial_state(enc: EncoderStates):
    return enc.h, enc.c


def _pad(seqs: Sequence[Sequence[int]]):
    width = max(len(s) for s in seqs)
    tokens = np.full((len(seqs), width), OutputVocab.END, dtype=np.int64)
    active = np.zeros((len(seqs), width), dtype=bool)
    for k, s in enumerate(seqs):
        tokens[k, : len(s)] = s
        active[k, : len(s)] = True
    return tokens, active


def _teacher_forced(params: Params, enc: EncoderStates, tokens, mask, start):
    """Run the decoder over padded target rows; returns per-step logp and caches."""
    batch, width = tokens.shape
    h = np.repeat(enc.h[None, :], batch, axis=0)
    c = np.repeat(enc.c[None, :], batch, axis=0)
    prev = np.full(batch, start, dtype=np.int64)
    step_logp = np.empty((batch, width))
    caches = []
    rows = np.arange(batch)
    for t in range(width):
        logp, h, c, cache = _decoder_cell(params, prev, h, c, enc, mask)
        step_logp[:, t] = logp[rows, tokens[:, t]]
        caches.append((cache, np.exp(logp)))
        prev = tokens[:, t]
    return step_logp, caches


def sequence_logprob(params: Params, seq: InputSequence, tau: Sequence[int], start: int = OutputVocab.END) -> float:
    """log pi(tau | q) summed over the tokens of ``tau``."""
    if len(tau) == 0:
        raise ValueError("empty token sequence")
    _check_out_tokens(params, tau)
    enc = encode(params, seq)
    tokens, _ = _pad([tau])
    step_logp, _ = _teacher_forced(params, enc, tokens, seq.mask, start)
    return float(step_logp[0].sum())


def _backward(params: Params, enc: EncoderStates, tokens, active, weights, caches, grad: Params):
    d_h = params.dims.d_h
    d_emb = params.dims.d_emb
    states = enc.outputs
    out_w, att = params["out_w"], params["att"]
    dec_wx, dec_wh = params["dec_wx"], params["dec_wh"]
    batch, width = tokens.shape
    rows = np.arange(batch)
    d_states = np.zeros_like(states)
    dh_next = np.zeros((batch, d_h))
    dc_next = np.zeros((batch, d_h))
    for t in range(width - 1, -1, -1):
        (prev, h, c, u, alpha, x, gi, gf, gg, go, tc, h_new), probs = caches[t]
        wt = weights * active[:, t]
        dlogits = -probs * wt[:, None]
        dlogits[rows, tokens[:, t]] += wt
        grad["out_w"] += dlogits.T @ h_new
        grad["out_b"] += dlogits.sum(axis=0)
        dh = dlogits @ out_w + dh_next
        dc = dc_next + dh * go * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                dc * gg * gi * (1.0 - gi),
                dc * c * gf * (1.0 - gf),
                dc * gi * (1.0 - gg * gg),
                dh * tc * go * (1.0 - go),
            ],
            axis=1,
        )
        grad["dec_wx"] += dz.T @ x
        grad["dec_wh"] += dz.T @ h
        grad["dec_b"] += dz.sum(axis=0)
        dx = dz @ dec_wx
        np.add.at(grad["emb_out"], prev, dx[:, :d_emb])
        dctx = dx[:, d_emb:]
        dh_prev = dz @ dec_wh
        d_alpha = dctx @ states.T
        d_states += alpha.T @ dctx
        ds = alpha * (d_alpha - (d_alpha * alpha).sum(axis=1, keepdims=True))
        du = ds @ states
        d_states += ds.T @ u
        grad["att"] += h.T @ du
        dh_prev += du @ att.T
        dh_next = dh_prev
        dc_next = dc * gf
    _encoder_backward(params, enc, d_states, dh_next.sum(axis=0), dc_next.sum(axis=0), grad)


def _encoder_backward(params, enc, d_outputs, dh_final, dc_final, grad):
    d_h = params.dims.d_h
    wx, wh = params["enc_wx"], params["enc_wh"]
    dh = dh_final.copy()
    dc = dc_final.copy()
    dzs = np.empty((len(enc.cache), 4 * d_h))
    hs_prev = np.empty((len(enc.cache), d_h))
    for i in range(len(enc.cache) - 1, -1, -1):
        h_prev, c_prev, gi, gf, gg, go, tc = enc.cache[i]
        dh = dh + d_outputs[i]
        dc = dc + dh * go * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                dc * gg * gi * (1.0 - gi),
                dc * c_prev * gf * (1.0 - gf),
                dc * gi * (1.0 - gg * gg),
                dh * tc * go * (1.0 - go),
            ]
        )
        dzs[i] = dz
        hs_prev[i] = h_prev
        dh = wh.T @ dz
        dc = dc * gf
    grad["enc_wh"] += dzs.T @ hs_prev
    grad["enc_b"] += dzs.sum(axis=0)
    xs = params["emb_in"][enc.tokens]
    grad["enc_wx"] += dzs.T @ xs
    np.add.at(grad["emb_in"], enc.tokens, dzs @ wx)


def logprob_grad(
    params: Params,
    seq: InputSequence,
    seqs: Sequence[Sequence[int]],
    weights,
    start: int = OutputVocab.END,
    grad: Optional[Params] = None,
):
    """Gradient of ``sum_k weights[k] * log pi(seqs[k] | q)``.

    Returns ``(logps, grad)``; ``grad`` is accumulated into when given.
    """
    weights = np.asarray(weights, dtype=float)
    for s in seqs:
        _check_out_tokens(params, s)
    enc = encode(params, seq)
    tokens, active = _pad(seqs)
    step_logp, caches = _teacher_forced(params, enc, tokens, seq.mask, start)
    if not np.all(np.isfinite(step_logp[active])):
        raise ValueError("target token has zero probability under the output mask")
    logps = np.where(active, step_logp, 0.0).sum(axis=1)
    if grad is None:
        grad = params.zeros_like()
    if np.any(weights != 0):
        _backward(params, enc, tokens, active, weights, caches, grad)
    return logps, grad


def surrogate_grad(params: Params, seq: InputSequence, trajectories, rewards, start: int = OutputVocab.END) -> Params:
    """Ascent direction of (1/K) sum_k R_k log p(tau_k)."""
    rewards = np.asarray(rewards, dtype=float)
    seqs = [t.tokens if isinstance(t, Trajectory) else t for t in trajectories]
    _, grad = logprob_grad(params, seq, seqs, rewards / len(seqs), start)
    return grad


def surrogate_value(params: Params, seq: InputSequence, trajectories, rewards, start: int = OutputVocab.END) -> float:
    rewards = np.asarray(rewards, dtype=float)
    seqs = [t.tokens if isinstance(t, Trajectory) else t for t in trajectories]
    for s in seqs:
        _check_out_tokens(params, s)
    tokens, active = _pad(seqs)
    step_logp, _ = _teacher_forced(params, encode(params, seq), tokens, seq.mask, start)
    logps = np.where(active, step_logp, 0.0).sum(axis=1)
    return float((rewards * logps).sum() / len(seqs))


# -- decoding ------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    tokens: tuple
    logprob: float
    reward: float = 0.0


def sample(params: Params, seq: InputSequence, k: int, max_len: int, rng_seed, end: int = OutputVocab.END) -> list[Trajectory]:
    """Draw ``k`` token sequences; each stops at END or after ``max_len`` tokens."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    enc = encode(params, seq)
    h = np.repeat(enc.h[None, :], k, axis=0)
    c = np.repeat(enc.c[None, :], k, axis=0)
    prev = np.full(k, end, dtype=np.int64)
    done = np.zeros(k, dtype=bool)
    out = np.full((k, max_len), end, dtype=np.int64)
    lengths = np.full(k, max_len)
    logps = np.zeros(k)
    rows = np.arange(k)
    for t in range(max_len):
        logp, h, c, _ = _decoder_cell(params, prev, h, c, enc, seq.mask)
        cdf = np.cumsum(np.exp(logp), axis=1)
        cdf /= cdf[:, -1:]
        u = rng.random(k)
        choice = (cdf <= u[:, None]).sum(axis=1)
        live = ~done
        out[live, t] = choice[live]
        logps[live] += logp[rows, choice][live]
        finished = live & (choice == end)
        lengths[finished] = t + 1
        done |= finished
        prev = choice
        if done.all():
            break
    return [Trajectory(tuple(int(x) for x in out[i, : lengths[i]]), float(logps[i])) for i in range(k)]


def greedy_decode(params: Params, seq: InputSequence, max_len: int, end: int = OutputVocab.END) -> list[int]:
    enc = encode(params, seq)
    h, c = enc.h[None, :], enc.c[None, :]
    prev = np.array([end])
    out = []
    for _ in range(max_len):
        logp, h, c, _ = _decoder_cell(params, prev, h, c, enc, seq.mask)
        tok = int(np.argmax(logp[0]))
        out.append(tok)
        if tok == end:
            break
        prev = np.array([tok])
    return out
