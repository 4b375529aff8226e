"""Attention-based sequence-to-action network.

A bidirectional LSTM reads the sentence. The decoder starts from
``s1 = tanh(W_s [hF_m; hB_1])``, attends with the bilinear score
``s_j^T W_a b_i``, predicts ``softmax(U [s_j; c_j])`` and moves on with
``s_{j+1} = LSTM([emb(y_j); c_j], s_j)``. Actions are embedded as the
concatenation of a structure-part and a semantic-part vector.

Backpropagation is written out by hand; ``loss_and_grads`` is the
single entry point used for training and gradient checking.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .actions import EOS, Action
from .errors import EmptySentence, ShapeMismatch, UnknownActionPart
from .kernel import (
    CellCache,
    RecurrentCellParams,
    Tensor,
    cell_backward,
    cell_forward,
    log_softmax,
    softmax,
)

UNK = "<unk>"

PARAM_NAMES = (
    "word_emb", "struct_emb", "sem_emb",
    "enc_f_W", "enc_f_b", "enc_b_W", "enc_b_b",
    "dec_W", "dec_b", "W_s", "W_a", "U",
)


@dataclass(frozen=True)
class ModelConfig:
    hidden_size: int = 200
    word_embed_dim: int = 100
    struct_embed_dim: int = 50
    sem_embed_dim: int = 50
    n_words: int = 0
    n_structures: int = 0
    n_semantics: int = 0
    n_actions: int = 0
    seed: int = 0
    init_scale: float = 0.1

    def __post_init__(self):
        for name in ("hidden_size", "word_embed_dim", "struct_embed_dim", "sem_embed_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def action_embed_dim(self) -> int:
        return self.struct_embed_dim + self.sem_embed_dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        return cls(**d)


class Vocabulary:
    """Ordered symbol table. With an ``unk`` symbol, unknown lookups map to it."""

    def __init__(self, symbols: Iterable[str], unk: str | None = None):
        self.symbols: list[str] = []
        self.index: dict[str, int] = {}
        self.unk = unk
        if unk is not None:
            self.add(unk)
        for s in symbols:
            self.add(s)

    def add(self, symbol: str) -> int:
        if symbol not in self.index:
            self.index[symbol] = len(self.symbols)
            self.symbols.append(symbol)
        return self.index[symbol]

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.index

    def __getitem__(self, symbol: str) -> int:
        if symbol in self.index:
            return self.index[symbol]
        if self.unk is not None:
            return self.index[self.unk]
        raise KeyError(symbol)

    def encode(self, symbols: Iterable[str]) -> list[int]:
        return [self[s] for s in symbols]

    def to_list(self) -> list[str]:
        return list(self.symbols)

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.symbols).encode("utf-8")).hexdigest()


class ActionVocabulary:
    """Actions with their structure and semantic part indices."""

    def __init__(self, actions: Iterable[Action]):
        self.actions: list[Action] = []
        self.index: dict[Action, int] = {}
        self.structures = Vocabulary([])
        self.semantics = Vocabulary([])
        self.add(EOS)
        for a in actions:
            self.add(a)

    def add(self, action: Action) -> int:
        if action not in self.index:
            self.index[action] = len(self.actions)
            self.actions.append(action)
            self.structures.add(action.structure)
            self.semantics.add(action.semantic)
        return self.index[action]

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, action: Action) -> int:
        return self.index[action]

    def __contains__(self, action: Action) -> bool:
        return action in self.index

    @property
    def struct_ids(self) -> np.ndarray:
        return np.array([self.structures[a.structure] for a in self.actions], dtype=np.int64)

    @property
    def sem_ids(self) -> np.ndarray:
        return np.array([self.semantics[a.semantic] for a in self.actions], dtype=np.int64)

    def to_list(self) -> list[str]:
        return [str(a) for a in self.actions]

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.to_list()).encode("utf-8")).hexdigest()


@dataclass
class ModelParameters:
    config: ModelConfig
    tensors: dict[str, Tensor]
    actions: ActionVocabulary

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def copy(self) -> ModelParameters:
        return ModelParameters(self.config, {k: v.copy() for k, v in self.tensors.items()},
                               self.actions)

    @property
    def enc_f(self) -> RecurrentCellParams:
        return RecurrentCellParams(self.tensors["enc_f_W"], self.tensors["enc_f_b"])

    @property
    def enc_b(self) -> RecurrentCellParams:
        return RecurrentCellParams(self.tensors["enc_b_W"], self.tensors["enc_b_b"])

    @property
    def dec(self) -> RecurrentCellParams:
        return RecurrentCellParams(self.tensors["dec_W"], self.tensors["dec_b"])


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    H, Dw, Da = config.hidden_size, config.word_embed_dim, config.action_embed_dim
    return {
        "word_emb": (config.n_words, Dw),
        "struct_emb": (config.n_structures, config.struct_embed_dim),
        "sem_emb": (config.n_semantics, config.sem_embed_dim),
        "enc_f_W": (4 * H, Dw + H),
        "enc_f_b": (4 * H,),
        "enc_b_W": (4 * H, Dw + H),
        "enc_b_b": (4 * H,),
        "dec_W": (4 * H, Da + 2 * H + H),
        "dec_b": (4 * H,),
        "W_s": (H, 2 * H),
        "W_a": (H, 2 * H),
        "U": (config.n_actions, 3 * H),
    }


def init_params(config: ModelConfig, actions: ActionVocabulary, seed: int | None = None) -> ModelParameters:
    """Every tensor drawn from U[-init_scale, init_scale] in a fixed order."""
    config = replace(
        config,
        n_structures=len(actions.structures),
        n_semantics=len(actions.semantics),
        n_actions=len(actions),
    )
    rng = np.random.default_rng(config.seed if seed is None else seed)
    s = config.init_scale
    tensors = {name: rng.uniform(-s, s, size=shape) for name, shape in parameter_shapes(config).items()}
    return ModelParameters(config, tensors, actions)


# --- encoder -----------------------------------------------------------------

@dataclass
class EncodedSentence:
    word_ids: np.ndarray
    contexts: Tensor            # (m, 2H), rows b_i = [hF_i; hB_i]
    s1: Tensor                  # initial decoder state
    init_input: Tensor          # [hF_m; hB_1]
    f_caches: list[CellCache] = field(repr=False, default_factory=list)
    b_caches: list[CellCache] = field(repr=False, default_factory=list)

    @property
    def length(self) -> int:
        return self.contexts.shape[0]


def _run_lstm(cell: RecurrentCellParams, xs: Tensor) -> tuple[Tensor, list[CellCache]]:
    H = cell.hidden_size
    h = np.zeros(H)
    c = np.zeros(H)
    hs = np.empty((len(xs), H))
    caches = []
    for t, x in enumerate(xs):
        h, c, cache = cell_forward(cell, x, h, c)
        hs[t] = h
        caches.append(cache)
    return hs, caches


def encode(params: ModelParameters, word_ids: Sequence[int]) -> EncodedSentence:
    ids = np.asarray(word_ids, dtype=np.int64)
    if ids.size == 0:
        raise EmptySentence("cannot encode an empty sentence")
    emb = params["word_emb"]
    if ids.min() < 0 or ids.max() >= emb.shape[0]:
        raise ShapeMismatch(f"word id out of range for a vocabulary of {emb.shape[0]}")
    xs = emb[ids]
    hF, f_caches = _run_lstm(params.enc_f, xs)
    hB_rev, b_caches = _run_lstm(params.enc_b, xs[::-1])
    hB = hB_rev[::-1]
    contexts = np.concatenate([hF, hB], axis=1)
    u = np.concatenate([hF[-1], hB[0]])
    s1 = np.tanh(params["W_s"] @ u)
    return EncodedSentence(ids, contexts, s1, u, f_caches, b_caches)


# --- decoder -----------------------------------------------------------------

@dataclass(frozen=True)
class DecoderState:
    s: Tensor
    m: Tensor
    context: Tensor | None = None


def init_decoder(params: ModelParameters, enc: EncodedSentence) -> DecoderState:
    H = params.config.hidden_size
    return DecoderState(enc.s1, np.zeros(H))


def action_embedding(params: ModelParameters, action: Action | int) -> Tensor:
    vocab = params.actions
    if isinstance(action, Action):
        if action.structure not in vocab.structures:
            raise UnknownActionPart(f"structure {action.structure!r} has no embedding")
        if action.semantic not in vocab.semantics:
            raise UnknownActionPart(f"semantic part {action.semantic!r} has no embedding")
        si, mi = vocab.structures[action.structure], vocab.semantics[action.semantic]
    else:
        a = vocab.actions[action]
        si, mi = vocab.structures[a.structure], vocab.semantics[a.semantic]
    return np.concatenate([params["struct_emb"][si], params["sem_emb"][mi]])


def _attend(params: ModelParameters, enc: EncodedSentence, s: Tensor):
    q = params["W_a"].T @ s
    scores = enc.contexts @ q
    attn = softmax(scores)
    context = attn @ enc.contexts
    return q, attn, context


def advance(params: ModelParameters, state: DecoderState, action: Action | int) -> DecoderState:
    """Feed the chosen action (and the context it was chosen under)."""
    if state.context is None:
        raise ValueError("advance needs a state produced by decode_step")
    x = np.concatenate([action_embedding(params, action), state.context])
    s, m, _ = cell_forward(params.dec, x, state.s, state.m)
    return DecoderState(s, m)


def decode_step(params: ModelParameters, enc: EncodedSentence, state: DecoderState,
                prev_action: Action | int | None = None):
    """Distribution over actions at the step after ``prev_action``.

    Returns ``(probs, state, attention)``; the returned state carries the
    context vector, so it can be passed back with the next chosen action.
    """
    if prev_action is not None:
        state = advance(params, state, prev_action)
    if state.s.shape != (params.config.hidden_size,):
        raise ShapeMismatch(f"decoder state of shape {state.s.shape}")
    _, attn, context = _attend(params, enc, state.s)
    logits = params["U"] @ np.concatenate([state.s, context])
    return softmax(logits), DecoderState(state.s, state.m, context), attn


# --- training objective ------------------------------------------------------

def _check_target(action_ids: Sequence[int], n_actions: int) -> np.ndarray:
    ys = np.asarray(action_ids, dtype=np.int64)
    if ys.size == 0:
        raise ValueError("target sequence is empty")
    if ys.min() < 0 or ys.max() >= n_actions:
        raise ShapeMismatch("action id out of range")
    return ys


def sequence_log_prob(params: ModelParameters, word_ids: Sequence[int],
                      action_ids: Sequence[int]) -> float:
    """log P(Y | X) as a sum of per-step log probabilities."""
    ys = _check_target(action_ids, len(params.actions))
    enc = encode(params, word_ids)
    state = init_decoder(params, enc)
    total = 0.0
    prev = None
    for y in ys:
        if prev is not None:
            state = advance(params, state, prev)
        _, attn, context = _attend(params, enc, state.s)
        logits = params["U"] @ np.concatenate([state.s, context])
        total += float(log_softmax(logits)[y])
        state = DecoderState(state.s, state.m, context)
        prev = int(y)
    return total


def loss_and_grads(params: ModelParameters, word_ids: Sequence[int],
                   action_ids: Sequence[int]) -> tuple[float, dict[str, Tensor]]:
    """Negative log-likelihood of one example and its gradient."""
    T = params.tensors
    cfg = params.config
    H = cfg.hidden_size
    Ds = cfg.struct_embed_dim
    vocab = params.actions
    ys = _check_target(action_ids, len(vocab))
    struct_ids, sem_ids = vocab.struct_ids, vocab.sem_ids
    enc = encode(params, word_ids)
    B = enc.contexts
    W_a, U = T["W_a"], T["U"]
    dec = params.dec

    # forward, keeping what backward needs
    steps = []
    s, m = enc.s1, np.zeros(H)
    loss = 0.0
    for j, y in enumerate(ys):
        q, attn, context = _attend(params, enc, s)
        sc = np.concatenate([s, context])
        logp = log_softmax(U @ sc)
        loss -= float(logp[y])
        step = {"s": s, "q": q, "attn": attn, "sc": sc, "p": np.exp(logp), "cell": None}
        if j + 1 < len(ys):
            x = np.concatenate([action_embedding(params, int(y)), context])
            s, m, cache = cell_forward(dec, x, s, m)
            step["cell"] = cache
        steps.append(step)

    grads = {name: np.zeros_like(T[name]) for name in ("enc_f_W", "enc_f_b", "enc_b_W", "enc_b_b",
                                                       "W_s", "W_a", "dec_W", "dec_b")}
    dB = np.zeros_like(B)
    dz_out = np.empty((len(ys), U.shape[0]))
    d_struct = np.zeros_like(T["struct_emb"])
    d_sem = np.zeros_like(T["sem_emb"])
    ds_next = np.zeros(H)   # gradient reaching s_{j+1} through the recurrence
    dm_next = np.zeros(H)
    for j in range(len(ys) - 1, -1, -1):
        st = steps[j]
        dz = st["p"].copy()
        dz[ys[j]] -= 1.0
        dz_out[j] = dz
        dsc = U.T @ dz
        ds = dsc[:H]
        dc = dsc[H:].copy()
        dm = np.zeros(H)
        if st["cell"] is not None:
            dgate, dxh, dm, xh = cell_backward(dec, st["cell"], ds_next, dm_next)
            grads["dec_W"] += np.outer(dgate, xh)
            grads["dec_b"] += dgate
            dx = dxh[: cfg.action_embed_dim + 2 * H]
            ds = ds + dxh[cfg.action_embed_dim + 2 * H:]
            y = ys[j]
            d_struct[struct_ids[y]] += dx[:Ds]
            d_sem[sem_ids[y]] += dx[Ds:cfg.action_embed_dim]
            dc += dx[cfg.action_embed_dim:]
        # attention: c = a @ B, a = softmax(B @ q), q = W_a^T s
        a = st["attn"]
        dB += np.outer(a, dc)
        da = B @ dc
        de = a * (da - a @ da)
        dB += np.outer(de, st["q"])
        dq = B.T @ de
        grads["W_a"] += np.outer(st["s"], dq)
        ds = ds + W_a @ dq
        ds_next, dm_next = ds, dm

    grads["U"] = dz_out.T @ np.stack([st["sc"] for st in steps])

    # s1 = tanh(W_s u)
    dpre = ds_next * (1.0 - enc.s1 * enc.s1)
    grads["W_s"] += np.outer(dpre, enc.init_input)
    du = T["W_s"].T @ dpre
    dhF = dB[:, :H].copy()
    dhB = dB[:, H:].copy()
    dhF[-1] += du[:H]
    dhB[0] += du[H:]

    d_word = np.zeros_like(T["word_emb"])
    Dw = cfg.word_embed_dim
    ids = enc.word_ids
    m_len = len(ids)
    for cell_name, caches, dh_seq, order in (
        ("enc_f", enc.f_caches, dhF, range(m_len)),
        ("enc_b", enc.b_caches, dhB[::-1], range(m_len)),
    ):
        cell = params.enc_f if cell_name == "enc_f" else params.enc_b
        positions = list(order)
        dh_carry = np.zeros(H)
        dc_carry = np.zeros(H)
        for t in reversed(positions):
            dgate, dxh, dc_carry, xh = cell_backward(cell, caches[t], dh_seq[t] + dh_carry, dc_carry)
            grads[f"{cell_name}_W"] += np.outer(dgate, xh)
            grads[f"{cell_name}_b"] += dgate
            dh_carry = dxh[Dw:]
            word = ids[t] if cell_name == "enc_f" else ids[m_len - 1 - t]
            d_word[word] += dxh[:Dw]

    grads["word_emb"] = d_word
    grads["struct_emb"] = d_struct
    grads["sem_emb"] = d_sem
    return loss, grads
