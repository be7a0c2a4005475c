"""Masked transformer decoder over token sequences.

Post-norm residual blocks: each layer applies masked multi-head
self-attention then a two-layer feedforward, with LayerNorm applied to the
residual sums. Learned token and position embeddings feed the stack; a
final LayerNorm and linear head produce next-token logits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .core import MAX_ELEMENTS, PAD_ID
from .errors import InvalidConfig, SequenceTooLong, VocabError
from .tensor import Tensor

INIT_STD = 0.02


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d: int = 512
    n_layers: int = 6
    n_head: int = 8
    d_ff: int = 2048
    bits: int = 8
    dropout: float = 0.1
    max_seq_len: int = 5 * MAX_ELEMENTS + 2
    tie_output: bool = False

    def __post_init__(self):
        if self.d % self.n_head != 0:
            raise InvalidConfig(f"d={self.d} not divisible by n_head={self.n_head}")
        if self.vocab_size < 4:
            raise InvalidConfig("vocabulary too small")

    @property
    def head_dim(self) -> int:
        return self.d // self.n_head


class ModelParams:
    """Named parameter tensors plus the config that shaped them.

    Frozen during inference and shareable across threads; training mutates
    tensors in place between steps (single writer).
    """

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def items(self):
        return self.tensors.items()

    def n_params(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def grads(self) -> dict[str, np.ndarray]:
        return {
            name: t.grad for name, t in self.tensors.items() if t.grad is not None
        }

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.config,
            {
                name: Tensor(t.data.copy(), requires_grad=t.requires_grad, dtype=t.dtype)
                for name, t in self.tensors.items()
            },
        )

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            self.config,
            {
                name: Tensor(t.data.astype(dtype), requires_grad=t.requires_grad)
                for name, t in self.tensors.items()
            },
        )


def param_names(config: ModelConfig) -> list[tuple[str, tuple[int, ...], str]]:
    """(name, shape, init kind) in a fixed order; init kind is one of
    normal / zeros / ones."""
    d, dff, v = config.d, config.d_ff, config.vocab_size
    names: list[tuple[str, tuple[int, ...], str]] = [
        ("tok_emb", (v, d), "normal"),
        ("pos_emb", (config.max_seq_len, d), "normal"),
    ]
    for i in range(config.n_layers):
        p = f"blocks.{i}"
        for w in ("wq", "wk", "wv", "wo"):
            names.append((f"{p}.attn.{w}", (d, d), "normal"))
        for b in ("bq", "bk", "bv", "bo"):
            names.append((f"{p}.attn.{b}", (d,), "zeros"))
        names.append((f"{p}.ln1.g", (d,), "ones"))
        names.append((f"{p}.ln1.b", (d,), "zeros"))
        names.append((f"{p}.ffn.w1", (d, dff), "normal"))
        names.append((f"{p}.ffn.b1", (dff,), "zeros"))
        names.append((f"{p}.ffn.w2", (dff, d), "normal"))
        names.append((f"{p}.ffn.b2", (d,), "zeros"))
        names.append((f"{p}.ln2.g", (d,), "ones"))
        names.append((f"{p}.ln2.b", (d,), "zeros"))
    names.append(("final_ln.g", (d,), "ones"))
    names.append(("final_ln.b", (d,), "zeros"))
    if not config.tie_output:
        names.append(("head.w", (d, v), "normal"))
    names.append(("head.b", (v,), "zeros"))
    return names


def init_params(config: ModelConfig, seed: int, dtype=np.float32) -> ModelParams:
    """Normal(0, 0.02) weights, zero biases, unit LayerNorm gains."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor] = {}
    for name, shape, kind in param_names(config):
        if kind == "normal":
            data = rng.normal(0.0, INIT_STD, size=shape)
        elif kind == "ones":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        tensors[name] = Tensor(data.astype(dtype), requires_grad=True)
    return ModelParams(config, tensors)


def causal_mask(n: int) -> np.ndarray:
    """(n, n) boolean allow matrix: position j attends to positions <= j."""
    return np.tril(np.ones((n, n), dtype=bool))


def forward(
    params: ModelParams,
    tokens,
    train_mode: bool = False,
    seed: int = 0,
    need_attention: bool = False,
):
    """Run the decoder on a (B, T) batch of token ids.

    Returns (logits, attention): logits is a (B, T, V) Tensor whose row j
    parameterizes the distribution of token j+1 given tokens up to j;
    attention is a per-layer list of (B, n_head, T, T) arrays when
    requested, else None. Padding columns never receive attention, so
    suffix-padded batches score identically to their unpadded rows.
    """
    cfg = params.config
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim == 1:
        tokens = tokens[None, :]
    B, L = tokens.shape
    if L > cfg.max_seq_len:
        raise SequenceTooLong(f"sequence length {L} exceeds {cfg.max_seq_len}")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= cfg.vocab_size):
        raise VocabError(
            f"token ids must lie in [0, {cfg.vocab_size}), got "
            f"[{tokens.min()}, {tokens.max()}]"
        )

    x = T.add(
        T.embedding_gather(params["tok_emb"], tokens),
        T.slice_(params["pos_emb"], (slice(0, L),)),
    )

    allow = causal_mask(L)[None, None, :, :] & (tokens != PAD_ID)[:, None, None, :]
    deny = ~allow
    scale = 1.0 / math.sqrt(cfg.head_dim)
    attn_maps: list[np.ndarray] = []

    for i in range(cfg.n_layers):
        p = f"blocks.{i}"

        def proj(w, b):
            h = T.add(T.matmul(x, params[f"{p}.attn.{w}"]), params[f"{p}.attn.{b}"])
            h = T.reshape(h, (B, L, cfg.n_head, cfg.head_dim))
            return T.transpose(h, (0, 2, 1, 3))

        q = proj("wq", "bq")
        k = proj("wk", "bk")
        v = proj("wv", "bv")
        scores = T.scalar_scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), scale)
        scores = T.masked_fill(scores, deny, -np.inf)
        attn = T.softmax_lastdim(scores)
        if need_attention:
            attn_maps.append(attn.data.copy())
        ctx = T.reshape(T.transpose(T.matmul(attn, v), (0, 2, 1, 3)), (B, L, cfg.d))
        ctx = T.add(T.matmul(ctx, params[f"{p}.attn.wo"]), params[f"{p}.attn.bo"])
        x = T.layer_norm(T.add(x, ctx), params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])

        ff = T.relu(T.add(T.matmul(x, params[f"{p}.ffn.w1"]), params[f"{p}.ffn.b1"]))
        ff = T.add(T.matmul(ff, params[f"{p}.ffn.w2"]), params[f"{p}.ffn.b2"])
        ff = T.dropout(ff, cfg.dropout, _dropout_seed(seed, i), train=train_mode)
        x = T.layer_norm(T.add(x, ff), params[f"{p}.ln2.g"], params[f"{p}.ln2.b"])

    x = T.layer_norm(x, params["final_ln.g"], params["final_ln.b"])
    if cfg.tie_output:
        logits = T.add(T.matmul(x, T.transpose(params["tok_emb"], (1, 0))), params["head.b"])
    else:
        logits = T.add(T.matmul(x, params["head.w"]), params["head.b"])
    return logits, (attn_maps if need_attention else None)


def _dropout_seed(seed: int, layer: int) -> int:
    return (seed * 0x9E3779B1 + layer * 0x85EBCA77) % (1 << 63)
