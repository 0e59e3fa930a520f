"""Structure-aware Transformer encoder.

Each layer runs vanilla multi-head self-attention, then (for the "joint"
variant) an aggregation block that pools token states into entity/relation
vectors, attends among entities with relation-biased attention, and adds the
result back onto entity token positions, then the feed-forward sublayer.
Blocks are pre-layer-norm. Variant "seq" skips the aggregation block;
variant "rel" feeds learned entity/relation embedding tables through the
same relation-biased attention instead of pooled states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import (
    ParamStore,
    Tensor,
    add,
    embedding_lookup,
    ffn_op,
    index_mean_pool,
    layer_norm,
    matmul,
    multihead_attention_op,
    relation_biased_attention_op,
    slice_view,
    stack,
    zeros,
)
from .errors import EmptyPoolError, LengthError

VARIANT_JOINT = "joint"
VARIANT_SEQ = "seq"
VARIANT_REL = "rel"
VARIANTS = (VARIANT_JOINT, VARIANT_SEQ, VARIANT_REL)


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int
    num_heads: int
    d_model: int
    d_ff: int
    max_input_len: int = 600
    variant: str = VARIANT_JOINT

    def __post_init__(self):
        if self.d_model % self.num_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by {self.num_heads} heads")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def d_k(self) -> int:
        return self.d_model // self.num_heads


@dataclass(frozen=True)
class EncoderInput:
    """Token ids with the graph span and its unit position maps.

    ``ids[:graph_len]`` are the linearized-graph tokens; position maps are
    1-based and may only reference the graph span. ``padding`` marks padded
    positions (True = pad) and may be None when nothing is padded.
    """

    ids: tuple[int, ...]
    graph_len: int
    entity_positions: dict[int, frozenset[int]]
    relation_positions: dict[tuple[int, int], frozenset[int]]
    padding: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        if not 0 < self.graph_len <= len(self.ids):
            raise ValueError(f"graph_len {self.graph_len} outside [1, {len(self.ids)}]")
        nv = len(self.entity_positions)
        if sorted(self.entity_positions) != list(range(1, nv + 1)):
            raise ValueError("entity position map must have dense keys 1..|V|")
        for key, positions in list(self.entity_positions.items()) + list(
            self.relation_positions.items()
        ):
            for p in positions:
                if not 1 <= p <= self.graph_len:
                    raise ValueError(f"unit {key} position {p} outside the graph span")
        if self.padding is not None and len(self.padding) != len(self.ids):
            raise ValueError("padding mask length differs from ids")

    @property
    def num_entities(self) -> int:
        return len(self.entity_positions)


def init_attention_params(store: ParamStore, prefix: str, d_model: int, rng) -> None:
    for name in ("wq", "wk", "wv", "wo"):
        store.add(f"{prefix}.{name}", rng.normal(0.0, 0.02, size=(d_model, d_model)))


def init_ffn_params(store: ParamStore, prefix: str, d_model: int, d_ff: int, rng) -> None:
    store.add(f"{prefix}.w1", rng.normal(0.0, 0.02, size=(d_model, d_ff)))
    store.add(f"{prefix}.b1", np.zeros(d_ff))
    store.add(f"{prefix}.w2", rng.normal(0.0, 0.02, size=(d_ff, d_model)))
    store.add(f"{prefix}.b2", np.zeros(d_model))


def init_layer_norm_params(store: ParamStore, prefix: str, d_model: int) -> None:
    store.add(f"{prefix}.g", np.ones(d_model))
    store.add(f"{prefix}.b", np.zeros(d_model))


AGG_WEIGHT_NAMES = ("wqs", "wks", "wvs", "wkr", "wvr")


def init_encoder_params(store: ParamStore, cfg: EncoderConfig, vocab_size: int, rng) -> None:
    """Register positional embeddings and per-layer weights under "enc." names.

    The head dimension is packed: each (d_model, d_model) matrix holds the
    per-head (d_model, d_k) blocks side by side.
    """
    store.add("enc.pos_emb", rng.normal(0.0, 0.02, size=(cfg.max_input_len, cfg.d_model)))
    for layer in range(cfg.num_layers):
        p = f"enc.{layer}"
        init_layer_norm_params(store, f"{p}.ln1", cfg.d_model)
        init_attention_params(store, f"{p}.attn", cfg.d_model, rng)
        if cfg.variant in (VARIANT_JOINT, VARIANT_REL):
            for name in AGG_WEIGHT_NAMES:
                store.add(f"{p}.agg.{name}", rng.normal(0.0, 0.02, size=(cfg.d_model, cfg.d_model)))
        init_layer_norm_params(store, f"{p}.ln2", cfg.d_model)
        init_ffn_params(store, f"{p}.ffn", cfg.d_model, cfg.d_ff, rng)
    init_layer_norm_params(store, "enc.final_ln", cfg.d_model)
    if cfg.variant == VARIANT_REL:
        store.add("struct.ent_emb", rng.normal(0.0, 0.02, size=(vocab_size, cfg.d_model)))
        store.add("struct.rel_emb", rng.normal(0.0, 0.02, size=(vocab_size, cfg.d_model)))


def multi_head_attention(
    x_q: Tensor,
    x_kv: Tensor,
    wq: Tensor,
    wk: Tensor,
    wv: Tensor,
    wo: Tensor,
    num_heads: int,
    key_padding: np.ndarray | None = None,
    causal: bool = False,
) -> Tensor:
    """Attention of ``x_q`` over ``x_kv`` with packed heads and output
    projection. Padded keys (and future keys under ``causal``) receive -inf
    logits before the softmax, so they carry exactly zero weight.
    """
    lq, lk = x_q.shape[0], x_kv.shape[0]
    blocked = None
    if key_padding is not None:
        blocked = np.broadcast_to(np.asarray(key_padding, dtype=bool).reshape(1, 1, lk), (1, lq, lk))
    if causal:
        future = np.triu(np.ones((lq, lk), dtype=bool), k=1)[None]
        blocked = future if blocked is None else blocked | future
    return multihead_attention_op(x_q, x_kv, wq, wk, wv, wo, num_heads, blocked)


def vanilla_self_attention(
    h: Tensor,
    store: ParamStore,
    prefix: str,
    num_heads: int,
    key_padding: np.ndarray | None = None,
) -> Tensor:
    return multi_head_attention(
        h, h,
        store[f"{prefix}.wq"], store[f"{prefix}.wk"], store[f"{prefix}.wv"], store[f"{prefix}.wo"],
        num_heads, key_padding=key_padding,
    )


def feed_forward(h: Tensor, store: ParamStore, prefix: str) -> Tensor:
    return ffn_op(
        h, store[f"{prefix}.w1"], store[f"{prefix}.b1"],
        store[f"{prefix}.w2"], store[f"{prefix}.b2"],
    )


def pooling_matrices(inp: EncoderInput, length: int) -> tuple[np.ndarray, np.ndarray]:
    """Constant mean-pooling matrices: (|V|, len) for entities and
    (|V|*|V|, len) for the relation grid in row-major (i, j) order.

    A unit's row carries weight 1/|positions| at each of its positions, so a
    matmul against the hidden states performs the mean pooling exactly, and
    rows of absent relations are zero.
    """
    nv = inp.num_entities
    p_ent = np.zeros((nv, length))
    for i in range(1, nv + 1):
        positions = inp.entity_positions.get(i)
        if not positions:
            raise EmptyPoolError(f"entity {i} has no positions to pool")
        weight = 1.0 / len(positions)
        for p in positions:
            p_ent[i - 1, p - 1] = weight
    p_rel = np.zeros((nv * nv, length))
    for (i, j), positions in inp.relation_positions.items():
        if not positions:
            raise EmptyPoolError(f"relation ({i}, {j}) has no positions to pool")
        weight = 1.0 / len(positions)
        for p in positions:
            p_rel[(i - 1) * nv + (j - 1), p - 1] = weight
    return p_ent, p_rel


def pool_units(h: Tensor, inp: EncoderInput) -> tuple[Tensor, Tensor]:
    """Mean-pool hidden rows into per-entity vectors and a dense relation grid.

    Returns Z of shape (|V|, d) and Q of shape (|V|*|V|, d) in row-major
    (i, j) order; absent relations contribute all-zero rows.
    """
    p_ent, p_rel = pooling_matrices(inp, h.shape[0])
    return matmul(Tensor(p_ent), h), matmul(Tensor(p_rel), h)


def _unit_table_embeddings(ids: np.ndarray, inp: EncoderInput, store: ParamStore) -> tuple[Tensor, Tensor]:
    """Variant "rel": unit vectors from learned tables instead of pooling."""
    nv = inp.num_entities
    ent_table, rel_table = store["struct.ent_emb"], store["struct.rel_emb"]
    d_model = ent_table.shape[1]

    def table_mean(table, positions):
        rows = embedding_lookup(table, ids[[p - 1 for p in sorted(positions)]])
        return index_mean_pool(rows, range(len(positions)))

    z_rows = [table_mean(ent_table, inp.entity_positions[i]) for i in range(1, nv + 1)]
    q_rows = []
    for i in range(1, nv + 1):
        for j in range(1, nv + 1):
            positions = inp.relation_positions.get((i, j))
            q_rows.append(table_mean(rel_table, positions) if positions else zeros(d_model))
    return stack(z_rows), stack(q_rows)


def structure_aware_attention(
    z: Tensor,
    q_grid: Tensor,
    store: ParamStore,
    prefix: str,
    num_heads: int,
) -> Tensor:
    """Relation-biased attention among entities.

    Per head, the logit for (i, j) is dot(z_i Wqs, z_j Wks + q_ij Wkr)/sqrt(d_k)
    and the aggregated value is sum_j beta_ij (z_j Wvs + q_ij Wvr); head
    outputs are concatenated with no extra projection.
    """
    return relation_biased_attention_op(
        z, q_grid,
        store[f"{prefix}.wqs"], store[f"{prefix}.wks"], store[f"{prefix}.wvs"],
        store[f"{prefix}.wkr"], store[f"{prefix}.wvr"],
        num_heads,
    )


def scatter_matrix(inp: EncoderInput, length: int) -> np.ndarray:
    """Constant (len, |V|) 0/1 matrix mapping entity vectors onto their
    token positions."""
    scatter = np.zeros((length, inp.num_entities))
    for i, positions in inp.entity_positions.items():
        for p in positions:
            scatter[p - 1, i - 1] = 1.0
    return scatter


def residual_fuse(h: Tensor, z_tilde: Tensor, inp: EncoderInput) -> Tensor:
    """Add z_tilde[j] onto every position of entity j; every other position
    (relations, markers, text, padding) passes through unchanged."""
    return add(h, matmul(Tensor(scatter_matrix(inp, h.shape[0])), z_tilde))


def encode(inp: EncoderInput, cfg: EncoderConfig, store: ParamStore) -> Tensor:
    """Run the full encoder stack; returns the (len, d_model) final states."""
    length = len(inp.ids)
    if length > cfg.max_input_len:
        raise LengthError(f"input length {length} exceeds max_input_len {cfg.max_input_len}")
    ids = np.asarray(inp.ids, dtype=np.int64)
    x = add(embedding_lookup(store["tok_emb"], ids), slice_view(store["enc.pos_emb"], slice(0, length)))

    aggregate = cfg.variant != VARIANT_SEQ
    rel_units = None
    if aggregate:
        # per-input constants, shared by every layer
        p_ent, p_rel = pooling_matrices(inp, length)
        pool_ent, pool_rel = Tensor(p_ent), Tensor(p_rel)
        scatter = Tensor(scatter_matrix(inp, length))
        if cfg.variant == VARIANT_REL:
            rel_units = _unit_table_embeddings(ids, inp, store)

    for layer in range(cfg.num_layers):
        p = f"enc.{layer}"
        normed = layer_norm(x, store[f"{p}.ln1.g"], store[f"{p}.ln1.b"])
        h = add(x, vanilla_self_attention(normed, store, f"{p}.attn", cfg.num_heads, inp.padding))
        if aggregate:
            if cfg.variant == VARIANT_JOINT:
                z, q_grid = matmul(pool_ent, h), matmul(pool_rel, h)
            else:
                z, q_grid = rel_units
            z_tilde = structure_aware_attention(z, q_grid, store, f"{p}.agg", cfg.num_heads)
            h = add(h, matmul(scatter, z_tilde))
        normed = layer_norm(h, store[f"{p}.ln2.g"], store[f"{p}.ln2.b"])
        x = add(h, feed_forward(normed, store, f"{p}.ffn"))
    return layer_norm(x, store["enc.final_ln.g"], store["enc.final_ln.b"])
