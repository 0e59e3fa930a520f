"""Pre-training losses (text/graph reconstruction, transport alignment),
the proximal-point transport solver, and the fine-tuning loss."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from .autograd import (
    Tensor,
    add,
    cosine_cost,
    cross_entropy,
    embedding_lookup,
    index_mean_pool,
    mul,
    reduce_sum,
    scale,
    stack,
)
from .data import GraphTextPair, linearize, unit_sequence
from .decoder import lm_logits
from .encoder import EncoderInput
from .errors import MarginalError, NumericError, ShapeError
from .model import Seq2SeqModel
from .vocab import SEP_ID, mask_graph, mask_text


@dataclass(frozen=True)
class OTConfig:
    """Solver constants: proximal kernel strength and iteration counts."""

    beta: float = 1.0
    inner_k: int = 1
    outer_n: int = 10

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.inner_k < 1 or self.outer_n < 1:
            raise ValueError("iteration counts must be >= 1")


@dataclass(frozen=True)
class TransportPlan:
    """Nonnegative coupling matrix with its row/column marginal targets."""

    matrix: np.ndarray
    row_marginals: np.ndarray
    col_marginals: np.ndarray

    def __post_init__(self):
        if self.matrix.shape != (len(self.row_marginals), len(self.col_marginals)):
            raise ShapeError("plan shape disagrees with marginal lengths")
        if (self.matrix < 0).any():
            raise NumericError("transport plan has negative entries")

    def cost(self, cost_matrix: np.ndarray) -> float:
        return float((self.matrix * cost_matrix).sum())

    def marginal_violation(self) -> tuple[float, float]:
        row = np.abs(self.matrix.sum(axis=1) - self.row_marginals).max()
        col = np.abs(self.matrix.sum(axis=0) - self.col_marginals).max()
        return float(row), float(col)


def uniform_marginals(p: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    return np.full(p, 1.0 / p), np.full(q, 1.0 / q)


def ipot(C: np.ndarray, a: np.ndarray, b: np.ndarray, cfg: OTConfig = OTConfig()) -> TransportPlan:
    """Inexact proximal point iteration for the optimal transport plan.

    Starting from the all-ones matrix, each of the ``outer_n`` iterations
    re-weights by the proximal kernel exp(-C/beta) and applies ``inner_k``
    alternating marginal-scaling updates before rebuilding the plan. No
    gradient flows through the solver; callers treat the plan as a constant.
    """
    C = np.asarray(C, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.isnan(C).any() or np.isinf(C).any():
        raise NumericError("cost matrix contains non-finite entries")
    if C.ndim != 2 or C.shape != (len(a), len(b)):
        raise ShapeError(f"cost matrix {C.shape} does not match marginals ({len(a)}, {len(b)})")
    if (a <= 0).any() or (b <= 0).any():
        raise MarginalError("marginals must be strictly positive")
    if abs(a.sum() - 1.0) > 1e-8 or abs(b.sum() - 1.0) > 1e-8:
        raise MarginalError("marginals must each sum to one")

    kernel = np.exp(-C / cfg.beta)
    plan = np.ones_like(C)
    sigma = b.copy()
    for _ in range(cfg.outer_n):
        Q = kernel * plan
        for _ in range(cfg.inner_k):
            delta = a / (Q @ sigma)
            sigma = b / (Q.T @ delta)
        plan = delta[:, None] * Q * sigma[None, :]
    return TransportPlan(plan, a, b)


@dataclass
class LossBundle:
    """The three pre-training losses with their weights and weighted total."""

    l_text: Tensor
    l_graph: Tensor
    l_ot: Tensor
    weights: tuple[float, float, float]
    total: Tensor

    def __post_init__(self):
        for name, value in self.components().items():
            if not math.isfinite(value) or value < 0:
                raise NumericError(f"loss component {name} is {value}")

    def components(self) -> dict[str, float]:
        return {
            "l_text": self.l_text.item(),
            "l_graph": self.l_graph.item(),
            "l_ot": self.l_ot.item(),
        }


def loss_text_reconstruction(
    model: Seq2SeqModel,
    pair: GraphTextPair,
    rng: random.Random,
    p_entity: float = 0.40,
    p_other: float = 0.20,
) -> Tensor:
    """Decode the original text from the complete graph plus a corrupted text."""
    lin = linearize(pair.graph)
    masked = mask_text(pair, rng, p_entity, p_other)
    inp = model.encoder_input(lin, masked.corrupted)
    states = model.encode(inp)
    targets = model.target_ids(pair.text)
    logits, _ = model.decode_train(targets, states, inp.padding)
    return cross_entropy(logits, targets)


def loss_graph_reconstruction(
    model: Seq2SeqModel,
    pair: GraphTextPair,
    rng: random.Random,
    p_entity: float = 0.40,
    p_relation: float = 0.20,
) -> Tensor:
    """Predict the masked unit tokens of a corrupted graph given the text.

    A vocabulary projection tied to the embedding table reads the encoder's
    final states at each masked graph position; with nothing masked the loss
    is exactly zero with zero gradient.
    """
    lin = linearize(pair.graph)
    masked = mask_graph(lin, rng, p_entity, p_relation)
    masked_rows = [i for i, flag in enumerate(masked.indicators) if flag]
    if not masked_rows:
        return Tensor(0.0)
    corrupted_ids = model.vocab.encode_tokens(masked.corrupted)
    text_ids = model.vocab.encode_tokens(pair.text)
    inp = EncoderInput(
        ids=tuple(corrupted_ids + [SEP_ID] + text_ids),
        graph_len=lin.m,
        entity_positions=lin.entity_positions,
        relation_positions=lin.relation_positions,
    )
    states = model.encode(inp)
    picked = embedding_lookup(states, np.asarray(masked_rows, dtype=np.int64))
    logits = lm_logits(picked, model.store)
    targets = np.asarray(
        [model.vocab.encode(masked.original[r]) for r in masked_rows], dtype=np.int64
    )
    return cross_entropy(logits, targets)


def alignment_embeddings(model: Seq2SeqModel, pair: GraphTextPair) -> tuple[Tensor, Tensor]:
    """Pooled unit vectors from the encoder and per-token decoder vectors.

    The encoder sees only the linearized graph; the decoder is teacher-forced
    on the text, and only the states for the text tokens themselves (not the
    end marker) become transport atoms.
    """
    lin = linearize(pair.graph)
    inp = model.encoder_input(lin)
    enc_states = model.encode(inp)
    unit_rows = []
    for kind, key in unit_sequence(pair.graph):
        positions = lin.entity_positions[key] if kind == "entity" else lin.relation_positions[key]
        unit_rows.append(index_mean_pool(enc_states, [p - 1 for p in positions]))
    graph_vectors = stack(unit_rows)
    targets = model.target_ids(pair.text)
    _, dec_states = model.decode_train(targets, enc_states, inp.padding)
    text_vectors = dec_states[0 : pair.n]
    return graph_vectors, text_vectors


def loss_ot_alignment(
    model: Seq2SeqModel,
    pair: GraphTextPair,
    cfg: OTConfig = OTConfig(),
    frozen_plan: TransportPlan | None = None,
) -> Tensor:
    """Transport cost between graph-unit and text-token embeddings.

    The plan is solved on the current cosine costs and then held constant, so
    gradients flow only through the cost matrix. Pass ``frozen_plan`` to skip
    the solve (used by finite-difference checks, which must not let the plan
    respond to parameter perturbations).
    """
    graph_vectors, text_vectors = alignment_embeddings(model, pair)
    costs = cosine_cost(graph_vectors, text_vectors)
    if frozen_plan is None:
        a, b = uniform_marginals(*costs.shape)
        frozen_plan = ipot(costs.data, a, b, cfg)
    elif frozen_plan.matrix.shape != costs.shape:
        raise ShapeError("frozen plan shape does not match the cost matrix")
    return reduce_sum(mul(costs, Tensor(frozen_plan.matrix)))


def loss_finetune(model: Seq2SeqModel, pair: GraphTextPair) -> Tensor:
    """Plain graph-to-text generation loss: encode the graph, decode the text."""
    lin = linearize(pair.graph)
    inp = model.encoder_input(lin)
    states = model.encode(inp)
    targets = model.target_ids(pair.text)
    logits, _ = model.decode_train(targets, states, inp.padding)
    return cross_entropy(logits, targets)


def combined_pretrain_loss(
    model: Seq2SeqModel,
    pair: GraphTextPair,
    rng: random.Random,
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
    ot_config: OTConfig = OTConfig(),
) -> LossBundle:
    """Weighted sum of the three pre-training losses on one pair.

    Components with weight zero are skipped entirely and reported as zero.
    """
    if any(w < 0 for w in weights):
        raise ValueError("loss weights must be >= 0")
    w_text, w_graph, w_ot = weights
    zero = Tensor(0.0)
    l_text = loss_text_reconstruction(model, pair, rng) if w_text > 0 else zero
    l_graph = loss_graph_reconstruction(model, pair, rng) if w_graph > 0 else zero
    l_ot = loss_ot_alignment(model, pair, ot_config) if w_ot > 0 else zero
    total = zero
    for weight, loss in ((w_text, l_text), (w_graph, l_graph), (w_ot, l_ot)):
        if weight > 0:
            total = add(total, scale(loss, weight))
    return LossBundle(l_text, l_graph, l_ot, tuple(weights), total)
