"""Transformer decoder with causal self-attention, cross-attention over the
encoder states, a tied language-model head, and beam-search generation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import (
    ParamStore,
    Tensor,
    add,
    embedding_lookup,
    layer_norm,
    log_softmax,
    matmul,
    no_grad,
    slice_view,
    transpose,
)
from .encoder import (
    feed_forward,
    init_attention_params,
    init_ffn_params,
    init_layer_norm_params,
    multi_head_attention,
)
from .errors import LengthError
from .vocab import BOS_ID, EOS_ID


@dataclass(frozen=True)
class DecoderConfig:
    num_layers: int
    num_heads: int
    d_model: int
    d_ff: int
    max_output_len: int = 64

    def __post_init__(self):
        if self.d_model % self.num_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by {self.num_heads} heads")


@dataclass(frozen=True)
class BeamConfig:
    beam_size: int = 5
    length_penalty: float = 1.0
    max_len: int = 64

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.length_penalty < 0:
            raise ValueError("length_penalty must be >= 0")


def init_decoder_params(store: ParamStore, cfg: DecoderConfig, rng) -> None:
    store.add("dec.pos_emb", rng.normal(0.0, 0.02, size=(cfg.max_output_len, cfg.d_model)))
    for layer in range(cfg.num_layers):
        p = f"dec.{layer}"
        init_layer_norm_params(store, f"{p}.ln1", cfg.d_model)
        init_attention_params(store, f"{p}.self", cfg.d_model, rng)
        init_layer_norm_params(store, f"{p}.ln2", cfg.d_model)
        init_attention_params(store, f"{p}.cross", cfg.d_model, rng)
        init_layer_norm_params(store, f"{p}.ln3", cfg.d_model)
        init_ffn_params(store, f"{p}.ffn", cfg.d_model, cfg.d_ff, rng)
    init_layer_norm_params(store, "dec.final_ln", cfg.d_model)


def _decoder_states(
    input_ids: np.ndarray,
    encoder_states: Tensor,
    store: ParamStore,
    cfg: DecoderConfig,
    encoder_padding: np.ndarray | None,
) -> Tensor:
    length = len(input_ids)
    x = add(
        embedding_lookup(store["tok_emb"], input_ids),
        slice_view(store["dec.pos_emb"], slice(0, length)),
    )
    for layer in range(cfg.num_layers):
        p = f"dec.{layer}"
        normed = layer_norm(x, store[f"{p}.ln1.g"], store[f"{p}.ln1.b"])
        x = add(
            x,
            multi_head_attention(
                normed, normed,
                store[f"{p}.self.wq"], store[f"{p}.self.wk"],
                store[f"{p}.self.wv"], store[f"{p}.self.wo"],
                cfg.num_heads, causal=True,
            ),
        )
        normed = layer_norm(x, store[f"{p}.ln2.g"], store[f"{p}.ln2.b"])
        x = add(
            x,
            multi_head_attention(
                normed, encoder_states,
                store[f"{p}.cross.wq"], store[f"{p}.cross.wk"],
                store[f"{p}.cross.wv"], store[f"{p}.cross.wo"],
                cfg.num_heads, key_padding=encoder_padding,
            ),
        )
        normed = layer_norm(x, store[f"{p}.ln3.g"], store[f"{p}.ln3.b"])
        x = add(x, feed_forward(normed, store, f"{p}.ffn"))
    return layer_norm(x, store["dec.final_ln.g"], store["dec.final_ln.b"])


def lm_logits(states: Tensor, store: ParamStore) -> Tensor:
    """Project onto the vocabulary with the tied input embedding table."""
    return matmul(states, transpose(store["tok_emb"]))


def decode_train(
    target_ids,
    encoder_states: Tensor,
    store: ParamStore,
    cfg: DecoderConfig,
    encoder_padding: np.ndarray | None = None,
) -> tuple[Tensor, Tensor]:
    """Teacher-forced pass over the target sequence.

    The decoder reads <BOS> followed by the targets shifted right; position i
    of the returned logits predicts target i, and row i of the returned final
    states is the contextual vector for that same position.
    """
    target_ids = np.asarray(target_ids, dtype=np.int64)
    n = len(target_ids)
    if n > cfg.max_output_len:
        raise LengthError(f"target length {n} exceeds max_output_len {cfg.max_output_len}")
    input_ids = np.concatenate([[BOS_ID], target_ids[:-1]])
    states = _decoder_states(input_ids, encoder_states, store, cfg, encoder_padding)
    return lm_logits(states, store), states


def beam_search(step_logprobs, beam: BeamConfig, eos_id: int = EOS_ID) -> list[int]:
    """Generic beam search over a step function.

    ``step_logprobs(prefix)`` maps a list of generated token ids to the log
    probability vector of the next token. A hypothesis ends when it emits
    ``eos_id`` or reaches ``max_len`` tokens; its score is the sum of token
    log probabilities divided by length**length_penalty, the length counting
    every emitted token including the end marker. Token-level ties break
    toward the lower id. The greedy rollout is always scored as a candidate,
    so the result never ranks below greedy.
    """

    def penalized(logprob_sum: float, length: int) -> float:
        return logprob_sum / (length ** beam.length_penalty) if length > 0 else logprob_sum

    def rollout_greedy() -> tuple[float, list[int]]:
        prefix: list[int] = []
        total = 0.0
        for _ in range(beam.max_len):
            lp = step_logprobs(prefix)
            token = int(np.argmax(lp))  # np.argmax takes the first (lowest id) maximum
            total += float(lp[token])
            prefix.append(token)
            if token == eos_id:
                break
        return penalized(total, len(prefix)), prefix

    live: list[tuple[float, list[int]]] = [(0.0, [])]
    finished: list[tuple[float, list[int]]] = []
    for _ in range(beam.max_len):
        candidates: list[tuple[float, float, list[int]]] = []
        for logprob_sum, prefix in live:
            lp = step_logprobs(prefix)
            order = np.argsort(-lp, kind="stable")[: beam.beam_size]
            for token in order:
                token = int(token)
                total = logprob_sum + float(lp[token])
                seq = prefix + [token]
                candidates.append((penalized(total, len(seq)), total, seq))
        candidates.sort(key=lambda c: (-c[0], c[2]))
        live = []
        for score, total, seq in candidates:
            if seq[-1] == eos_id:
                finished.append((score, seq))
            elif len(live) < beam.beam_size:
                live.append((total, seq))
            if len(live) >= beam.beam_size and len(finished) >= beam.beam_size:
                break
        if not live:
            break
    finished.extend((penalized(total, len(seq)), seq) for total, seq in live if seq)
    if beam.beam_size > 1:
        finished.append(rollout_greedy())
    finished.sort(key=lambda c: (-c[0], len(c[1]), c[1]))
    return finished[0][1]


def generate(
    encoder_states: Tensor,
    store: ParamStore,
    cfg: DecoderConfig,
    beam: BeamConfig,
    encoder_padding: np.ndarray | None = None,
) -> list[int]:
    """Beam-search decode from <BOS>; returns generated ids without markers."""

    def step_logprobs(prefix: list[int]) -> np.ndarray:
        input_ids = np.asarray([BOS_ID] + list(prefix), dtype=np.int64)
        with no_grad():
            states = _decoder_states(input_ids, encoder_states, store, cfg, encoder_padding)
            logits = lm_logits(slice_view(states, slice(len(input_ids) - 1, len(input_ids))), store)
            return log_softmax(logits, axis=-1).data[0]

    effective = BeamConfig(
        beam_size=beam.beam_size,
        length_penalty=beam.length_penalty,
        max_len=min(beam.max_len, cfg.max_output_len),
    )
    sequence = beam_search(step_logprobs, effective)
    return [t for t in sequence if t != EOS_ID]
