"""Encoder-decoder model assembly: parameter construction and forwarding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import ParamStore, Tensor
from .data import GraphTextPair, LinearizedGraph, linearize
from .decoder import BeamConfig, DecoderConfig, decode_train, generate, init_decoder_params
from .encoder import EncoderConfig, EncoderInput, encode, init_encoder_params
from .vocab import EOS_ID, SEP_ID, Vocabulary


@dataclass
class Seq2SeqModel:
    """Vocabulary, configs, and one parameter store for the whole network.

    The token embedding table is shared by the encoder input, decoder input,
    and the output head.
    """

    vocab: Vocabulary
    encoder_config: EncoderConfig
    decoder_config: DecoderConfig
    store: ParamStore

    def encode(self, inp: EncoderInput) -> Tensor:
        return encode(inp, self.encoder_config, self.store)

    def decode_train(self, target_ids, encoder_states, encoder_padding=None):
        return decode_train(
            target_ids, encoder_states, self.store, self.decoder_config, encoder_padding
        )

    def generate(self, inp: EncoderInput, beam: BeamConfig) -> list[int]:
        states = self.encode(inp)
        return generate(states, self.store, self.decoder_config, beam, inp.padding)

    def encoder_input(self, lin: LinearizedGraph, text_tokens=None) -> EncoderInput:
        """Ids for ``graph [<SEP> text]`` with the graph's unit position maps."""
        ids = self.vocab.encode_tokens(lin.tokens)
        if text_tokens is not None:
            ids = ids + [SEP_ID] + self.vocab.encode_tokens(text_tokens)
        return EncoderInput(
            ids=tuple(ids),
            graph_len=lin.m,
            entity_positions=lin.entity_positions,
            relation_positions=lin.relation_positions,
        )

    def target_ids(self, text_tokens) -> np.ndarray:
        """Decoder targets: the text followed by the end-of-sequence marker."""
        return np.asarray(self.vocab.encode_tokens(text_tokens) + [EOS_ID], dtype=np.int64)

    def generate_text(self, pair_or_graph, beam: BeamConfig) -> list[str]:
        graph = pair_or_graph.graph if isinstance(pair_or_graph, GraphTextPair) else pair_or_graph
        ids = self.generate(self.encoder_input(linearize(graph)), beam)
        return self.vocab.decode_ids(ids)


def build_model(
    vocab: Vocabulary,
    encoder_config: EncoderConfig,
    decoder_config: DecoderConfig,
    seed: int = 0,
) -> Seq2SeqModel:
    if encoder_config.d_model != decoder_config.d_model:
        raise ValueError("encoder and decoder must share d_model")
    rng = np.random.default_rng(seed)
    store = ParamStore()
    store.add("tok_emb", rng.normal(0.0, 0.02, size=(len(vocab), encoder_config.d_model)))
    init_encoder_params(store, encoder_config, len(vocab), rng)
    init_decoder_params(store, decoder_config, rng)
    return Seq2SeqModel(vocab, encoder_config, decoder_config, store)
