"""Command-line entry point: pretrain, finetune, generate, eval, gradcheck,
and linearize, wired over JSON run configs and checkpoint directories.

Exit codes: 0 success, 1 user/config error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import random
import sys
from dataclasses import dataclass
from pathlib import Path

from .autograd import grad_check
from .data import linearize, load_corpus, unit_sequence
from .decoder import BeamConfig, DecoderConfig
from .encoder import EncoderConfig
from .errors import (
    CheckpointError,
    CorpusParseError,
    EmptyCorpus,
    EvalError,
    Graph2TextError,
    LengthError,
)
from .metrics import evaluate_corpus
from .model import build_model
from .objectives import (
    OTConfig,
    ipot,
    loss_finetune,
    loss_graph_reconstruction,
    loss_ot_alignment,
    loss_text_reconstruction,
    alignment_embeddings,
    uniform_marginals,
)
from .autograd import cosine_cost, no_grad
from .synth import build_toy_model
from .training import (
    TrainConfig,
    init_model_from_checkpoint,
    load_checkpoint,
    train,
)
from .vocab import build_vocab

_USER_ERRORS = (
    CorpusParseError,
    EmptyCorpus,
    CheckpointError,
    EvalError,
    LengthError,
    FileNotFoundError,
    IsADirectoryError,
    NotADirectoryError,
    PermissionError,
    ValueError,
)


@dataclass
class RunConfig:
    """Flat union of model, optimizer, solver, and decoding settings."""

    d_model: int = 64
    num_heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 2
    d_ff: int = 128
    max_input_len: int = 600
    max_output_len: int = 64
    variant: str = "joint"
    learning_rate: float = 3e-5
    warmup_ratio: float = 0.1
    max_grad_norm: float = 1.0
    adam_eps: float = 1e-8
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    batch_size: int = 8
    epochs: int = 1
    seed: int = 13
    min_freq: int = 1
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    ot_beta: float = 1.0
    ot_inner_k: int = 1
    ot_outer_n: int = 10
    beam_size: int = 5
    length_penalty: float = 1.0
    checkpoint_every: int = 1

    @classmethod
    def from_file(cls, path: str | None) -> "RunConfig":
        if path is None:
            return cls()
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"config {path} is not valid JSON: {exc}") from exc
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"config {path} has unknown keys: {sorted(unknown)}")
        if "weights" in raw:
            raw["weights"] = tuple(float(w) for w in raw["weights"])
        return cls(**raw)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            num_layers=self.encoder_layers, num_heads=self.num_heads, d_model=self.d_model,
            d_ff=self.d_ff, max_input_len=self.max_input_len, variant=self.variant,
        )

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(
            num_layers=self.decoder_layers, num_heads=self.num_heads, d_model=self.d_model,
            d_ff=self.d_ff, max_output_len=self.max_output_len,
        )

    def train_config(self, task: str) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, warmup_ratio=self.warmup_ratio,
            max_grad_norm=self.max_grad_norm, adam_eps=self.adam_eps,
            adam_betas=(self.adam_beta1, self.adam_beta2), batch_size=self.batch_size,
            epochs=self.epochs, seed=self.seed, task=task, loss_weights=self.weights,
            ot_config=OTConfig(self.ot_beta, self.ot_inner_k, self.ot_outer_n),
            checkpoint_every=self.checkpoint_every,
        )

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["weights"] = list(d["weights"])
        return d


def _parse_weights(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"--weights expects three comma-separated numbers, got {text!r}")
    return tuple(float(p) for p in parts)


def _validate_lengths(cfg: RunConfig, corpus) -> None:
    longest_input = 0
    longest_target = 0
    for pair in corpus:
        m = linearize(pair.graph).m
        longest_input = max(longest_input, m + 1 + pair.n)
        longest_target = max(longest_target, pair.n + 1)
    if longest_input > cfg.max_input_len:
        raise LengthError(
            f"corpus needs max_input_len >= {longest_input}, configured {cfg.max_input_len}"
        )
    if longest_target > cfg.max_output_len:
        raise LengthError(
            f"corpus needs max_output_len >= {longest_target}, configured {cfg.max_output_len}"
        )


def _write_resolved_config(cfg: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config.resolved.json", "w", encoding="utf-8") as fh:
        json.dump(cfg.as_dict(), fh, indent=1, sort_keys=True)


def cmd_pretrain(args) -> int:
    cfg = RunConfig.from_file(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.weights is not None:
        cfg.weights = _parse_weights(args.weights)
    corpus = load_corpus(args.corpus)
    if not corpus:
        raise EmptyCorpus(f"corpus {args.corpus} holds no pairs")
    _validate_lengths(cfg, corpus)
    vocab = build_vocab(corpus, min_freq=cfg.min_freq)
    model = build_model(vocab, cfg.encoder_config(), cfg.decoder_config(), seed=cfg.seed)
    out_dir = Path(args.out)
    _write_resolved_config(cfg, out_dir)
    train(corpus, model, cfg.train_config("pretrain"), out_dir)
    return 0


def cmd_finetune(args) -> int:
    cfg = RunConfig.from_file(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    corpus = load_corpus(args.corpus)
    if not corpus:
        raise EmptyCorpus(f"corpus {args.corpus} holds no pairs")
    _validate_lengths(cfg, corpus)
    init_model = load_checkpoint(args.init)
    model = build_model(
        init_model.vocab, cfg.encoder_config(), cfg.decoder_config(), seed=cfg.seed
    )
    init_model_from_checkpoint(model, args.init)
    out_dir = Path(args.out)
    _write_resolved_config(cfg, out_dir)
    train(corpus, model, cfg.train_config("finetune"), out_dir)
    return 0


def cmd_generate(args) -> int:
    model = load_checkpoint(args.ckpt)
    corpus = load_corpus(args.input)
    beam = BeamConfig(
        beam_size=args.beam,
        length_penalty=args.length_penalty,
        max_len=model.decoder_config.max_output_len,
    )
    lines = [" ".join(model.generate_text(pair, beam)) for pair in corpus]
    with open(args.out, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")
    return 0


def _read_token_lines(path: str) -> list[list[str]]:
    with open(path, encoding="utf-8") as fh:
        return [line.split() for line in fh.read().splitlines()]


def cmd_eval(args) -> int:
    hypotheses = _read_token_lines(args.hyp)
    references = _read_token_lines(args.ref)
    report = evaluate_corpus(hypotheses, references)
    print(json.dumps(
        {"bleu": report.bleu, "rouge_l": report.rouge_l, "num_examples": len(hypotheses)}
    ))
    return 0


def _masking_rng_with_coverage(model, pair, seed: int = 0) -> int:
    """First seed whose graph corruption masks at least one unit, so the
    graph-reconstruction check exercises real gradients."""
    for candidate in range(seed, seed + 1000):
        rng = random.Random(candidate)
        if loss_graph_reconstruction(model, pair, rng).item() > 0:
            return candidate
    raise Graph2TextError("no masking seed produced a non-empty corruption")


def cmd_gradcheck(args) -> int:
    cfg = RunConfig.from_file(args.config)
    overrides = {}
    if args.config is not None:
        overrides = dict(
            d_model=cfg.d_model, num_heads=cfg.num_heads, num_layers=cfg.encoder_layers,
            d_ff=cfg.d_ff, max_input_len=cfg.max_input_len, max_output_len=cfg.max_output_len,
        )
    model, corpus = build_toy_model(variant=cfg.variant, seed=args.seed or 0, **overrides)
    pair = corpus[0]
    with no_grad():
        graph_seed = _masking_rng_with_coverage(model, pair)
        graph_vecs, text_vecs = alignment_embeddings(model, pair)
        costs = cosine_cost(graph_vecs, text_vecs)
        plan = ipot(costs.data, *uniform_marginals(*costs.shape), OTConfig())

    checks = {
        "l_text": lambda: loss_text_reconstruction(model, pair, random.Random(7)),
        "l_graph": lambda: loss_graph_reconstruction(model, pair, random.Random(graph_seed)),
        "l_ot": lambda: loss_ot_alignment(model, pair, frozen_plan=plan),
        "l_finetune": lambda: loss_finetune(model, pair),
    }
    all_ok = True
    for name, f in checks.items():
        report = grad_check(f, model.store, tol=args.tol)
        status = "ok" if report.passed else "FAIL"
        print(f"{name}: max_rel_err={report.max_rel_err:.3e} worst={report.worst()} [{status}]")
        all_ok = all_ok and report.passed
    return 0 if all_ok else 2


def cmd_linearize(args) -> int:
    corpus = load_corpus(args.corpus)
    for k, pair in enumerate(corpus):
        lin = linearize(pair.graph)
        print(" ".join(lin.tokens))
        for kind, key in unit_sequence(pair.graph):
            if kind == "entity":
                surface = pair.graph.entities[key - 1]
                positions = sorted(lin.entity_positions[key])
                print(f"  e{key} {surface!r}: {positions}")
            else:
                surface = pair.graph.relations[key]
                positions = sorted(lin.relation_positions[key])
                print(f"  r{key} {surface!r}: {positions}")
        if k + 1 < len(corpus):
            print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graph2text",
        description="Structure-aware graph-to-text training, generation, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="run the three pre-training tasks")
    p.add_argument("--config", default=None, help="JSON run config (defaults apply)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weights", default=None, help="w_text,w_graph,w_ot override")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="fine-tune from a checkpoint")
    p.add_argument("--config", default=None)
    p.add_argument("--corpus", required=True)
    p.add_argument("--init", required=True, help="checkpoint directory to start from")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("generate", help="decode texts for a corpus of graphs")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True, help="corpus file; text fields are ignored")
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--length-penalty", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="BLEU and ROUGE-L of hypotheses vs references")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every loss")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("linearize", help="print linearizations with position maps")
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=cmd_linearize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal invariant violations
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())
