"""Optimization loop: Adam with warmup/decay, gradient clipping, seeded
shuffling, JSONL step logs, and bitwise checkpoint round-trips."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autograd import ParamStore, backward
from .decoder import DecoderConfig
from .encoder import EncoderConfig
from .errors import CheckpointError, EmptyCorpus, UsageError
from .model import Seq2SeqModel, build_model
from .objectives import OTConfig, combined_pretrain_loss, loss_finetune
from .vocab import Vocabulary

TASK_PRETRAIN = "pretrain"
TASK_FINETUNE = "finetune"

# parameter name fragments that may legitimately be absent from a checkpoint
# (structure weights when initializing a richer variant from a plainer one)
_OPTIONAL_PARAM_MARKERS = (".agg.", "struct.")


@dataclass
class TrainConfig:
    learning_rate: float = 3e-5
    warmup_ratio: float = 0.1
    max_grad_norm: float = 1.0
    adam_eps: float = 1e-8
    adam_betas: tuple[float, float] = (0.9, 0.999)
    batch_size: int = 8
    epochs: int = 1
    seed: int = 13
    task: str = TASK_PRETRAIN
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    ot_config: OTConfig = field(default_factory=OTConfig)
    checkpoint_every: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.warmup_ratio <= 1.0:
            raise ValueError("warmup_ratio must lie in [0, 1]")
        if self.task not in (TASK_PRETRAIN, TASK_FINETUNE):
            raise ValueError(f"unknown task {self.task!r}")


class AdamState:
    """First/second moment accumulators per parameter plus the step count."""

    def __init__(self, store: ParamStore):
        self.m = {name: np.zeros_like(t.data) for name, t in store.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in store.items()}
        self.step = 0


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Linear warmup to the peak rate, then linear decay to zero."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warmup = cfg.warmup_ratio * total_steps
    if step < warmup:
        return cfg.learning_rate * step / warmup
    if total_steps == warmup:
        return cfg.learning_rate
    return cfg.learning_rate * (total_steps - step) / (total_steps - warmup)


def global_grad_norm(store: ParamStore) -> float:
    total = 0.0
    for _, t in store.items():
        if t.grad is not None:
            total += float((t.grad * t.grad).sum())
    return math.sqrt(total)


def clip_gradients(store: ParamStore, max_norm: float) -> float:
    """Scale all gradients so their global norm is at most max_norm.

    Returns the pre-clip norm.
    """
    norm = global_grad_norm(store)
    if norm > max_norm:
        factor = max_norm / norm
        for _, t in store.items():
            if t.grad is not None:
                t.grad = t.grad * factor
    return norm


def adam_step(store: ParamStore, state: AdamState, lr: float, cfg: TrainConfig) -> None:
    """Bias-corrected Adam update; consumes (and clears) the gradients."""
    beta1, beta2 = cfg.adam_betas
    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step
    for name, t in store.items():
        if t.grad is None:
            raise UsageError(f"parameter {name!r} has no gradient; run backward first")
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * t.grad
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * (t.grad * t.grad)
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        t.data -= lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        t.grad = None


def _pair_rng(seed: int, step: int, index: int) -> random.Random:
    return random.Random(((seed * 1_000_003 + step) * 1_000_003 + index) % (2**63))


def train(
    corpus,
    model: Seq2SeqModel,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
) -> list[dict]:
    """Run the optimization loop and return the per-step log records.

    Batches are shuffled per epoch with a seeded generator; each record holds
    {step, lr, l_text, l_graph, l_ot, total}. With an output directory, the
    log is streamed to log.jsonl and checkpoints are written at epoch
    boundaries (every ``checkpoint_every`` epochs and always at the last).
    """
    if not corpus:
        raise EmptyCorpus("training corpus is empty")
    out_path = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_path / "log.jsonl", "w", encoding="utf-8")

    order_rng = random.Random(cfg.seed)
    state = AdamState(model.store)
    batches_per_epoch = math.ceil(len(corpus) / cfg.batch_size)
    total_steps = cfg.epochs * batches_per_epoch
    records: list[dict] = []
    step = 0
    try:
        for epoch in range(cfg.epochs):
            indices = list(range(len(corpus)))
            order_rng.shuffle(indices)
            for b in range(batches_per_epoch):
                batch = indices[b * cfg.batch_size : (b + 1) * cfg.batch_size]
                model.store.zero_grads()
                total = None
                sums = {"l_text": 0.0, "l_graph": 0.0, "l_ot": 0.0}
                for k, idx in enumerate(batch):
                    pair = corpus[idx]
                    if cfg.task == TASK_PRETRAIN:
                        bundle = combined_pretrain_loss(
                            model, pair, _pair_rng(cfg.seed, step, k),
                            cfg.loss_weights, cfg.ot_config,
                        )
                        loss = bundle.total
                        for key, value in bundle.components().items():
                            sums[key] += value
                    else:
                        loss = loss_finetune(model, pair)
                        sums["l_text"] += loss.item()
                    total = loss if total is None else total + loss
                mean_loss = total * (1.0 / len(batch))
                backward(mean_loss)
                clip_gradients(model.store, cfg.max_grad_norm)
                lr = lr_at(step, total_steps, cfg)
                adam_step(model.store, state, lr, cfg)
                record = {
                    "step": step,
                    "lr": lr,
                    "l_text": sums["l_text"] / len(batch),
                    "l_graph": sums["l_graph"] / len(batch),
                    "l_ot": sums["l_ot"] / len(batch),
                    "total": mean_loss.item(),
                }
                records.append(record)
                if log_fh is not None:
                    log_fh.write(json.dumps(record) + "\n")
                step += 1
            if out_path is not None and (
                (epoch + 1) % cfg.checkpoint_every == 0 or epoch + 1 == cfg.epochs
            ):
                save_checkpoint(model, out_path / "checkpoints" / f"epoch-{epoch + 1}")
    finally:
        if log_fh is not None:
            log_fh.close()
    return records


# ---------------------------------------------------------------------------
# checkpointing

def model_config_dict(model: Seq2SeqModel) -> dict:
    enc, dec = model.encoder_config, model.decoder_config
    return {
        "variant": enc.variant,
        "d_model": enc.d_model,
        "encoder_layers": enc.num_layers,
        "decoder_layers": dec.num_layers,
        "num_heads": enc.num_heads,
        "d_ff": enc.d_ff,
        "max_input_len": enc.max_input_len,
        "max_output_len": dec.max_output_len,
        "vocab_size": len(model.vocab),
    }


def save_checkpoint(model: Seq2SeqModel, path: str | Path) -> Path:
    """Write manifest.json, vocab.txt, and params.bin (raw little-endian f64)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    model.vocab.save(path / "vocab.txt")
    manifest = {
        "model": model_config_dict(model),
        "vocab_file": "vocab.txt",
        "params": [
            {"name": name, "shape": list(t.data.shape), "dtype": "f64"}
            for name, t in model.store.items()
        ],
    }
    with open(path / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    with open(path / "params.bin", "wb") as fh:
        for _, t in model.store.items():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return path


def _read_manifest(path: Path) -> dict:
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise CheckpointError(f"missing manifest: {manifest_path}")
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"unreadable manifest: {exc}") from exc
    for key in ("model", "vocab_file", "params"):
        if key not in manifest:
            raise CheckpointError(f"manifest lacks '{key}'")
    return manifest


def _read_params(path: Path, manifest: dict) -> dict[str, np.ndarray]:
    bin_path = path / "params.bin"
    if not bin_path.is_file():
        raise CheckpointError(f"missing parameter file: {bin_path}")
    raw = np.fromfile(bin_path, dtype="<f8")
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for entry in manifest["params"]:
        if entry.get("dtype") != "f64":
            raise CheckpointError(f"unsupported dtype {entry.get('dtype')!r}")
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        if offset + size > raw.size:
            raise CheckpointError("parameter file is truncated")
        arrays[entry["name"]] = raw[offset : offset + size].reshape(shape).astype(np.float64)
        offset += size
    if offset != raw.size:
        raise CheckpointError("parameter file has trailing bytes beyond the manifest")
    return arrays


def load_checkpoint(path: str | Path) -> Seq2SeqModel:
    """Rebuild the model from a checkpoint directory, bit-for-bit."""
    path = Path(path)
    manifest = _read_manifest(path)
    vocab_path = path / manifest["vocab_file"]
    if not vocab_path.is_file():
        raise CheckpointError(f"missing vocabulary file: {vocab_path}")
    vocab = Vocabulary.load(vocab_path)
    mc = manifest["model"]
    if mc.get("vocab_size") != len(vocab):
        raise CheckpointError(
            f"vocabulary size {len(vocab)} disagrees with manifest {mc.get('vocab_size')}"
        )
    enc_cfg = EncoderConfig(
        num_layers=mc["encoder_layers"], num_heads=mc["num_heads"], d_model=mc["d_model"],
        d_ff=mc["d_ff"], max_input_len=mc["max_input_len"], variant=mc["variant"],
    )
    dec_cfg = DecoderConfig(
        num_layers=mc["decoder_layers"], num_heads=mc["num_heads"], d_model=mc["d_model"],
        d_ff=mc["d_ff"], max_output_len=mc["max_output_len"],
    )
    model = build_model(vocab, enc_cfg, dec_cfg, seed=0)
    arrays = _read_params(path, manifest)
    if set(arrays) != set(model.store.names()):
        missing = sorted(set(model.store.names()) - set(arrays))
        extra = sorted(set(arrays) - set(model.store.names()))
        raise CheckpointError(f"parameter names disagree (missing {missing}, extra {extra})")
    for name, t in model.store.items():
        if arrays[name].shape != t.data.shape:
            raise CheckpointError(
                f"shape of {name!r} is {arrays[name].shape}, expected {t.data.shape}"
            )
        t.data = arrays[name]
    return model


def init_model_from_checkpoint(model: Seq2SeqModel, path: str | Path) -> None:
    """Copy matching parameters from a checkpoint into an existing model.

    Structure/aggregation weights absent from the checkpoint (fine-tuning a
    richer variant from a plainer one) are zero-initialized, which makes the
    first forward pass reproduce the plain model exactly. Any other missing
    parameter, or any shape mismatch, is an error. Extra checkpoint
    parameters are ignored.
    """
    path = Path(path)
    manifest = _read_manifest(path)
    arrays = _read_params(path, manifest)
    for name, t in model.store.items():
        if name in arrays:
            if arrays[name].shape != t.data.shape:
                raise CheckpointError(
                    f"shape of {name!r} is {arrays[name].shape}, expected {t.data.shape}"
                )
            t.data = arrays[name]
        elif any(marker in name for marker in _OPTIONAL_PARAM_MARKERS):
            t.data = np.zeros_like(t.data)
        else:
            raise CheckpointError(f"checkpoint lacks parameter {name!r}")
