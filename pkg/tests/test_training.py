import json

import numpy as np
import pytest

from graph2text.autograd import ParamStore
from graph2text.errors import CheckpointError, UsageError
from graph2text.synth import build_toy_model, overfit_corpus
from graph2text.training import (
    AdamState,
    TrainConfig,
    adam_step,
    clip_gradients,
    global_grad_norm,
    init_model_from_checkpoint,
    load_checkpoint,
    lr_at,
    model_config_dict,
    save_checkpoint,
    train,
)


class TestLrSchedule:
    def setup_method(self):
        self.cfg = TrainConfig(learning_rate=1e-3, warmup_ratio=0.1)

    def test_step_zero_is_zero(self):
        assert lr_at(0, 100, self.cfg) == 0.0

    def test_warmup_end_is_peak(self):
        assert lr_at(10, 100, self.cfg) == pytest.approx(1e-3)

    def test_final_step_is_zero(self):
        assert lr_at(100, 100, self.cfg) == 0.0

    def test_linear_in_both_phases(self):
        assert lr_at(5, 100, self.cfg) == pytest.approx(5e-4)
        assert lr_at(55, 100, self.cfg) == pytest.approx(1e-3 * 45 / 90)

    def test_no_warmup_starts_at_peak(self):
        cfg = TrainConfig(learning_rate=1e-3, warmup_ratio=0.0)
        assert lr_at(0, 100, cfg) == pytest.approx(1e-3)


def reference_adam(params, grads_per_step, lr, betas=(0.9, 0.999), eps=1e-8):
    """Independent re-implementation of the published update equations."""
    beta1, beta2 = betas
    theta = [p.copy() for p in params]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    for t, grads in enumerate(grads_per_step, start=1):
        for k, g in enumerate(grads):
            m[k] = beta1 * m[k] + (1 - beta1) * g
            v[k] = beta2 * v[k] + (1 - beta2) * g * g
            m_hat = m[k] / (1 - beta1**t)
            v_hat = v[k] / (1 - beta2**t)
            theta[k] = theta[k] - lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta


class TestAdam:
    def test_zero_gradient_no_motion(self):
        store = ParamStore()
        p = store.add("p", np.array([1.0, 2.0]))
        store.zero_grads()
        state = AdamState(store)
        adam_step(store, state, 0.01, TrainConfig())
        assert np.array_equal(p.data, [1.0, 2.0])

    def test_first_step_magnitude_is_lr(self):
        store = ParamStore()
        p = store.add("p", np.array([0.0]))
        store.zero_grads()
        p.grad = np.array([1.0])
        adam_step(store, AdamState(store), 0.25, TrainConfig())
        # bias correction makes the first step exactly lr / (1 + eps')
        assert p.data[0] == pytest.approx(-0.25, rel=1e-6)

    def test_missing_gradient_rejected(self):
        store = ParamStore()
        store.add("p", np.array([0.0]))
        with pytest.raises(UsageError):
            adam_step(store, AdamState(store), 0.1, TrainConfig())

    def test_matches_reference_on_random_problem(self):
        rng = np.random.default_rng(0)
        initial = [rng.normal(size=10), rng.normal(size=(2, 5))]
        grad_seq = [[rng.normal(size=10), rng.normal(size=(2, 5))] for _ in range(7)]
        lr = 3e-3
        store = ParamStore()
        a = store.add("a", initial[0].copy())
        b = store.add("b", initial[1].copy())
        state = AdamState(store)
        cfg = TrainConfig(learning_rate=lr)
        for grads in grad_seq:
            a.grad, b.grad = grads[0].copy(), grads[1].copy()
            adam_step(store, state, lr, cfg)
        expected = reference_adam(initial, grad_seq, lr)
        assert np.abs(a.data - expected[0]).max() < 1e-12
        assert np.abs(b.data - expected[1]).max() < 1e-12


class TestClipping:
    def test_norm_unchanged_when_small(self):
        store = ParamStore()
        p = store.add("p", np.zeros(2))
        p.grad = np.array([0.3, 0.4])
        norm = clip_gradients(store, 1.0)
        assert norm == pytest.approx(0.5)
        assert np.allclose(p.grad, [0.3, 0.4])

    def test_scales_down_to_max_norm(self):
        store = ParamStore()
        p = store.add("p", np.zeros(2))
        q = store.add("q", np.zeros(1))
        p.grad = np.array([3.0, 0.0])
        q.grad = np.array([4.0])
        clip_gradients(store, 1.0)
        assert global_grad_norm(store) <= 1.0 + 1e-12
        assert p.grad[0] == pytest.approx(0.6)


class TestTrainLoop:
    def test_single_pair_single_step(self):
        corpus = overfit_corpus(1)
        model, _ = build_toy_model(corpus=corpus)
        cfg = TrainConfig(learning_rate=1e-3, batch_size=1, epochs=1, task="finetune")
        records = train(corpus, model, cfg)
        assert len(records) == 1
        assert set(records[0]) == {"step", "lr", "l_text", "l_graph", "l_ot", "total"}

    def test_identical_seeds_identical_logs(self, tmp_path):
        corpus = overfit_corpus(6)
        logs = []
        for run in range(2):
            model, _ = build_toy_model(corpus=corpus)
            cfg = TrainConfig(
                learning_rate=1e-3, batch_size=3, epochs=2, seed=99, task="pretrain",
            )
            records = train(corpus, model, cfg, tmp_path / f"run{run}")
            logs.append(records)
        assert logs[0] == logs[1]
        a = (tmp_path / "run0" / "log.jsonl").read_bytes()
        b = (tmp_path / "run1" / "log.jsonl").read_bytes()
        assert a == b

    def test_loss_decreases_over_windows(self):
        corpus = overfit_corpus(8)
        model, _ = build_toy_model(corpus=corpus)
        cfg = TrainConfig(
            learning_rate=3e-3, warmup_ratio=0.0, batch_size=8, epochs=200,
            seed=3, task="finetune",
        )
        records = train(corpus, model, cfg)
        losses = [r["total"] for r in records]
        windows = [np.mean(losses[i : i + 100]) for i in range(0, 200, 100)]
        assert windows[1] <= windows[0]

    def test_pretrain_logs_all_components(self):
        corpus = overfit_corpus(2)
        model, _ = build_toy_model(corpus=corpus)
        cfg = TrainConfig(learning_rate=1e-3, batch_size=2, epochs=1, task="pretrain")
        records = train(corpus, model, cfg)
        rec = records[0]
        assert rec["l_text"] > 0 and rec["l_graph"] >= 0 and rec["l_ot"] > 0
        expected = rec["l_text"] + rec["l_graph"] + rec["l_ot"]
        assert rec["total"] == pytest.approx(expected, rel=1e-9)


class TestCheckpoint:
    def _trained_model(self):
        corpus = overfit_corpus(3)
        model, _ = build_toy_model(corpus=corpus)
        cfg = TrainConfig(learning_rate=1e-3, batch_size=3, epochs=1, task="finetune")
        train(corpus, model, cfg)
        return model, corpus

    def test_roundtrip_bitwise(self, tmp_path):
        model, corpus = self._trained_model()
        save_checkpoint(model, tmp_path / "ckpt")
        loaded = load_checkpoint(tmp_path / "ckpt")
        for name, t in model.store.items():
            assert np.array_equal(loaded.store[name].data, t.data)
        assert loaded.vocab.id_to_token == model.vocab.id_to_token
        assert model_config_dict(loaded) == model_config_dict(model)

    def test_roundtrip_forward_identical(self, tmp_path):
        from graph2text.objectives import loss_finetune

        model, corpus = self._trained_model()
        save_checkpoint(model, tmp_path / "ckpt")
        loaded = load_checkpoint(tmp_path / "ckpt")
        assert loss_finetune(loaded, corpus[0]).item() == loss_finetune(model, corpus[0]).item()

    def test_truncated_params_rejected(self, tmp_path):
        model, _ = self._trained_model()
        path = save_checkpoint(model, tmp_path / "ckpt")
        raw = (path / "params.bin").read_bytes()
        (path / "params.bin").write_bytes(raw[: len(raw) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_manifest_shape_mismatch_rejected(self, tmp_path):
        model, _ = self._trained_model()
        path = save_checkpoint(model, tmp_path / "ckpt")
        manifest = json.loads((path / "manifest.json").read_text())
        manifest["params"][0]["shape"] = [2, 2]
        (path / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_missing_manifest_rejected(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path)

    def test_seq_checkpoint_into_joint_model_zero_structure(self, tmp_path):
        from graph2text.autograd import no_grad
        from graph2text.data import linearize
        from graph2text.encoder import encode

        corpus = overfit_corpus(3)
        seq_model, _ = build_toy_model(corpus=corpus, variant="seq")
        path = save_checkpoint(seq_model, tmp_path / "seq_ckpt")

        joint_model, _ = build_toy_model(corpus=corpus, variant="joint")
        init_model_from_checkpoint(joint_model, path)
        for layer in range(2):
            for name in ("wqs", "wks", "wvs", "wkr", "wvr"):
                assert np.array_equal(
                    joint_model.store[f"enc.{layer}.agg.{name}"].data, np.zeros((16, 16))
                )
        inp_joint = joint_model.encoder_input(linearize(corpus[0].graph))
        inp_seq = seq_model.encoder_input(linearize(corpus[0].graph))
        with no_grad():
            h_joint = encode(inp_joint, joint_model.encoder_config, joint_model.store)
            h_seq = encode(inp_seq, seq_model.encoder_config, seq_model.store)
        assert np.array_equal(h_joint.data, h_seq.data)

    def test_incompatible_shapes_rejected(self, tmp_path):
        corpus = overfit_corpus(3)
        model, _ = build_toy_model(corpus=corpus)
        path = save_checkpoint(model, tmp_path / "ckpt")
        bigger, _ = build_toy_model(corpus=corpus, d_model=32, d_ff=16)
        with pytest.raises(CheckpointError):
            init_model_from_checkpoint(bigger, path)
