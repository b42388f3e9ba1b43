import logging

import numpy as np
import pytest

from hadce.channel import angular_basis, conjugate_recover
from hadce.measurement import conventional_config, effective_matrix
from hadce.neural import (
    ModelFormatError,
    TrainConfig,
    adam_init,
    adam_step,
    decoder_forward,
    decoder_macs,
    encoder_forward,
    estimate,
    export_measurement,
    init_model,
    load_model,
    loss_and_grads,
    measurement_matrix,
    model_from_dict,
    model_to_dict,
    mse_loss,
    predict,
    save_model,
    split_dataset,
    stack,
    train,
    unstack,
)
from hadce.neural.model import param_order

from conftest import crandn


def finite_difference(model, x_noisy, x, name, h=1e-6):
    p = model.params[name]
    g = np.zeros_like(p)
    it = np.nditer(p, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = p[i]
        p[i] = old + h
        lp, _ = loss_and_grads(model, x_noisy, x, update_running=False)
        p[i] = old - h
        lm, _ = loss_and_grads(model, x_noisy, x, update_running=False)
        p[i] = old
        g[i] = (lp - lm) / (2 * h)
    return g


def grad_errors(model, batch=4, seed=0):
    r = np.random.default_rng(seed)
    x = r.standard_normal((batch, 2 * model.n))
    x_noisy = x + 0.1 * r.standard_normal(x.shape)
    _, grads = loss_and_grads(model, x_noisy, x, update_running=False)
    errs = {}
    for name in param_order():
        num = finite_difference(model, x_noisy, x, name)
        # max-norm relative error per parameter group
        errs[name] = float(np.max(np.abs(grads[name] - num)) / np.max(np.abs(num)))
    return errs


class TestShapes:
    def test_widths(self):
        m = init_model(16, 4, 0, conventional_config(16, 4, 0.1))
        assert m.fc_widths() == [128, 64, 32]
        assert m.params["fc1.weight"].shape == (8, 128)
        assert m.b_weights.shape == (16, 16, 2)
        assert m.wrf_phases.shape == (4, 16)
        assert m.wbb_weights.shape == (4, 4, 2)

    def test_basis_weights(self):
        m = init_model(8, 4, 0, conventional_config(8, 4, 0.1))
        B = angular_basis(8).b
        np.testing.assert_array_equal(m.b_weights[..., 0] + 1j * m.b_weights[..., 1], B)

    def test_mismatched_encoder_init(self):
        with pytest.raises(ValueError):
            init_model(16, 4, 0, conventional_config(16, 8, 0.1))

    def test_xavier_variance(self):
        m = init_model(64, 16, 0, conventional_config(64, 16, 0.1))
        w = m.params["fc1.weight"]
        fan_in, fan_out = w.shape
        target = 2.0 / (fan_in + fan_out)
        assert abs(w.var() / target - 1) < 0.05
        assert np.all(m.params["fc1.bias"] == 0)

    def test_init_deterministic(self):
        cfg = conventional_config(8, 4, 0.1)
        a, b = init_model(8, 4, 5, cfg), init_model(8, 4, 5, cfg)
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])


class TestEncoder:
    def test_matches_effective_matrix(self, rng):
        cfg = conventional_config(16, 4, 0.1)
        m = init_model(16, 4, 0, cfg)
        x = crandn(rng, 5, 16)
        y = unstack(encoder_forward(m, stack(x)))
        phi = effective_matrix(cfg, angular_basis(16))
        np.testing.assert_allclose(y, x @ phi.T, atol=1e-10)

    def test_learned_matrix_round_trip(self, tiny_model, rng):
        exported = export_measurement(tiny_model, 0.01)
        phi = effective_matrix(exported, angular_basis(8))
        np.testing.assert_allclose(phi, measurement_matrix(tiny_model), atol=1e-12)
        assert np.allclose(np.abs(exported.w_rf.matrix), 1 / np.sqrt(8))

    def test_width_check(self, tiny_model):
        with pytest.raises(ValueError):
            encoder_forward(tiny_model, np.zeros((2, 10)))


class TestDecoder:
    def test_uninitialized(self, tiny_model):
        m = tiny_model.copy()
        del m.running["bn2.mean"]
        with pytest.raises(ValueError):
            decoder_forward(m, np.zeros((1, 8)))

    def test_bad_mode(self, tiny_model):
        with pytest.raises(ValueError):
            decoder_forward(tiny_model, np.zeros((1, 8)), mode="eval")

    def test_infer_deterministic(self, tiny_model, rng):
        y = rng.standard_normal((3, 8))
        np.testing.assert_array_equal(decoder_forward(tiny_model, y), decoder_forward(tiny_model, y))

    def test_running_stats_update(self, tiny_model, rng):
        m = tiny_model.copy()
        y = rng.standard_normal((64, 8)) * 3 + 1
        decoder_forward(m, y, mode="train")
        expected = 0.9 * tiny_model.running["bn1.mean"] + 0.1 * y.mean(0)
        np.testing.assert_allclose(m.running["bn1.mean"], expected)
        decoder_forward(m, y, mode="train", update_running=False)
        np.testing.assert_allclose(m.running["bn1.mean"], expected)


class TestGradients:
    def test_finite_difference(self, tiny_model):
        errs = grad_errors(tiny_model)
        assert set(errs) == set(param_order())
        bad = {k: v for k, v in errs.items() if v >= 1e-4}
        assert not bad, bad

    def test_frozen_encoder_has_no_gradient(self, tiny_model, rng):
        x = rng.standard_normal((4, 16))
        _, grads = loss_and_grads(tiny_model, x, x, train_encoder=False)
        assert "wrf_phases" not in grads and "wbb_weights" not in grads
        assert all(np.all(np.isfinite(g)) for g in grads.values())

    def test_loss_matches_mse(self, tiny_model, rng):
        x = rng.standard_normal((4, 16))
        m = tiny_model.copy()
        loss, _ = loss_and_grads(m, x, x, update_running=False)
        from hadce.neural import forward

        x_hat, _ = forward(m, x, "train", update_running=False)
        assert loss == pytest.approx(mse_loss(x_hat, x))


class TestAdam:
    def test_hand_traced(self):
        # t=1: m = 0.1 g, v = 0.001 g^2, m_hat = g, v_hat = g^2 -> step lr * g/(|g| + eps)
        p = {"w": np.array([1.0, -2.0])}
        g = {"w": np.array([0.5, -4.0])}
        state = adam_init()
        adam_step(p, g, state, lr=0.1)
        np.testing.assert_allclose(p["w"], [1.0 - 0.1 * 0.5 / (0.5 + 1e-8), -2.0 + 0.1 * 4 / (4 + 1e-8)])
        # t=2 with g2: m = 0.9*0.1 g + 0.1 g2, v = 0.999*0.001 g^2 + 0.001 g2^2
        g2 = {"w": np.array([1.0, 0.0])}
        before = p["w"].copy()
        adam_step(p, g2, state, lr=0.1)
        m = 0.09 * g["w"] + 0.1 * g2["w"]
        v = 0.999 * 0.001 * g["w"] ** 2 + 0.001 * g2["w"] ** 2
        m_hat, v_hat = m / (1 - 0.81), v / (1 - 0.999**2)
        np.testing.assert_allclose(p["w"], before - 0.1 * m_hat / (np.sqrt(v_hat) + 1e-8), rtol=1e-12)

    def test_skips_frozen(self):
        p = {"a": np.ones(2), "b": np.ones(2)}
        adam_step(p, {"a": np.ones(2)}, adam_init(), lr=0.1)
        np.testing.assert_array_equal(p["b"], 1.0)


class TestTraining:
    def dataset(self, n=256, N=8, seed=0):
        r = np.random.default_rng(seed)
        # low-rank angular data the decoder can learn
        basis = r.standard_normal((3, 2 * N))
        x = r.standard_normal((n, 3)) @ basis
        return x + 0.01 * r.standard_normal(x.shape), x

    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.lr0, cfg.batch, cfg.decay_factor, cfg.plateau_patience, cfg.stop_patience) == (
            1e-3, 128, 0.1, 5, 12,
        )

    def test_split(self):
        x = np.arange(100).reshape(50, 2).astype(float)
        (a, _), (b, _) = split_dataset((x, x))
        assert len(a) == 40 and len(b) == 10
        with pytest.raises(ValueError):
            split_dataset((x[:1], x[:1]))

    def test_loss_decreases_and_report(self):
        data = self.dataset()
        cfg = TrainConfig(max_epochs=15, batch=32, lr0=3e-3, dtype="float64")
        model, rep = train(data, cfg, conventional_config(8, 4, 0.01))
        assert rep.best_val_loss < 0.5 * rep.val_losses[0]
        assert rep.best_val_loss == min(rep.val_losses)
        assert len(rep.lrs) == rep.stopped_epoch

    def test_basis_frozen_and_phases_move(self):
        data = self.dataset()
        enc = conventional_config(8, 4, 0.01)
        model, _ = train(data, TrainConfig(max_epochs=3, batch=32, dtype="float64"), enc)
        B = angular_basis(8).b
        np.testing.assert_array_equal(model.b_weights[..., 0] + 1j * model.b_weights[..., 1], B)
        assert not np.allclose(model.wrf_phases, enc.w_rf.phases)

    def test_freeze_encoder(self):
        enc = conventional_config(8, 4, 0.01)
        model, _ = train(self.dataset(), TrainConfig(max_epochs=2, freeze_encoder=True, dtype="float64"), enc)
        np.testing.assert_array_equal(model.wrf_phases, enc.w_rf.phases)

    def test_deterministic(self):
        enc = conventional_config(8, 4, 0.01)
        cfg = TrainConfig(max_epochs=3, batch=32, dtype="float64")
        a, ra = train(self.dataset(), cfg, enc)
        b, rb = train(self.dataset(), cfg, enc)
        assert ra.val_losses == rb.val_losses
        np.testing.assert_array_equal(a.params["fc3.weight"], b.params["fc3.weight"])

    def test_plateau_schedule(self, monkeypatch):
        # scripted validation: improves for 2 epochs, then flat forever
        import hadce.neural.training as tr

        vals = iter([10.0, 5.0, 4.0] + [4.0] * 100)
        monkeypatch.setattr(tr, "evaluate_loss", lambda *a, **k: next(vals))
        enc = conventional_config(8, 4, 0.01)
        _, rep = train(self.dataset(), TrainConfig(lr0=1e-3, max_epochs=50, dtype="float64"), enc)
        assert rep.best_epoch == 2
        assert rep.stopped_epoch == 2 + 12
        # decay after 5 stagnant epochs (epochs 3..7), applied from epoch 8
        assert rep.lrs[:7] == [1e-3] * 7
        assert rep.lrs[7] == pytest.approx(1e-4)
        assert rep.lrs[12] == pytest.approx(1e-5)

    def test_progress_logging(self, caplog):
        enc = conventional_config(8, 4, 0.01)
        seen = []
        with caplog.at_level(logging.DEBUG, logger="hadce.neural.training"):
            train(self.dataset(), TrainConfig(max_epochs=2, dtype="float64"), enc,
                  progress=lambda *a: seen.append(a))
        assert len(seen) == 2
        assert "epoch 1" in caplog.text


class TestComplexity:
    @pytest.mark.parametrize("N,R", [(64, 16), (32, 8), (16, 4)])
    def test_macs(self, N, R):
        m = init_model(N, R, 0, conventional_config(N, R, 0.1))
        assert decoder_macs(m) == 16 * R * N + 40 * N * N


class TestPersistence:
    def test_round_trip(self, tiny_model, tmp_path, rng):
        path = tmp_path / "m.json"
        save_model(tiny_model, path, region_start_deg=10.0, region_end_deg=15.0, snr_train_db=20.0)
        loaded = load_model(path)
        x = rng.standard_normal((5, 16))
        assert predict(loaded, x).tobytes() == predict(tiny_model, x).tobytes()
        assert loaded.meta["region_start_deg"] == 10.0

    def test_rejects_version(self, tiny_model):
        doc = model_to_dict(tiny_model)
        doc["format_version"] = 99
        with pytest.raises(ModelFormatError):
            model_from_dict(doc)


class TestEstimate:
    def test_shapes(self, tiny_model, rng):
        y = crandn(rng, 4)
        x_hat, h_hat = estimate(tiny_model, y)
        assert x_hat.shape == (8,) and h_hat.shape == (8,)
        np.testing.assert_allclose(h_hat, angular_basis(8).b @ x_hat, atol=1e-12)

    def test_conjugate_path(self, tiny_model, rng):
        y = crandn(rng, 3, 4)
        x1, _ = estimate(tiny_model, y)
        x2, h2 = estimate(tiny_model, np.conj(y), conjugate_flag=True)
        np.testing.assert_allclose(x2, conjugate_recover(x1, angular_basis(8)), atol=1e-12)
        _, h1 = estimate(tiny_model, y)
        np.testing.assert_allclose(h2, np.conj(h1), atol=1e-12)

    def test_wrong_length(self, tiny_model):
        with pytest.raises(ValueError):
            estimate(tiny_model, np.zeros(5, complex))
