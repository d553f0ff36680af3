import math

import numpy as np
import pytest

from ecgcgan import losses
from ecgcgan.data import as_arrays
from ecgcgan.models import GeneratorModel, make_noise, one_hot
from ecgcgan.nn import Adam
from ecgcgan.synthetic import toy_beats
from ecgcgan.training import (
    NonFiniteLossError,
    Trainer,
    TrainingConfig,
    build_models,
    read_snapshot,
    read_train_log,
    train,
    train_step,
    write_train_log,
)


def loop_adv_d(r, f):
    return sum((v - 1) ** 2 for v in r) / len(r) + sum(v * v for v in f) / len(f)


def loop_adv_g(f):
    return sum((v - 1) ** 2 for v in f) / len(f)


def loop_ce(p, y):
    total = 0.0
    for row_p, row_y in zip(p, y):
        total -= sum(yi * math.log(max(pi, 1e-12)) for pi, yi in zip(row_p, row_y))
    return total / len(p)


def loop_rec(g, x):
    return sum(sum((a - b) ** 2 for a, b in zip(gr, xr)) / len(xr) for gr, xr in zip(g, x)) / len(g)


def numeric_grad(f, arr, h=1e-6):
    g = np.zeros_like(arr)
    for i in np.ndindex(arr.shape):
        orig = arr[i]
        arr[i] = orig + h
        fp = f()
        arr[i] = orig - h
        fm = f()
        arr[i] = orig
        g[i] = (fp - fm) / (2 * h)
    return g


class TestLossValues:
    def test_adversarial_d(self):
        assert losses.adversarial_loss_d([1.0], [0.0]) == 0.0
        assert losses.adversarial_loss_d([0.5], [0.5]) == pytest.approx(0.5)

    def test_adversarial_g(self):
        assert losses.adversarial_loss_g([1.0]) == 0.0
        assert losses.adversarial_loss_g([0.0]) == 1.0

    def test_class_loss(self):
        y = one_hot([0, 2, 3])
        assert losses.class_loss(y, y) <= 1e-11
        assert losses.class_loss(np.full((3, 4), 0.25), y) == pytest.approx(math.log(4), abs=1e-12)

    def test_reconstruction(self):
        x = np.random.default_rng(0).random((3, 280))
        assert losses.reconstruction_loss(x, x) == 0.0
        assert losses.reconstruction_loss(x + 0.1, x) == pytest.approx(0.01, abs=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_loop_oracles(self, seed):
        r = np.random.default_rng(seed)
        n = int(r.integers(1, 9))
        dr, df = r.random(n), r.random(n)
        logits = r.normal(size=(n, 4))
        p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        y = one_hot(r.integers(0, 4, n))
        g, x = r.random((n, 17)), r.random((n, 17))
        assert abs(losses.adversarial_loss_d(dr, df) - loop_adv_d(dr, df)) <= 1e-10
        assert abs(losses.adversarial_loss_g(df) - loop_adv_g(df)) <= 1e-10
        assert abs(losses.class_loss(p, y) - loop_ce(p, y)) <= 1e-10
        assert abs(losses.reconstruction_loss(g, x) - loop_rec(g, x)) <= 1e-10


class TestLossGradients:
    def test_adversarial(self):
        r = np.random.default_rng(1)
        dr, df = r.random(5), r.random(5)
        gr, gf = losses.adversarial_loss_d_grad(dr, df)
        np.testing.assert_allclose(gr, numeric_grad(lambda: losses.adversarial_loss_d(dr, df), dr), atol=1e-8)
        np.testing.assert_allclose(gf, numeric_grad(lambda: losses.adversarial_loss_d(dr, df), df), atol=1e-8)
        np.testing.assert_allclose(
            losses.adversarial_loss_g_grad(df), numeric_grad(lambda: losses.adversarial_loss_g(df), df), atol=1e-8
        )

    def test_class_and_reconstruction(self):
        r = np.random.default_rng(2)
        p = r.random((3, 4)) + 0.1
        y = one_hot([1, 0, 3])
        np.testing.assert_allclose(
            losses.class_loss_grad(p, y), numeric_grad(lambda: losses.class_loss(p, y), p), atol=1e-6
        )
        g, x = r.random((3, 10)), r.random((3, 10))
        np.testing.assert_allclose(
            losses.reconstruction_loss_grad(g, x), numeric_grad(lambda: losses.reconstruction_loss(g, x), g), atol=1e-8
        )


def small_config(**kw):
    base = dict(width=0.125, batch_size=8, epochs=1, precision="float64", seed=5)
    base.update(kw)
    return TrainingConfig(**base)


@pytest.fixture(scope="module")
def toy():
    x, labels = as_arrays(toy_beats(64, seed=3))
    return x, labels


def _one_step(cfg, x, labels):
    G, D = build_models(cfg)
    opt_g, opt_d = Adam(cfg.alpha, cfg.beta1, cfg.beta2), Adam(cfg.alpha, cfg.beta1, cfg.beta2)
    z = make_noise(np.random.default_rng(0), len(x))
    rec = train_step(x, one_hot(labels), G, D, opt_g, opt_d, cfg, z)
    return rec, G, D


class TestTrainStep:
    def test_config_defaults(self):
        cfg = TrainingConfig()
        assert (cfg.lambda_rec, cfg.lambda_class) == (1.0, 10.0)
        assert (cfg.alpha, cfg.beta1, cfg.beta2) == (2e-4, 0.5, 0.999)
        assert (cfg.batch_size, cfg.epochs, cfg.noise_sigma) == (64, 200, 4.0)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainingConfig(batch_size=1)
        with pytest.raises(ValueError):
            TrainingConfig(lambda_rec=-1)
        with pytest.raises(ValueError):
            TrainingConfig(rec_reduction="max")

    def test_gradient_isolation(self, toy):
        x, labels = toy[0][:8], toy[1][:8]
        cfg = small_config()
        G, D = build_models(cfg)
        opt_g, opt_d = Adam(), Adam()
        g_before = {k: p.data.copy() for k, p in G.parameters().items()}
        seen = {}
        orig_d_step = opt_d.step

        def d_step(params):
            # the discriminator update must not have moved the generator
            seen["g_untouched"] = all(np.array_equal(g_before[k], p.data) for k, p in G.parameters().items())
            orig_d_step(params)
            seen["d_after"] = {k: p.data.copy() for k, p in D.parameters().items()}

        opt_d.step = d_step
        train_step(x, one_hot(labels), G, D, opt_g, opt_d, cfg, make_noise(0, len(x)))
        assert seen["g_untouched"]
        for k, p in D.parameters().items():
            assert np.array_equal(seen["d_after"][k], p.data), k
        assert any(not np.array_equal(g_before[k], p.data) for k, p in G.parameters().items())

    def test_step_reproducible(self, toy):
        x, labels = toy[0][:8], toy[1][:8]
        cfg = small_config()
        r1, G1, D1 = _one_step(cfg, x, labels)
        r2, G2, D2 = _one_step(cfg, x, labels)
        assert r1 == r2
        for k, p in G1.parameters().items():
            assert p.data.tobytes() == G2.parameters()[k].data.tobytes()
        for k, p in D1.parameters().items():
            assert p.data.tobytes() == D2.parameters()[k].data.tobytes()

    def test_losses_recorded_and_combined(self, toy):
        cfg = small_config()
        rec, _, _ = _one_step(cfg, toy[0][:8], toy[1][:8])
        assert all(np.isfinite(v) for v in rec.values())
        assert rec["d_loss"] == pytest.approx(rec["d_adv_loss"] + 10 * rec["d_class_loss"])
        # the objective uses the squared norm per beat, the log keeps the per-sample mean
        assert rec["g_loss"] == pytest.approx(rec["g_adv_loss"] + 280 * rec["g_rec_loss"] + 10 * rec["g_class_loss"])
        mean_rec, _, _ = _one_step(small_config(rec_reduction="mean"), toy[0][:8], toy[1][:8])
        assert mean_rec["g_loss"] == pytest.approx(
            mean_rec["g_adv_loss"] + mean_rec["g_rec_loss"] + 10 * mean_rec["g_class_loss"]
        )

    def test_non_finite_loss_named(self, toy):
        x = toy[0][:8].copy()
        x[0, 0] = np.nan
        with pytest.raises(NonFiniteLossError, match="d_adv_loss"):
            _one_step(small_config(), x, toy[1][:8])

    def test_reconstruction_only_limit(self):
        """With only the reconstruction term the generator memorizes one beat, monotonically."""
        beat = toy_beats(1, seed=8)[0].samples
        x = np.tile(beat, (2, 1))
        y = one_hot([0, 0])
        G = GeneratorModel(seed=1).astype(np.float64)
        opt = Adam(2e-4, 0.5, 0.999)
        rng = np.random.default_rng(0)
        history = []
        for _ in range(500):
            out = G.forward(x, y, make_noise(rng, 2), training=True)
            history.append(losses.reconstruction_loss(out, x))
            G.zero_grad()
            G.backward(losses.reconstruction_loss_grad(out, x))
            opt.step(G.parameters())
        assert min(history) < 1e-3
        block_means = np.convolve(history, np.ones(10) / 10, mode="valid")[::10]
        assert np.all(np.diff(block_means) <= 0)


class TestTrainLoop:
    def test_zero_epochs(self, toy):
        cfg = small_config(epochs=0)
        G0, D0 = build_models(cfg)
        tr = train(*toy, cfg)
        assert tr.log == [] and tr.step == 0
        for k, p in tr.G.parameters().items():
            assert np.array_equal(p.data, G0.parameters()[k].data)

    def test_log_ordering_and_determinism(self, toy):
        cfg = small_config(epochs=2, batch_size=16)
        a = train(*toy, cfg, keep_timing=False)
        b = train(*toy, cfg, keep_timing=False)
        assert a.log == b.log
        keys = [(r["epoch"], r["step"]) for r in a.log]
        assert keys == sorted(keys) and len(keys) == 8

    def test_resume_matches_uninterrupted(self, toy, tmp_path):
        full = train(*toy, small_config(epochs=3, batch_size=16), keep_timing=False)
        first = Trainer(small_config(epochs=1, batch_size=16)).fit(*toy, out_dir=tmp_path, keep_timing=False)
        resumed = Trainer.resume(small_config(epochs=3, batch_size=16), tmp_path / "checkpoints", "latest_")
        assert resumed.step == first.step and resumed.epoch == 1
        resumed.fit(*toy, keep_timing=False)
        assert first.log + resumed.log == full.log
        for k, p in full.G.parameters().items():
            assert np.array_equal(p.data, resumed.G.parameters()[k].data)

    def test_snapshots_each_epoch(self, tmp_path):
        x, labels = as_arrays(toy_beats(8, seed=1))
        cfg = TrainingConfig(width=0.125, batch_size=8, epochs=200, snapshot_every=1, checkpoint_every=0, seed=1)
        Trainer(cfg).fit(x, labels, out_dir=tmp_path, keep_timing=False)
        for epoch in (1, 100, 200):
            for c in "NSVF":
                rows = read_snapshot(tmp_path / "snapshots" / f"epoch_{epoch}_{c}.csv")
                assert [r[2] for r in rows] == ["real", "generated"]
                assert all(len(r[3]) == 280 for r in rows)

    def test_train_log_csv_round_trip(self, toy, tmp_path):
        tr = train(*toy, small_config(batch_size=16))
        write_train_log(tr.log, tmp_path / "log.csv", include_timing=False)
        back = read_train_log(tmp_path / "log.csv")
        assert [r["g_loss"] for r in back] == [r["g_loss"] for r in tr.log]
