"""Alternating least-squares GAN training with auxiliary classification.

One step per batch: the discriminator is updated first on the concatenated
real and generated beats, then the generator is updated through the frozen
discriminator.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import losses
from .checkpoint import read_checkpoint, save_checkpoint
from .data import LABELS
from .models import N_CLASSES, DiscriminatorModel, GeneratorModel, make_noise, one_hot
from .nn import Adam

log = logging.getLogger(__name__)

LOG_FIELDS = [
    "epoch", "step", "d_adv_loss", "d_class_loss", "d_loss",
    "g_adv_loss", "g_rec_loss", "g_class_loss", "g_loss",
]
# g_rec_loss is always logged as the per-sample mean; g_loss is the optimized objective


class NonFiniteLossError(FloatingPointError):
    def __init__(self, term: str, value: float):
        super().__init__(f"non-finite loss term {term!r} ({value})")
        self.term = term


@dataclass
class TrainingConfig:
    lambda_rec: float = 1.0
    lambda_class: float = 10.0
    alpha: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 64
    epochs: int = 200
    seed: int = 0
    noise_sigma: float = 4.0
    precision: str = "float32"
    width: float = 1.0
    leaky_slope: float = 0.2
    fresh_noise: bool = True
    condition_discriminator: bool = False
    # "sum": squared L2 norm per beat in the objective; "mean": per-sample mean
    rec_reduction: str = "sum"
    snapshot_every: int = 1
    checkpoint_every: int = 1

    def __post_init__(self):
        if self.lambda_rec < 0 or self.lambda_class < 0:
            raise ValueError("loss weights must be non-negative")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 (batch normalization)")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"precision must be float32 or float64, not {self.precision!r}")
        if self.rec_reduction not in ("sum", "mean"):
            raise ValueError(f"rec_reduction must be 'sum' or 'mean', not {self.rec_reduction!r}")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")

    @property
    def dtype(self):
        return np.dtype(self.precision)

    def asdict(self) -> dict:
        return dataclasses.asdict(self)


def build_models(config: TrainingConfig) -> tuple[GeneratorModel, DiscriminatorModel]:
    g_seed, d_seed = np.random.SeedSequence(config.seed).generate_state(2)
    G = GeneratorModel(width=config.width, slope=config.leaky_slope, seed=int(g_seed))
    D = DiscriminatorModel(width=config.width, slope=config.leaky_slope, seed=int(d_seed),
                           condition_on_label=config.condition_discriminator)
    return G.astype(config.dtype), D.astype(config.dtype)


def _finite(record: dict) -> None:
    for k, v in record.items():
        if k.endswith("_loss") and not np.isfinite(v):
            raise NonFiniteLossError(k, v)


def train_step(x, y, G, D, opt_g: Adam, opt_d: Adam, config: TrainingConfig, z) -> dict:
    """One discriminator update followed by one generator update.

    ``x`` is ``[batch, 280]``, ``y`` one-hot ``[batch, 4]`` and ``z`` the
    smoothed noise for this batch. Returns the loss record.
    """
    n = len(x)
    if n < 2:
        raise ValueError("train_step needs a batch of at least 2")
    lam_c, lam_r = config.lambda_class, config.lambda_rec
    if config.rec_reduction == "sum":
        lam_r = lam_r * x.shape[1]
    fake = G.forward(x, y, z, training=True)
    both = np.concatenate([x, fake])
    yy = np.concatenate([y, y])
    d_label = yy if D.condition_on_label else None

    # discriminator: real -> 1, fake -> 0, classify both halves
    probs, real = D.forward(both, d_label, training=True)
    rec = {
        "d_adv_loss": losses.adversarial_loss_d(real[:n], real[n:]),
        "d_class_loss": losses.class_loss(probs[:n], y) + losses.class_loss(probs[n:], y),
    }
    rec["d_loss"] = rec["d_adv_loss"] + lam_c * rec["d_class_loss"]
    _finite(rec)
    g_real, g_fake = losses.adversarial_loss_d_grad(real[:n], real[n:])
    g_probs = lam_c * np.concatenate(
        [losses.class_loss_grad(probs[:n], y), losses.class_loss_grad(probs[n:], y)]
    )
    D.zero_grad()
    D.backward(g_probs, np.concatenate([g_real, g_fake]))
    opt_d.step(D.parameters())

    # generator through the frozen, just-updated discriminator
    D.set_stat_updates(False)
    try:
        probs, real = D.forward(both, d_label, training=True)
    finally:
        D.set_stat_updates(True)
    rec["g_adv_loss"] = losses.adversarial_loss_g(real[n:])
    rec["g_rec_loss"] = losses.reconstruction_loss(fake, x)
    rec["g_class_loss"] = losses.class_loss(probs[n:], y)
    rec["g_loss"] = rec["g_adv_loss"] + lam_r * rec["g_rec_loss"] + lam_c * rec["g_class_loss"]
    _finite(rec)
    g_probs = np.zeros_like(probs)
    g_probs[n:] = lam_c * losses.class_loss_grad(probs[n:], y)
    g_real = np.zeros_like(real)
    g_real[n:] = losses.adversarial_loss_g_grad(real[n:])
    D.zero_grad()
    grad_both = D.backward(g_probs, g_real)
    D.zero_grad()
    grad_fake = grad_both[n:] + lam_r * losses.reconstruction_loss_grad(fake, x)
    G.zero_grad()
    G.backward(grad_fake)
    opt_g.step(G.parameters())
    return rec


@dataclass
class Snapshot:
    epoch: int
    label: str
    real: np.ndarray
    generated: np.ndarray


class Trainer:
    """Owns the two models, their optimizers and the training RNG."""

    def __init__(self, config: TrainingConfig, G=None, D=None):
        self.config = config
        if G is None or D is None:
            G, D = build_models(config)
        self.G, self.D = G.astype(config.dtype), D.astype(config.dtype)
        self.opt_g = Adam(config.alpha, config.beta1, config.beta2, config.epsilon)
        self.opt_d = Adam(config.alpha, config.beta1, config.beta2, config.epsilon)
        self.rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
        self.epoch = 0
        self.step = 0
        self.log: list[dict] = []
        self.snapshots: list[Snapshot] = []

    # -- persistence -----------------------------------------------------
    def save(self, out_dir, prefix: str = "") -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        extra = {"epoch": self.epoch, "rng_state": self.rng.bit_generator.state}
        cfg = self.config.asdict()
        save_checkpoint(self.G, out_dir / f"{prefix}generator.ckpt", self.step, self.opt_g.state, extra, cfg)
        save_checkpoint(self.D, out_dir / f"{prefix}discriminator.ckpt", self.step, self.opt_d.state, extra, cfg)

    @classmethod
    def resume(cls, config: TrainingConfig, ckpt_dir, prefix: str = "") -> "Trainer":
        ckpt_dir = Path(ckpt_dir)
        g = read_checkpoint(ckpt_dir / f"{prefix}generator.ckpt", "generator")
        d = read_checkpoint(ckpt_dir / f"{prefix}discriminator.ckpt", "discriminator")
        trainer = cls(config, g.model, d.model)
        for opt, ck in ((trainer.opt_g, g), (trainer.opt_d, d)):
            if ck.optimizer is not None:
                opt.state = ck.optimizer
                for k in opt.state.m:
                    opt.state.m[k] = opt.state.m[k].astype(config.dtype)
                    opt.state.v[k] = opt.state.v[k].astype(config.dtype)
        trainer.step = g.step
        trainer.epoch = g.extra.get("epoch", 0)
        if "rng_state" in g.extra:
            trainer.rng.bit_generator.state = g.extra["rng_state"]
        return trainer

    # -- loop --------------------------------------------------------------
    def _snapshot(self, x, labels, noise_bank) -> list[Snapshot]:
        shots = []
        for c in range(N_CLASSES):
            idx = np.flatnonzero(labels == c)
            if idx.size == 0:
                continue
            i = idx[0]
            gen = self.G(x[i : i + 1], one_hot([c]), noise_bank[c : c + 1])[0]
            shots.append(Snapshot(self.epoch, LABELS[c], x[i].astype(float), gen.astype(float)))
        return shots

    def fit(self, x, labels, out_dir=None, keep_timing: bool = True) -> "Trainer":
        """Train until ``config.epochs`` epochs have run in total.

        ``x`` is ``[n, 280]`` in [0, 1] and ``labels`` integer classes. With
        ``out_dir`` set, snapshots and rolling checkpoints are written there.
        """
        cfg = self.config
        x = np.asarray(x, dtype=cfg.dtype)
        labels = np.asarray(labels, dtype=int)
        y_all = one_hot(labels).astype(cfg.dtype)
        n = len(x)
        snap_noise = make_noise(np.random.default_rng([cfg.seed, 1]), N_CLASSES, cfg.noise_sigma, x.shape[1])
        fixed_noise = None
        if not cfg.fresh_noise:
            fixed_noise = make_noise(np.random.default_rng([cfg.seed, 2]), n, cfg.noise_sigma, x.shape[1])
        out_dir = Path(out_dir) if out_dir is not None else None

        while self.epoch < cfg.epochs:
            self.epoch += 1
            order = self.rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                if len(idx) < 2:
                    continue
                if fixed_noise is None:
                    z = make_noise(self.rng, len(idx), cfg.noise_sigma, x.shape[1])
                else:
                    z = fixed_noise[idx]
                t0 = time.perf_counter()
                rec = train_step(x[idx], y_all[idx], self.G, self.D, self.opt_g, self.opt_d, cfg, z.astype(cfg.dtype))
                self.step += 1
                rec = {"epoch": self.epoch, "step": self.step, **rec}
                if keep_timing:
                    rec["seconds"] = time.perf_counter() - t0
                self.log.append(rec)
            last = self.log[-1] if self.log else {}
            log.info("epoch %d/%d step %d d_loss %.4f g_loss %.4f", self.epoch, cfg.epochs,
                     self.step, last.get("d_loss", float("nan")), last.get("g_loss", float("nan")))
            if cfg.snapshot_every and self.epoch % cfg.snapshot_every == 0:
                shots = self._snapshot(x, labels, snap_noise)
                self.snapshots.extend(shots)
                if out_dir is not None:
                    write_snapshots(shots, out_dir / "snapshots")
            if out_dir is not None and cfg.checkpoint_every and self.epoch % cfg.checkpoint_every == 0:
                self.save(out_dir / "checkpoints", "latest_")
        return self


def train(x, labels, config: TrainingConfig, out_dir=None, keep_timing: bool = True) -> Trainer:
    """Build fresh models and train them; returns the trainer (models, log, snapshots)."""
    return Trainer(config).fit(x, labels, out_dir, keep_timing)


def write_train_log(records: list[dict], path, include_timing: bool = True) -> None:
    fields = LOG_FIELDS + (["seconds"] if include_timing and records and "seconds" in records[0] else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for r in records:
            w.writerow([r[f] if f in ("epoch", "step") else repr(float(r[f])) for f in fields])


def read_train_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: int(v) if k in ("epoch", "step") else float(v) for k, v in r.items()} for r in rows]


def write_snapshots(shots: list[Snapshot], directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for s in shots:
        with open(directory / f"epoch_{s.epoch}_{s.label}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "class", "kind"] + [f"s{i}" for i in range(len(s.real))])
            w.writerow([s.epoch, s.label, "real"] + [f"{v:.8g}" for v in s.real])
            w.writerow([s.epoch, s.label, "generated"] + [f"{v:.8g}" for v in s.generated])


def read_snapshot(path) -> list[tuple[int, str, str, np.ndarray]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return [(int(r[0]), r[1], r[2], np.array(r[3:], dtype=float)) for r in rows]
