"""Adversarial training loop: BCE in logit space, Adam, full determinism.

The discriminator trains on real batches (label 1, optionally smoothed to
0.9) and generated batches (label 0); the generator trains on the
non-saturating objective (push D's logit on fakes toward 'real').  Losses
are computed from logits directly -- never log of a raw sigmoid -- so they
stay finite for any finite parameters.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import CorrganError, StructuralError
from ..rng import MAX_SEED, derive_seed, generator
from .layers import ParamStore, _sigmoid
from .model import (
    ArchitectureDescriptor,
    GanModel,
    build_discriminator,
    build_generator,
    discriminate_batch,
    generate_batch,
    init_model,
)

logger = logging.getLogger(__name__)


class TrainingDivergedError(CorrganError):
    """Non-finite loss encountered; carries the step it happened at."""

    def __init__(self, message: str, step: int, checkpoint_path=None):
        super().__init__(message)
        self.step = step
        self.checkpoint_path = checkpoint_path


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr_gen: float = 2e-4
    lr_disc: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    label_smoothing: bool = True  # real label 0.9 on the discriminator step
    checkpoint_every: int = 0  # epochs between checkpoints; 0 disables
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise StructuralError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise StructuralError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.lr_gen <= 0 or self.lr_disc <= 0:
            raise StructuralError("learning rates must be > 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise StructuralError("moment coefficients must lie in [0, 1)")
        if not 0 <= self.seed <= MAX_SEED:
            raise StructuralError("seed must be a 64-bit unsigned integer")
        if self.checkpoint_every < 0:
            raise StructuralError("checkpoint_every must be >= 0")


@dataclass
class TrainingLog:
    disc_loss: list = field(default_factory=list)
    gen_loss: list = field(default_factory=list)
    d_real: list = field(default_factory=list)
    d_fake: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.disc_loss)


def bce_with_logits(logits: np.ndarray, target: float):
    """Mean binary cross-entropy from logits; returns (loss, dloss/dlogits)."""
    l = logits.ravel()
    loss = float(
        np.mean(np.maximum(l, 0.0) - l * target + np.log1p(np.exp(-np.abs(l))))
    )
    dl = (_sigmoid(l) - target) / l.size
    return loss, dl.reshape(logits.shape)


class Adam:
    def __init__(self, size: int, lr: float, beta1: float, beta2: float, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params_flat: np.ndarray, grads_flat: np.ndarray) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads_flat
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grads_flat**2
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        params_flat -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def discriminator_loss_grads(
    model: GanModel,
    real: np.ndarray,
    z: np.ndarray,
    real_label: float = 1.0,
    update_stats: bool = True,
):
    """BCE on a real batch (label real_label) plus a fake batch (label 0).

    Returns (loss, grads ParamStore for the discriminator, metrics dict).
    """
    disc = build_discriminator(model.arch)
    grads = ParamStore(disc.param_shapes())
    fake, _ = generate_batch(model, z, train=True, update_stats=update_stats)
    logits_r, cache_r = discriminate_batch(model, real, train=True)
    logits_f, cache_f = discriminate_batch(model, fake, train=True)
    loss_r, dl_r = bce_with_logits(logits_r, real_label)
    loss_f, dl_f = bce_with_logits(logits_f, 0.0)
    disc.backward(dl_r, cache_r, model.disc_params, grads)
    disc.backward(dl_f, cache_f, model.disc_params, grads)
    metrics = {
        "d_real": float(np.mean(_sigmoid(logits_r))),
        "d_fake": float(np.mean(_sigmoid(logits_f))),
    }
    return loss_r + loss_f, grads, metrics


def generator_loss_grads(model: GanModel, z: np.ndarray, update_stats: bool = True):
    """Non-saturating loss: BCE of D(G(z)) against label 1.

    Returns (loss, grads ParamStore for the generator).
    """
    gen = build_generator(model.arch)
    disc = build_discriminator(model.arch)
    grads = ParamStore(gen.param_shapes())
    fake, gen_caches = generate_batch(model, z, train=True, update_stats=update_stats)
    logits, disc_caches = discriminate_batch(model, fake, train=True)
    loss, dl = bce_with_logits(logits, 1.0)
    dfake = disc.backward(dl, disc_caches, model.disc_params, None)
    if model.arch.variant == "dense":
        dflat = dfake.reshape(dfake.shape[0], -1)
    else:
        dflat = dfake  # (B, 1, n, n) matches the generator's grid output
    gen.backward(dflat, gen_caches, model.gen_params, grads)
    return loss, grads


def train(dataset, arch: ArchitectureDescriptor, cfg: TrainConfig):
    """Alternating Adam updates over shuffled minibatches.

    dataset: sequence of CorrelationMatrix (canonicalized) or (n, n) arrays.
    Returns (model, TrainingLog).  Deterministic given (dataset, arch, cfg).
    """
    data = np.stack(
        [np.asarray(getattr(m, "values", m), dtype=np.float64) for m in dataset]
    )
    if data.ndim != 3 or data.shape[1:] != (arch.n, arch.n):
        raise StructuralError(
            f"dataset matrices must be {arch.n} x {arch.n}, got {data.shape[1:]}"
        )
    if data.shape[0] < cfg.batch_size:
        raise StructuralError(
            f"dataset has {data.shape[0]} matrices; need >= batch_size {cfg.batch_size}"
        )
    model = init_model(arch, derive_seed(cfg.seed, "init"))
    rng = generator(derive_seed(cfg.seed, "batches"))
    opt_d = Adam(model.disc_params.size, cfg.lr_disc, cfg.beta1, cfg.beta2)
    opt_g = Adam(model.gen_params.size, cfg.lr_gen, cfg.beta1, cfg.beta2)
    log = TrainingLog()
    real_label = 0.9 if cfg.label_smoothing else 1.0
    steps_per_epoch = data.shape[0] // cfg.batch_size
    for epoch in range(cfg.epochs):
        t0 = time.monotonic()
        order = rng.permutation(data.shape[0])
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            real = data[idx]
            z = rng.standard_normal((cfg.batch_size, arch.latent_dim))
            d_loss, d_grads, metrics = discriminator_loss_grads(
                model, real, z, real_label=real_label
            )
            opt_d.step(model.disc_params.flat, d_grads.flat)
            z = rng.standard_normal((cfg.batch_size, arch.latent_dim))
            g_loss, g_grads = generator_loss_grads(model, z)
            opt_g.step(model.gen_params.flat, g_grads.flat)
            model.step += 1
            log.disc_loss.append(d_loss)
            log.gen_loss.append(g_loss)
            log.d_real.append(metrics["d_real"])
            log.d_fake.append(metrics["d_fake"])
            if not (np.isfinite(d_loss) and np.isfinite(g_loss)):
                path = _diagnostic_checkpoint(model, cfg)
                raise TrainingDivergedError(
                    f"non-finite loss at step {model.step} "
                    f"(disc {d_loss}, gen {g_loss})",
                    step=model.step,
                    checkpoint_path=path,
                )
        log.epoch_seconds.append(time.monotonic() - t0)
        logger.info(
            "epoch %d/%d: disc %.4f gen %.4f D(real) %.3f D(fake) %.3f",
            epoch + 1,
            cfg.epochs,
            log.disc_loss[-1],
            log.gen_loss[-1],
            log.d_real[-1],
            log.d_fake[-1],
        )
        if (
            cfg.checkpoint_every
            and cfg.checkpoint_dir
            and (epoch + 1) % cfg.checkpoint_every == 0
        ):
            from .checkpoint import save_checkpoint

            save_checkpoint(
                Path(cfg.checkpoint_dir) / f"step-{model.step:08d}.ckpt", model
            )
    return model, log


def _diagnostic_checkpoint(model: GanModel, cfg: TrainConfig):
    if not cfg.checkpoint_dir:
        return None
    from .checkpoint import save_checkpoint

    path = Path(cfg.checkpoint_dir) / f"diverged-step-{model.step:08d}.ckpt"
    try:
        save_checkpoint(path, model)
    except OSError:
        return None
    return path
