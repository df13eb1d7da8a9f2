"""Generator/discriminator model assembly.

Two variants share one parameter layout: a dense reference network for small
matrices, and a DCGAN-style convolutional pair (strided convolutions in the
discriminator, transposed convolutions and batch-norm in the generator) for
n >= 32.  The generator ends in tanh and emits the full unconstrained n x n
grid: correlation values in [-1, 1] map onto the tanh range identically, so
the unit diagonal sits at the saturation boundary and trained samples show
diagonals near 0.998 plus slight asymmetry -- defects the repair stage owns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import RawMatrix, StructuralError
from ..rng import generator
from .layers import (
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    Dense,
    Flatten,
    ParamStore,
    Reshape,
    Sequential,
    Tanh,
    make_activation,
)

CONV_MIN_SIDE = 32


@dataclass(frozen=True)
class ArchitectureDescriptor:
    variant: str  # "dense" or "conv"
    n: int
    latent_dim: int = 32
    gen_widths: tuple = (64, 64)
    disc_widths: tuple = (64, 64)
    gen_channels: tuple = (64, 32)
    disc_channels: tuple = (32, 64)
    gen_activations: tuple = ()
    disc_activations: tuple = ()
    batch_norm: bool = True

    def __post_init__(self):
        if self.variant not in ("dense", "conv"):
            raise StructuralError(f"unknown variant {self.variant!r}")
        if self.n < 2:
            raise StructuralError(f"n must be >= 2, got {self.n}")
        if self.latent_dim < 1:
            raise StructuralError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.variant == "dense":
            if not self.gen_widths or not self.disc_widths:
                raise StructuralError("dense variant needs at least one hidden width")
            hidden_g, hidden_d = len(self.gen_widths), len(self.disc_widths)
        else:
            if self.n % 4 != 0:
                raise StructuralError(
                    f"conv variant requires n to be a multiple of 4, got {self.n}"
                )
            if self.n < CONV_MIN_SIDE:
                raise StructuralError(
                    f"conv variant is for n >= {CONV_MIN_SIDE}, got {self.n}; "
                    "use the dense variant"
                )
            if len(self.gen_channels) != 2 or len(self.disc_channels) != 2:
                raise StructuralError("conv variant uses a 2-stage channel plan")
            hidden_g, hidden_d = 2, 2
        gen_acts = self.gen_activations or ("leaky_relu:0.2",) * hidden_g
        disc_acts = self.disc_activations or ("leaky_relu:0.2",) * hidden_d
        if len(gen_acts) != hidden_g or len(disc_acts) != hidden_d:
            raise StructuralError(
                "activation spec length must match the hidden layer count"
            )
        for spec in (*gen_acts, *disc_acts):
            make_activation(spec)  # raises on unknown spec
        object.__setattr__(self, "gen_widths", tuple(int(w) for w in self.gen_widths))
        object.__setattr__(self, "disc_widths", tuple(int(w) for w in self.disc_widths))
        object.__setattr__(self, "gen_channels", tuple(int(c) for c in self.gen_channels))
        object.__setattr__(self, "disc_channels", tuple(int(c) for c in self.disc_channels))
        object.__setattr__(self, "gen_activations", tuple(gen_acts))
        object.__setattr__(self, "disc_activations", tuple(disc_acts))


def dense_architecture(n, latent_dim=32, gen_widths=(64, 64), disc_widths=(64, 64)):
    return ArchitectureDescriptor(
        variant="dense",
        n=n,
        latent_dim=latent_dim,
        gen_widths=tuple(gen_widths),
        disc_widths=tuple(disc_widths),
        batch_norm=False,
    )


def conv_architecture(n, latent_dim=32, gen_channels=(64, 32), disc_channels=(32, 64)):
    return ArchitectureDescriptor(
        variant="conv",
        n=n,
        latent_dim=latent_dim,
        gen_channels=tuple(gen_channels),
        disc_channels=tuple(disc_channels),
    )


def build_generator(arch: ArchitectureDescriptor) -> Sequential:
    acts = [make_activation(s) for s in arch.gen_activations]
    if arch.variant == "dense":
        layers = []
        width_in = arch.latent_dim
        for width, act in zip(arch.gen_widths, acts):
            layers += [Dense(width_in, width), act]
            width_in = width
        layers += [Dense(width_in, arch.n * arch.n), Tanh()]
        return Sequential(layers)
    c0, c1 = arch.gen_channels
    side = arch.n // 4
    layers = [Dense(arch.latent_dim, c0 * side * side), Reshape((c0, side, side))]
    if arch.batch_norm:
        layers.append(BatchNorm2d(c0))
    layers.append(acts[0])
    layers.append(ConvTranspose2d(c0, c1, k=4, stride=2, pad=1))
    if arch.batch_norm:
        layers.append(BatchNorm2d(c1))
    layers.append(acts[1])
    layers += [ConvTranspose2d(c1, 1, k=4, stride=2, pad=1), Tanh()]
    return Sequential(layers)


def build_discriminator(arch: ArchitectureDescriptor) -> Sequential:
    acts = [make_activation(s) for s in arch.disc_activations]
    if arch.variant == "dense":
        layers = []
        width_in = arch.n * arch.n
        for width, act in zip(arch.disc_widths, acts):
            layers += [Dense(width_in, width), act]
            width_in = width
        layers.append(Dense(width_in, 1))
        return Sequential(layers)
    d0, d1 = arch.disc_channels
    side = arch.n // 4
    return Sequential(
        [
            Conv2d(1, d0, k=4, stride=2, pad=1),
            acts[0],
            Conv2d(d0, d1, k=4, stride=2, pad=1),
            acts[1],
            Flatten(),
            Dense(d1 * side * side, 1),
        ]
    )


@dataclass
class GanModel:
    arch: ArchitectureDescriptor
    gen_params: ParamStore
    disc_params: ParamStore
    gen_buffers: ParamStore
    disc_buffers: ParamStore
    step: int = 0

    def parameter_count(self) -> int:
        return self.gen_params.size + self.disc_params.size


def init_model(arch: ArchitectureDescriptor, seed: int) -> GanModel:
    """Scaled-normal initialization (scale 1/sqrt(fan_in)), deterministic."""
    gen, disc = build_generator(arch), build_discriminator(arch)
    gen_params = ParamStore(gen.param_shapes())
    disc_params = ParamStore(disc.param_shapes())
    gen_buffers = ParamStore(gen.buffer_shapes())
    disc_buffers = ParamStore(disc.buffer_shapes())
    rng = generator(seed)
    gen.init(gen_params, gen_buffers, rng)
    disc.init(disc_params, disc_buffers, rng)
    return GanModel(arch, gen_params, disc_params, gen_buffers, disc_buffers)


def _to_grid(arch: ArchitectureDescriptor, batch: np.ndarray) -> np.ndarray:
    """(B, n, n) matrices to the discriminator's input layout."""
    if arch.variant == "dense":
        return batch.reshape(batch.shape[0], -1)
    return batch[:, None, :, :]


def _from_grid(arch: ArchitectureDescriptor, out: np.ndarray) -> np.ndarray:
    """Generator output layout back to (B, n, n)."""
    return out.reshape(out.shape[0], arch.n, arch.n)


def generate_batch(
    model: GanModel, z: np.ndarray, train: bool = False, update_stats: bool = False
):
    """Forward z (B, latent) through the generator; returns ((B,n,n), caches)."""
    if z.ndim != 2 or z.shape[1] != model.arch.latent_dim:
        raise StructuralError(
            f"latent batch must be (B, {model.arch.latent_dim}), got {z.shape}"
        )
    gen = build_generator(model.arch)
    out, caches = gen.forward(
        z, model.gen_params, model.gen_buffers, train=train, update_stats=update_stats
    )
    return _from_grid(model.arch, out), caches


def discriminate_batch(
    model: GanModel, batch: np.ndarray, train: bool = False, update_stats: bool = False
):
    """Forward (B, n, n) matrices through the discriminator; returns (logits, caches)."""
    if batch.ndim != 3 or batch.shape[1:] != (model.arch.n, model.arch.n):
        raise StructuralError(
            f"batch must be (B, {model.arch.n}, {model.arch.n}), got {batch.shape}"
        )
    disc = build_discriminator(model.arch)
    logits, caches = disc.forward(
        _to_grid(model.arch, batch),
        model.disc_params,
        model.disc_buffers,
        train=train,
        update_stats=update_stats,
    )
    return logits, caches


def generator_forward(model: GanModel, z) -> RawMatrix:
    """One latent vector -> one raw (unconstrained) n x n matrix."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] != model.arch.latent_dim:
        raise StructuralError(
            f"z must have length {model.arch.latent_dim}, got shape {z.shape}"
        )
    out, _ = generate_batch(model, z[None, :])
    return RawMatrix(out[0])


def discriminator_forward(model: GanModel, m) -> float:
    """Probability in (0,1) that the discriminator assigns to 'real'."""
    values = np.asarray(getattr(m, "values", m), dtype=np.float64)
    if values.shape != (model.arch.n, model.arch.n):
        raise StructuralError(
            f"matrix must be {model.arch.n} x {model.arch.n}, got {values.shape}"
        )
    logits, _ = discriminate_batch(model, values[None, :, :])
    logit = float(logits.ravel()[0])
    if logit >= 0:
        return 1.0 / (1.0 + float(np.exp(-logit)))
    e = float(np.exp(logit))
    return e / (1.0 + e)


def generate(model: GanModel, count: int, seed: int) -> list:
    """count independent samples; deterministic given (model, seed)."""
    if count < 0:
        raise StructuralError(f"count must be >= 0, got {count}")
    if count == 0:
        return []
    rng = generator(seed)
    z = rng.standard_normal((count, model.arch.latent_dim))
    out, _ = generate_batch(model, z)
    return [RawMatrix(out[i]) for i in range(count)]
