"""From-scratch GAN: layers, model assembly, training loop, checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    ArchitectureDescriptor,
    GanModel,
    conv_architecture,
    dense_architecture,
    discriminator_forward,
    generate,
    generator_forward,
    init_model,
)
from .training import (
    TrainConfig,
    TrainingDivergedError,
    TrainingLog,
    bce_with_logits,
    discriminator_loss_grads,
    generator_loss_grads,
    train,
)

__all__ = [
    "ArchitectureDescriptor",
    "GanModel",
    "TrainConfig",
    "TrainingDivergedError",
    "TrainingLog",
    "bce_with_logits",
    "conv_architecture",
    "dense_architecture",
    "discriminator_forward",
    "discriminator_loss_grads",
    "generate",
    "generator_forward",
    "generator_loss_grads",
    "init_model",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]
