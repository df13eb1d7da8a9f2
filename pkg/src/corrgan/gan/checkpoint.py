"""Checkpoint files: text header, then layer-named binary blocks.

Layout:

    corrgan-gan-checkpoint v1
    variant = dense
    n = 3
    ... (architecture fields, step)
    end-header
    block gen/00-dense.W 256
    <256 little-endian float64 values><newline>
    block ...

float64 -> bytes -> float64 is the identity, so round-trips are bit-exact.
"""

from __future__ import annotations

import numpy as np

from ..core import StructuralError
from .layers import ParamStore
from .model import (
    ArchitectureDescriptor,
    GanModel,
    build_discriminator,
    build_generator,
)

MAGIC = "corrgan-gan-checkpoint v1"

_ARCH_FIELDS = (
    "variant",
    "n",
    "latent_dim",
    "gen_widths",
    "disc_widths",
    "gen_channels",
    "disc_channels",
    "gen_activations",
    "disc_activations",
    "batch_norm",
)


def _encode_field(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _arch_to_lines(arch: ArchitectureDescriptor) -> list:
    return [f"{name} = {_encode_field(getattr(arch, name))}" for name in _ARCH_FIELDS]


def _arch_from_header(header: dict) -> ArchitectureDescriptor:
    def ints(key):
        raw = header.get(key, "")
        return tuple(int(v) for v in raw.split(",") if v != "")

    def strs(key):
        raw = header.get(key, "")
        return tuple(v for v in raw.split(",") if v != "")

    try:
        return ArchitectureDescriptor(
            variant=header["variant"],
            n=int(header["n"]),
            latent_dim=int(header["latent_dim"]),
            gen_widths=ints("gen_widths"),
            disc_widths=ints("disc_widths"),
            gen_channels=ints("gen_channels"),
            disc_channels=ints("disc_channels"),
            gen_activations=strs("gen_activations"),
            disc_activations=strs("disc_activations"),
            batch_norm=header.get("batch_norm", "true") == "true",
        )
    except KeyError as exc:
        raise StructuralError(f"checkpoint header missing field {exc}") from exc


def _stores(model: GanModel):
    return (
        ("gen", model.gen_params),
        ("disc", model.disc_params),
        ("gen-buffers", model.gen_buffers),
        ("disc-buffers", model.disc_buffers),
    )


def save_checkpoint(path, model: GanModel) -> None:
    with open(path, "wb") as fh:
        header = [MAGIC, *_arch_to_lines(model.arch), f"step = {model.step}", "end-header"]
        fh.write(("\n".join(header) + "\n").encode())
        for prefix, store in _stores(model):
            for name, _ in store.shapes:
                arr = store.views[name]
                fh.write(f"block {prefix}/{name} {arr.size}\n".encode())
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
                fh.write(b"\n")


def load_checkpoint(path) -> GanModel:
    with open(path, "rb") as fh:
        first = fh.readline().decode().rstrip("\n")
        if first != MAGIC:
            raise StructuralError(f"{path}: not a checkpoint (magic {first!r})")
        header: dict = {}
        while True:
            line = fh.readline().decode().rstrip("\n")
            if line == "end-header":
                break
            if not line:
                raise StructuralError(f"{path}: truncated header")
            key, sep, value = line.partition("=")
            if not sep:
                raise StructuralError(f"{path}: bad header line {line!r}")
            header[key.strip()] = value.strip()
        arch = _arch_from_header(header)
        gen, disc = build_generator(arch), build_discriminator(arch)
        model = GanModel(
            arch=arch,
            gen_params=ParamStore(gen.param_shapes()),
            disc_params=ParamStore(disc.param_shapes()),
            gen_buffers=ParamStore(gen.buffer_shapes()),
            disc_buffers=ParamStore(disc.buffer_shapes()),
            step=int(header.get("step", "0")),
        )
        stores = dict(_stores(model))
        seen = set()
        while True:
            line = fh.readline()
            if not line:
                break
            text = line.decode().rstrip("\n")
            if not text:
                continue
            parts = text.split()
            if len(parts) != 3 or parts[0] != "block":
                raise StructuralError(f"{path}: bad block line {text!r}")
            full_name, count = parts[1], int(parts[2])
            prefix, sep, name = full_name.partition("/")
            if not sep or prefix not in stores or name not in stores[prefix].views:
                raise StructuralError(f"{path}: unknown block {full_name!r}")
            view = stores[prefix].views[name]
            if view.size != count:
                raise StructuralError(
                    f"{path}: block {full_name} has {count} values, expected {view.size}"
                )
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise StructuralError(f"{path}: truncated block {full_name}")
            view[...] = np.frombuffer(raw, dtype="<f8").reshape(view.shape)
            fh.read(1)  # trailing newline
            seen.add(full_name)
        expected = {
            f"{prefix}/{name}"
            for prefix, store in _stores(model)
            for name, _ in store.shapes
        }
        missing = expected - seen
        if missing:
            raise StructuralError(f"{path}: missing blocks {sorted(missing)[:3]} ...")
    return model
