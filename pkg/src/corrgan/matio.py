"""File formats: corrmat-csv matrices and line-oriented key/value manifests.

corrmat-csv is headerless CSV, n rows of n decimal values written with 17
significant digits so float64 values round-trip exactly.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .core import StructuralError

MATRIX_FILE_PATTERN = "corr-{:06d}.csv"
MANIFEST_NAME = "manifest"


def write_corrmat_csv(path, values) -> None:
    arr = np.asarray(getattr(values, "values", values), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise StructuralError(f"corrmat-csv stores square matrices, got {arr.shape}")
    with open(path, "w") as fh:
        for row in arr:
            fh.write(",".join(format(x, ".17g") for x in row))
            fh.write("\n")


def read_corrmat_csv(path) -> np.ndarray:
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise StructuralError(f"cannot parse {path} as corrmat-csv: {exc}") from exc
    if arr.shape[0] != arr.shape[1]:
        raise StructuralError(
            f"{path}: corrmat-csv must be square, got shape {arr.shape}"
        )
    return arr


def write_manifest(path, entries) -> None:
    """Write `key = value` lines; list values repeat the key once per item."""
    with open(path, "w") as fh:
        for key, value in entries:
            if isinstance(value, (list, tuple)):
                for item in value:
                    fh.write(f"{key} = {item}\n")
            else:
                fh.write(f"{key} = {value}\n")


def read_manifest(path) -> dict:
    """Parse a manifest; repeated keys collect into a list."""
    out: dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise StructuralError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key in out:
                if not isinstance(out[key], list):
                    out[key] = [out[key]]
                out[key].append(value)
            else:
                out[key] = value
    return out


def matrix_files(directory) -> list:
    """Matrix files of a dataset directory, manifest order when available."""
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    if manifest.exists():
        entries = read_manifest(manifest)
        files = entries.get("file", [])
        if isinstance(files, str):
            files = [files]
        return [directory / name for name in files]
    return sorted(directory.glob("*.csv"))


def load_matrix_dir(directory) -> list:
    """All matrices of a directory as float arrays."""
    files = matrix_files(directory)
    if not files:
        raise StructuralError(f"no corrmat-csv files found under {directory}")
    return [read_corrmat_csv(f) for f in files]


def write_matrix_dir(directory, matrices, manifest_extra=()) -> list:
    """Write matrices as corr-NNNNNN.csv plus a manifest; returns file names."""
    directory = Path(directory)
    os.makedirs(directory, exist_ok=True)
    names = []
    for i, m in enumerate(matrices):
        name = MATRIX_FILE_PATTERN.format(i)
        write_corrmat_csv(directory / name, m)
        names.append(name)
    entries = list(manifest_extra) + [("matrix_count", len(names)), ("file", names)]
    write_manifest(directory / MANIFEST_NAME, entries)
    return names
