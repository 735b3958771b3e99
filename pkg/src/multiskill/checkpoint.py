"""Flat-file checkpoint format.

A checkpoint directory holds one text manifest (``manifest.txt``) mapping
each array name to its dtype and shape, plus one raw little-endian binary
file per named array. Float arrays are 64-bit reals, integer arrays 64-bit
signed. Round-trips are bit-exact by construction.

Names may contain ``/`` which maps to subdirectories on disk.
"""

from __future__ import annotations

import os
import re

import numpy as np

FORMAT_TAG = "multiskill-checkpoint v1"
_NAME_RE = re.compile(r"^[A-Za-z0-9_.\-]+(/[A-Za-z0-9_.\-]+)*$")
_DTYPES = {"f8": "<f8", "i8": "<i8"}


class CheckpointError(RuntimeError):
    pass


def _dtype_code(arr):
    if arr.dtype == np.float64:
        return "f8"
    if arr.dtype == np.int64:
        return "i8"
    raise CheckpointError(f"unsupported dtype {arr.dtype} (use float64 or int64)")


def save_arrays(directory, arrays):
    """Write ``arrays`` (name -> ndarray) into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    lines = [FORMAT_TAG]
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        if not _NAME_RE.match(name) or any(seg in (".", "..") for seg in name.split("/")):
            raise CheckpointError(f"illegal array name {name!r}")
        code = _dtype_code(arr)
        lines.append(f"{name} {code} " + " ".join(str(d) for d in arr.shape))
        path = os.path.join(directory, name + ".bin")
        os.makedirs(os.path.dirname(path), exist_ok=True)
        arr.astype(_DTYPES[code]).tofile(path)
    with open(os.path.join(directory, "manifest.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")


def load_arrays(directory):
    """Read a checkpoint directory back into a name -> ndarray dict."""
    manifest = os.path.join(directory, "manifest.txt")
    if not os.path.exists(manifest):
        raise CheckpointError(f"no manifest in {directory}")
    with open(manifest) as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != FORMAT_TAG:
        raise CheckpointError(
            f"manifest version mismatch: expected {FORMAT_TAG!r}, got {lines[0] if lines else 'empty'!r}"
        )
    out = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split()
        name, code = parts[0], parts[1]
        shape = tuple(int(d) for d in parts[2:])
        if code not in _DTYPES:
            raise CheckpointError(f"unknown dtype code {code!r} for {name}")
        count = int(np.prod(shape)) if shape else 1
        path = os.path.join(directory, name + ".bin")
        if not os.path.exists(path):
            raise CheckpointError(f"missing data file for {name}")
        arr = np.fromfile(path, dtype=_DTYPES[code])
        if arr.size != count:
            raise CheckpointError(
                f"truncated or oversized data for {name}: expected {count} values, found {arr.size}"
            )
        out[name] = arr.reshape(shape)
    return out


def params_to_arrays(params, prefix=""):
    """Tensors -> raw arrays, optionally namespaced under ``prefix``."""
    return {prefix + k: p.data for k, p in params.items()}


def load_into_params(params, arrays, prefix=""):
    """Copy checkpoint arrays into existing parameter tensors, in place."""
    for k, p in params.items():
        key = prefix + k
        if key not in arrays:
            raise CheckpointError(f"checkpoint missing parameter {key}")
        arr = arrays[key]
        if arr.shape != p.data.shape:
            raise CheckpointError(
                f"shape mismatch for {key}: checkpoint {arr.shape} vs model {p.data.shape}"
            )
        p.data[...] = arr
