"""Flat binary container for named parameter tensors.

Layout: one ASCII header line with the format version, one JSON index line
mapping names to shapes, then the raw little-endian float64 payloads
concatenated in index order. Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .errors import ParseError
from .tensor import Tensor

_HEADER = b"gxplain-tensors 1\n"


def atomic_write_bytes(path: str | Path, write_fn: Callable) -> None:
    """Write via temp file + rename so interrupted runs leave no partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_tensors(path: str | Path, tensors: Mapping[str, Tensor | np.ndarray]) -> None:
    arrays = {
        name: (t.data if isinstance(t, Tensor) else np.asarray(t, dtype=np.float64))
        for name, t in tensors.items()
    }
    names = sorted(arrays)
    index = {name: list(arrays[name].shape) for name in names}

    def write(fh):
        fh.write(_HEADER)
        fh.write(json.dumps(index, sort_keys=True).encode("ascii") + b"\n")
        for name in names:
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())

    atomic_write_bytes(path, write)


def load_tensors(path: str | Path, requires_grad: bool = False) -> dict[str, Tensor]:
    with open(path, "rb") as fh:
        header = fh.readline()
        if header != _HEADER:
            raise ParseError(f"{path}: not a tensor container (header {header!r})")
        try:
            index = json.loads(fh.readline().decode("ascii"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ParseError(f"{path}: bad container index: {exc}") from exc
        out: dict[str, Tensor] = {}
        for name in sorted(index):
            shape = tuple(index[name])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ParseError(f"{path}: truncated payload for {name!r}")
            arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
            out[name] = Tensor(arr.copy(), requires_grad=requires_grad)
    return out
