"""Binary matrix files: little-endian float32 payload behind a short text header.

Format::

    EMOXFER-MAT 1
    shape <d0> [<d1> ...]
    <blank line>
    <raw little-endian float32 bytes, C order>

Used for exported mel-spectrograms, hidden features, prosody traces and
speaker embeddings.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError

_MAGIC = b"EMOXFER-MAT 1\n"


def save_matrix(path, values) -> None:
    arr = np.ascontiguousarray(values, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(("shape " + " ".join(str(d) for d in arr.shape) + "\n").encode("ascii"))
        fh.write(b"\n")
        fh.write(arr.tobytes())


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline() != _MAGIC:
            raise DataError(f"{path}: not an EMOXFER-MAT file")
        shape_line = fh.readline().decode("ascii").split()
        if not shape_line or shape_line[0] != "shape":
            raise DataError(f"{path}: missing shape header")
        shape = tuple(int(d) for d in shape_line[1:])
        fh.readline()  # blank separator
        payload = fh.read()
    expected = int(np.prod(shape)) * 4
    if len(payload) != expected:
        raise DataError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
