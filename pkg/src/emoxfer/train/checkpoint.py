"""Sectioned binary checkpoint container.

Layout: a text header followed by one raw binary blob. Header lines:

    EMOXFER-CKPT 1
    config_hash <hex>
    step <int>
    tensor <dtype> <offset> <nbytes> <ndim> <shape...> <name>
    end

All floats are little-endian 32-bit (f4); integer tensors are little-endian
64-bit (i8); RNG states are raw bytes (u1). Tensor names are
`<section>/<state_dict_key>`; model sections are the six module names plus
`optimizer`, `stats` and `rng`.
"""

from __future__ import annotations

import warnings

import numpy as np
import torch
import yaml

from ..dsp.prosody import SpeakerStats
from ..errors import CheckpointError

_MAGIC = "EMOXFER-CKPT 1"

MODEL_SECTIONS = (
    "emotion_encoder",
    "prosody_predictor",
    "timbre_encoder",
    "phoneme_encoder",
    "decoder",
    "emotion_table",
)

_DTYPES = {"f4": "<f4", "i8": "<i8", "u1": "<u1"}


def _to_storage(tensor: torch.Tensor) -> np.ndarray:
    arr = tensor.detach().cpu().numpy()
    if arr.dtype == np.uint8:
        return np.ascontiguousarray(arr, dtype="<u1")
    if np.issubdtype(arr.dtype, np.floating):
        return np.ascontiguousarray(arr, dtype="<f4")
    if np.issubdtype(arr.dtype, np.integer) or arr.dtype == np.bool_:
        return np.ascontiguousarray(arr, dtype="<i8")
    raise CheckpointError(f"unsupported tensor dtype {arr.dtype}")


def _dtype_token(arr: np.ndarray) -> str:
    for token, dt in _DTYPES.items():
        if arr.dtype == np.dtype(dt):
            return token
    raise CheckpointError(f"unsupported storage dtype {arr.dtype}")


def save_checkpoint(
    path,
    *,
    model,
    config,
    step: int,
    optimizer=None,
    speaker_stats=None,
    intensity_medians=None,
    mel_stats=None,
    rng_states=None,
    speakers=None,
) -> None:
    tensors: dict[str, np.ndarray] = {}
    for section, child in model.named_children():
        for key, value in child.state_dict().items():
            tensors[f"{section}/{key}"] = _to_storage(value)
    if optimizer is not None:
        params = list(model.parameters())
        for idx, p in enumerate(params):
            state = optimizer.state.get(p, {})
            for key, value in state.items():
                if isinstance(value, torch.Tensor):
                    tensors[f"optimizer/{idx}.{key}"] = _to_storage(value)
    if speaker_stats:
        for sid, st in speaker_stats.items():
            packed = np.empty(6)
            packed[0::2], packed[1::2] = st.mean, st.std
            tensors[f"stats/speaker/{sid}"] = packed.astype("<f4")
    if intensity_medians is not None:
        width = model.emotion_table.num_embeddings
        packed = np.full(width, -1.0)
        for label, median in intensity_medians.items():
            packed[int(label)] = median
        tensors["stats/intensity_medians"] = packed.astype("<f4")
    if mel_stats is not None:
        tensors["stats/mel"] = np.asarray(mel_stats, dtype="<f4")
    if rng_states:
        for key, state in rng_states.items():
            tensors[f"rng/{key}"] = _to_storage(state)
    config_bytes = np.frombuffer(
        yaml.safe_dump(config.to_dict(), sort_keys=True).encode("utf-8"), dtype="<u1"
    ).copy()
    tensors["meta/config_yaml"] = config_bytes
    if speakers:
        tensors["meta/speakers"] = np.frombuffer(
            "\n".join(speakers).encode("utf-8"), dtype="<u1"
        ).copy()

    header = [_MAGIC, f"config_hash {config.config_hash()}", f"step {int(step)}"]
    offset = 0
    blobs = []
    for name in sorted(tensors):
        arr = tensors[name]
        nbytes = arr.nbytes
        shape = " ".join(str(d) for d in arr.shape)
        header.append(
            f"tensor {_dtype_token(arr)} {offset} {nbytes} {arr.ndim}"
            + (f" {shape}" if arr.ndim else "")
            + f" {name}"
        )
        blobs.append(arr.tobytes())
        offset += nbytes
    header.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("utf-8"))
        for blob in blobs:
            fh.write(blob)


class Checkpoint:
    """Parsed checkpoint container with typed accessors."""

    def __init__(self, step: int, config_hash: str, tensors: dict):
        self.step = step
        self.config_hash = config_hash
        self.tensors = tensors

    def section(self, name: str) -> dict:
        prefix = name + "/"
        found = {k[len(prefix):]: v for k, v in self.tensors.items() if k.startswith(prefix)}
        if not found:
            raise CheckpointError(f"checkpoint is missing section {name!r}")
        return found

    def verify_hash(self, config) -> bool:
        expected = config.config_hash()
        if expected != self.config_hash:
            warnings.warn(
                f"checkpoint config hash {self.config_hash} does not match the "
                f"active configuration {expected}",
                stacklevel=2,
            )
            return False
        return True

    def restore_model(self, model) -> None:
        for section, child in model.named_children():
            stored = self.section(section)
            state = {}
            for key, current in child.state_dict().items():
                if key not in stored:
                    raise CheckpointError(f"section {section!r} is missing tensor {key!r}")
                state[key] = torch.from_numpy(stored[key].copy()).to(current.dtype).reshape(
                    current.shape
                )
            child.load_state_dict(state, strict=True)

    def restore_optimizer(self, optimizer, model) -> None:
        stored = self.section("optimizer")
        for idx, p in enumerate(model.parameters()):
            prefix = f"{idx}."
            state = {}
            for key, arr in stored.items():
                if key.startswith(prefix):
                    t = torch.from_numpy(arr.copy())
                    field = key[len(prefix):]
                    if field == "step":
                        t = t.to(torch.float32)
                    elif np.issubdtype(arr.dtype, np.floating):
                        t = t.to(p.dtype).reshape(p.shape)
                    state[field] = t
            if state:
                optimizer.state[p] = state

    def speaker_stats(self) -> dict:
        prefix = "stats/speaker/"
        out = {}
        for key, arr in self.tensors.items():
            if key.startswith(prefix):
                values = arr.astype(np.float64)
                out[key[len(prefix):]] = SpeakerStats(mean=values[0::2], std=values[1::2])
        return out

    def intensity_medians(self) -> dict:
        arr = self.tensors.get("stats/intensity_medians")
        if arr is None:
            return {}
        return {i: float(v) for i, v in enumerate(arr) if v >= 0}

    def mel_stats(self):
        arr = self.tensors.get("stats/mel")
        if arr is None:
            return None
        return float(arr[0]), float(arr[1])

    def rng_states(self) -> dict:
        prefix = "rng/"
        return {
            k[len(prefix):]: torch.from_numpy(v.copy())
            for k, v in self.tensors.items()
            if k.startswith(prefix)
        }

    def run_config(self):
        from ..config import RunConfig

        arr = self.tensors.get("meta/config_yaml")
        if arr is None:
            raise CheckpointError("checkpoint carries no embedded configuration")
        return RunConfig.from_dict(yaml.safe_load(arr.tobytes().decode("utf-8")))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        first = fh.readline().decode("utf-8").rstrip("\n")
        if first != _MAGIC:
            raise CheckpointError(f"{path}: not an {_MAGIC} file")
        config_hash = ""
        step = 0
        specs = []
        while True:
            line = fh.readline().decode("utf-8").rstrip("\n")
            if not line:
                raise CheckpointError(f"{path}: truncated header")
            if line == "end":
                break
            fields = line.split(" ")
            if fields[0] == "config_hash":
                config_hash = fields[1]
            elif fields[0] == "step":
                step = int(fields[1])
            elif fields[0] == "tensor":
                dtype, offset, nbytes, ndim = fields[1], int(fields[2]), int(fields[3]), int(fields[4])
                shape = tuple(int(d) for d in fields[5 : 5 + ndim])
                name = " ".join(fields[5 + ndim :])
                if dtype not in _DTYPES:
                    raise CheckpointError(f"{path}: unknown dtype token {dtype!r}")
                specs.append((name, dtype, offset, nbytes, shape))
            else:
                raise CheckpointError(f"{path}: unknown header line {line!r}")
        payload = fh.read()
    tensors = {}
    for name, dtype, offset, nbytes, shape in specs:
        if offset + nbytes > len(payload):
            raise CheckpointError(f"{path}: tensor {name!r} extends past payload")
        tensors[name] = np.frombuffer(
            payload, dtype=_DTYPES[dtype], count=nbytes // np.dtype(_DTYPES[dtype]).itemsize,
            offset=offset,
        ).reshape(shape)
    return Checkpoint(step=step, config_hash=config_hash, tensors=tensors)
