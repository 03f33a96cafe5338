"""Portable binary container for model weights and optimizer state.

Layout: magic "ATCN" | format version u32 LE | header length u32 LE |
UTF-8 JSON header (kind, config, vocab, blob manifest with byte
offsets/lengths) | concatenated row-major float32 LE blobs.  Batch-norm blobs
include the running statistics, so a loaded model is eval-ready.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .kernel import AdamState, Tensor
from .model import AtcnConfig, AtcnModel, CharVocab

MAGIC = b"ATCN"
FORMAT_VERSION = 1


class ModelFormatError(Exception):
    """Base class for malformed model files."""


class BadMagicError(ModelFormatError):
    pass


class VersionMismatchError(ModelFormatError):
    pass


class TruncatedBlobError(ModelFormatError):
    pass


class SizeMismatchError(ModelFormatError):
    pass


def write_container(path, kind: str, meta: dict, blobs: list[tuple[str, np.ndarray]]):
    """Serialize named float arrays with a JSON header; byte-stable per input."""
    manifest = []
    payload = bytearray()
    for name, arr in blobs:
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        manifest.append({
            "name": name,
            "shape": list(arr.shape),
            "offset": len(payload),
            "length": len(raw),
        })
        payload.extend(raw)
    header = dict(meta)
    header["kind"] = kind
    header["blobs"] = manifest
    header_bytes = json.dumps(header, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)


def read_container(path, expected_kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse a container; raises a distinct error class per corruption kind."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a model file (bad magic)")
    version = struct.unpack_from("<I", raw, 4)[0]
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
    header_len = struct.unpack_from("<I", raw, 8)[0]
    if 12 + header_len > len(raw):
        raise SizeMismatchError(f"{path}: header length {header_len} runs past end of file")
    try:
        header = json.loads(raw[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SizeMismatchError(f"{path}: header is not valid JSON ({exc})") from exc
    if expected_kind is not None and header.get("kind") != expected_kind:
        raise SizeMismatchError(
            f"{path}: container holds {header.get('kind')!r}, expected {expected_kind!r}")
    data = raw[12 + header_len:]
    declared = 0
    blobs: dict[str, np.ndarray] = {}
    for entry in header.get("blobs", []):
        name, shape = entry["name"], tuple(entry["shape"])
        offset, length = entry["offset"], entry["length"]
        expected = int(np.prod(shape, dtype=np.int64)) * 4
        if expected != length:
            raise SizeMismatchError(
                f"{path}: blob {name!r} declares {length} bytes but shape {shape} needs {expected}")
        if offset + length > len(data):
            raise TruncatedBlobError(
                f"{path}: blob {name!r} is truncated ({offset + length} > {len(data)} data bytes)")
        arr = np.frombuffer(data, dtype="<f4", count=expected // 4, offset=offset)
        blobs[name] = arr.reshape(shape).copy()
        declared = max(declared, offset + length)
    if declared != len(data):
        raise SizeMismatchError(
            f"{path}: {len(data)} data bytes but manifest declares {declared}")
    return header, blobs


def _model_blob_names(model: AtcnModel) -> list[str]:
    names = list(model.params)
    for key in model.bn_states:
        names.append(f"{key}.running_mean")
        names.append(f"{key}.running_var")
    return names


def save_model(model: AtcnModel, path):
    blobs: list[tuple[str, np.ndarray]] = [(n, model.params[n].data) for n in model.params]
    for key, state in model.bn_states.items():
        blobs.append((f"{key}.running_mean", state.running_mean))
        blobs.append((f"{key}.running_var", state.running_var))
    meta = {
        "config": model.config.to_dict(),
        "vocab_chars": "".join(model.vocab.chars),
    }
    write_container(path, "model", meta, blobs)


def load_model(path) -> AtcnModel:
    header, blobs = read_container(path, expected_kind="model")
    config = AtcnConfig.from_dict(header["config"])
    vocab = CharVocab(header["vocab_chars"])
    model = AtcnModel(config, vocab, dtype=np.float32, seed=0)
    for name in _model_blob_names(model):
        if name not in blobs:
            raise SizeMismatchError(f"{path}: missing blob {name!r}")
    for name, param in model.params.items():
        if blobs[name].shape != param.data.shape:
            raise SizeMismatchError(
                f"{path}: blob {name!r} has shape {blobs[name].shape}, model expects {param.data.shape}")
        param.data = blobs[name]
    # bn gamma/beta are the same Tensor objects as the params, already loaded
    for key, state in model.bn_states.items():
        state.running_mean = blobs[f"{key}.running_mean"]
        state.running_var = blobs[f"{key}.running_var"]
    return model


def save_optimizer(path, meta: dict, states: dict[str, AdamState]):
    """Optimizer-state sidecar in the same container format."""
    blobs = []
    for name in states:
        blobs.append((f"{name}.m", states[name].m))
        blobs.append((f"{name}.v", states[name].v))
    write_container(path, "optimizer", meta, blobs)


def load_optimizer(path, params: dict[str, Tensor]) -> tuple[dict, dict[str, AdamState]]:
    header, blobs = read_container(path, expected_kind="optimizer")
    states: dict[str, AdamState] = {}
    for name, param in params.items():
        m, v = blobs.get(f"{name}.m"), blobs.get(f"{name}.v")
        if m is None or v is None:
            raise SizeMismatchError(f"{path}: missing optimizer state for {name!r}")
        if m.shape != param.data.shape or v.shape != param.data.shape:
            raise SizeMismatchError(f"{path}: optimizer state shape mismatch for {name!r}")
        states[name] = AdamState(m.astype(param.data.dtype), v.astype(param.data.dtype))
    return header, states
