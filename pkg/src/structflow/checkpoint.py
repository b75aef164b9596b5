"""Binary checkpoint format.

Layout::

    b"SFLOW1"                       6 bytes
    uint64 little-endian            length N of the JSON metadata block
    N bytes UTF-8 JSON              metadata incl. tensor manifest
    float64 little-endian tensors   in manifest order, C order

Only float64 is stored, so ``load(save(c))`` reproduces every bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dmv import DmvParams
from .emission import EmissionParams
from .errors import (BadMagicError, ManifestError, TruncatedCheckpointError,
                     VersionMismatchError)
from .flow import HIGH, LOW, CouplingLayer, FlowParams
from .markov import MarkovParams
from .model import ModelParams

MAGIC = b"SFLOW1"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")


@dataclass
class Checkpoint:
    params: ModelParams
    metadata: dict = field(default_factory=dict)
    # Adam moments keyed by parameter name, plus the step count
    optimizer: dict | None = None


def _structure(params: ModelParams) -> dict:
    flow = params.flow
    hidden = flow.layers[0].W1.shape[0] if flow.kind == "nice" and flow.layers else None
    return {
        "task": params.task,
        "K": params.K,
        "D": params.D,
        "tag_dim": params.tag_dim,
        "word_dim": params.D - params.tag_dim,
        "flow": flow.kind,
        "n_layers": flow.n_layers,
        "hidden": hidden,
    }


def _expected_tensor_count(structure, optimizer_meta):
    n = 2 if structure["task"] == "tag" else 3
    n += 2
    if structure["flow"] == "nice":
        n += 4 * structure["n_layers"]
    elif structure["flow"] == "linear":
        n += 1
    if structure["tag_dim"]:
        n += 1
    # frozen tensors (tag embeddings during fine-tuning) carry no moments
    return n + 2 * len(optimizer_meta["names"]) if optimizer_meta else n


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    tensors = dict(ckpt.params.tensors())
    optimizer_meta = None
    if ckpt.optimizer is not None:
        names = [name for name in tensors if name in ckpt.optimizer["m"]]
        optimizer_meta = {"t": int(ckpt.optimizer["t"]), "names": names}
        for name in names:
            tensors[f"adam.m.{name}"] = ckpt.optimizer["m"][name]
            tensors[f"adam.v.{name}"] = ckpt.optimizer["v"][name]
    header = {
        "format_version": FORMAT_VERSION,
        "structure": _structure(ckpt.params),
        "metadata": ckpt.metadata,
        "optimizer": optimizer_meta,
        "manifest": [{"name": k, "shape": list(v.shape)} for k, v in tensors.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for value in tensors.values():
            fh.write(np.ascontiguousarray(value, dtype=_DTYPE).tobytes())


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedCheckpointError(f"checkpoint truncated while reading {what}")
    return data


def _build_params(structure, tensors) -> ModelParams:
    if structure["task"] == "tag":
        prior = MarkovParams(tensors["prior.init_logits"], tensors["prior.trans_logits"])
    else:
        prior = DmvParams(tensors["prior.root_logits"], tensors["prior.child_logits"],
                          tensors["prior.stop_logits"])
    emission = EmissionParams(tensors["emission.means"], tensors["emission.log_vars"])
    kind, D = structure["flow"], structure["D"]
    if kind == "nice":
        layers = [CouplingLayer(tensors[f"flow.{i}.W1"], tensors[f"flow.{i}.b1"], tensors[f"flow.{i}.W2"],
                                tensors[f"flow.{i}.b2"], LOW if i % 2 == 0 else HIGH)
                  for i in range(structure["n_layers"])]
        flow = FlowParams("nice", D, layers)
    elif kind == "linear":
        flow = FlowParams("linear", D, W=tensors["flow.W"])
    else:
        flow = FlowParams("identity", D)
    return ModelParams(prior, emission, flow, tensors.get("tag_embeddings"))


def load_checkpoint(path) -> Checkpoint:
    with open(Path(path), "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise BadMagicError(f"{path}: not a structflow checkpoint (bad magic {magic!r})")
        (length,) = struct.unpack("<Q", _read_exact(fh, 8, "header length"))
        try:
            header = json.loads(_read_exact(fh, length, "metadata").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ManifestError(f"{path}: unreadable metadata block: {exc}") from None
        version = header.get("format_version")
        if version != FORMAT_VERSION:
            raise VersionMismatchError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
        structure = header["structure"]
        manifest = header["manifest"]
        expected = _expected_tensor_count(structure, header.get("optimizer"))
        if len(manifest) != expected:
            raise ManifestError(f"{path}: manifest lists {len(manifest)} tensors, structure implies {expected}")
        tensors = {}
        for entry in manifest:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = _read_exact(fh, count * _DTYPE.itemsize, f"tensor {entry['name']}")
            tensors[entry["name"]] = np.frombuffer(raw, dtype=_DTYPE).reshape(shape).astype(np.float64)
        if fh.read(1):
            raise ManifestError(f"{path}: trailing bytes after the last tensor")

    optimizer = None
    if header.get("optimizer") is not None:
        optimizer = {"t": header["optimizer"]["t"], "m": {}, "v": {}}
        for name in list(tensors):
            for key in ("m", "v"):
                prefix = f"adam.{key}."
                if name.startswith(prefix):
                    optimizer[key][name[len(prefix):]] = tensors.pop(name)
    try:
        params = _build_params(structure, tensors)
    except KeyError as exc:
        raise ManifestError(f"{path}: missing tensor {exc}") from None
    return Checkpoint(params=params, metadata=header["metadata"], optimizer=optimizer)
