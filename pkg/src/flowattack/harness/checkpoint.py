"""``NFCK`` checkpoint format.

Layout (all integers little-endian)::

    b"NFCK" | u32 version | u32 descriptor length | descriptor (UTF-8 JSON)
            | u64 payload length | payload (float32 LE tensors, descriptor order)

The descriptor records the model kind, full topology, tensor shapes, the
payload CRC-32 and training metadata, so a model is rebuilt without any
external config.
"""

import json
import os
import struct
import zlib

import numpy as np

from ..classifier import MLPClassifier
from ..exceptions import CheckpointError
from ..flow.blocks import CouplingPair, Flatten, LogitPreprocess, Permute, Split, Squeeze
from ..flow.estimator import NormalizingFlow
from ..flow.model import FlowModel
from ..numerics.layers import MLP, Dense

MAGIC = b"NFCK"
VERSION = 1


def _json_safe(value):
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _flow_descriptor(est):
    return {
        "kind": "flow",
        "params": _json_safe(est.get_params()),
        "model": est.model_.describe(),
        "nll_trace": [float(v) for v in est.nll_trace_],
    }, est.model_.tensors()


def _classifier_descriptor(est):
    layers = [[l.n_in, l.n_out, l.activation, l.slope] for l in est.net_.layers]
    return {
        "kind": "classifier",
        "params": _json_safe(est.get_params()),
        "input_shape": list(est.input_shape_),
        "n_classes": int(est.n_classes_),
        "classes": [int(c) for c in est.classes_],
        "layers": layers,
        "loss_trace": [float(v) for v in getattr(est, "loss_trace_", [])],
        "accuracy_trace": [float(v) for v in getattr(est, "accuracy_trace_", [])],
    }, est.net_.parameters()


def encode(model, metadata=None):
    if isinstance(model, NormalizingFlow):
        desc, tensors = _flow_descriptor(model)
    elif isinstance(model, MLPClassifier):
        desc, tensors = _classifier_descriptor(model)
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    payload = b"".join(np.ascontiguousarray(t, dtype="<f4").tobytes() for t in tensors)
    desc["shapes"] = [list(t.shape) for t in tensors]
    desc["payload_crc32"] = zlib.crc32(payload)
    desc["metadata"] = _json_safe(metadata or {})
    text = json.dumps(desc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([MAGIC, struct.pack("<II", VERSION, len(text)), text,
                     struct.pack("<Q", len(payload)), payload])


def atomic_write(path, data):
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def checkpoint_save(model, path, metadata=None):
    atomic_write(path, encode(model, metadata))


def _take(raw, offset, n, field):
    if offset + n > len(raw):
        raise CheckpointError(f"truncated at byte {len(raw)}, need {offset + n}", field)
    return raw[offset:offset + n], offset + n


def _mlp(spec, tensors):
    layers = []
    for n_in, n_out, act, slope in spec:
        w = next(tensors)
        b = next(tensors)
        if w.shape != (n_out, n_in) or b.shape != (n_out,):
            raise CheckpointError("tensor shape disagrees with layer topology", "payload")
        layers.append(Dense(w, b, act, slope))
    return MLP(layers)


def _block(desc, tensors):
    kind = desc["kind"]
    if kind == "logit":
        return LogitPreprocess(desc["delta"])
    if kind == "permute":
        return Permute(desc["perm"])
    if kind == "squeeze":
        return Squeeze()
    if kind == "flatten":
        return Flatten(desc["shape"])
    if kind == "coupling":
        return CouplingPair(*(_mlp(spec, tensors) for spec in desc["nets"]), alpha=desc["alpha"])
    if kind == "split":
        return Split([_block(d, tensors) for d in desc["inner"]])
    raise CheckpointError(f"unknown block kind {kind!r}", "descriptor")


def decode(raw):
    head, off = _take(raw, 0, 4, "magic")
    if head != MAGIC:
        raise CheckpointError(f"expected {MAGIC!r}, found {head!r}", "magic")
    chunk, off = _take(raw, off, 4, "version")
    (version,) = struct.unpack("<I", chunk)
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version} (expected {VERSION})", "version")
    chunk, off = _take(raw, off, 4, "descriptor_length")
    (n_desc,) = struct.unpack("<I", chunk)
    text, off = _take(raw, off, n_desc, "descriptor")
    try:
        desc = json.loads(text.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"invalid JSON ({err})", "descriptor") from err
    chunk, off = _take(raw, off, 8, "payload_length")
    (n_payload,) = struct.unpack("<Q", chunk)
    expected = 4 * sum(int(np.prod(s)) for s in desc.get("shapes", []))
    if n_payload != expected:
        raise CheckpointError(f"declared {n_payload} bytes, descriptor shapes need {expected}",
                              "payload_length")
    payload, off = _take(raw, off, n_payload, "payload")
    if off != len(raw):
        raise CheckpointError(f"{len(raw) - off} trailing bytes", "payload")
    if zlib.crc32(payload) != desc.get("payload_crc32"):
        raise CheckpointError("CRC-32 mismatch", "payload")
    tensors, pos = [], 0
    for shape in desc["shapes"]:
        n = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f4", count=n, offset=pos).astype(np.float32)
        tensors.append(arr.reshape(shape))
        pos += 4 * n
    return desc, tensors


def _tuple_params(params):
    return {k: tuple(v) if isinstance(v, list) else v for k, v in params.items()}


def checkpoint_load(path):
    """Rebuild a fitted ``NormalizingFlow`` or ``MLPClassifier`` from ``path``."""
    with open(path, "rb") as f:
        raw = f.read()
    desc, tensors = decode(raw)
    it = iter(tensors)
    if desc["kind"] == "flow":
        m = desc["model"]
        est = NormalizingFlow(**_tuple_params(desc["params"]))
        est.model_ = FlowModel([_block(b, it) for b in m["blocks"]], m["input_shape"])
        est.nll_trace_ = list(desc["nll_trace"])
    elif desc["kind"] == "classifier":
        est = MLPClassifier(**_tuple_params(desc["params"]))
        est.net_ = _mlp(desc["layers"], it)
        est.input_shape_ = tuple(desc["input_shape"])
        est.n_classes_ = desc["n_classes"]
        est.classes_ = np.asarray(desc["classes"])
        est.loss_trace_ = list(desc["loss_trace"])
        est.accuracy_trace_ = list(desc["accuracy_trace"])
    else:
        raise CheckpointError(f"unknown model kind {desc['kind']!r}", "descriptor")
    est.checkpoint_metadata_ = desc.get("metadata", {})
    return est
