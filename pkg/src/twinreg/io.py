"""Versioned model container.

A model file is UTF-8 JSON.  Arrays are stored as base64 of their
little-endian float64 bytes together with their shape, so loading restores
every value bit for bit and saving the same model twice yields identical
bytes.
"""
from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .baselines import AnnModel
from .data import Normalizer
from .nn import LayerSpec, Network
from .twin import TwinModel

FORMAT = "twinreg-model"
VERSION = 1


class ModelFormatError(ValueError):
    pass


def encode_array(a) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "f8": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(obj) -> np.ndarray:
    raw = base64.b64decode(obj["f8"])
    return np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).astype(np.float64)


def _network(net: Network) -> dict:
    return {"layers": [[l.input_dim, l.output_dim, l.activation] for l in net.layers],
            "params": encode_array(net.flat)}


def _load_network(obj) -> Network:
    layers = [LayerSpec(int(a), int(b), act) for a, b, act in obj["layers"]]
    return Network(layers, decode_array(obj["params"]))


def _normalizer(norm: Normalizer) -> dict:
    return {"center": encode_array(norm.center), "half_range": encode_array(norm.half_range)}


def to_dict(model, extra: dict | None = None) -> dict:
    doc = {"format": FORMAT, "version": VERSION}
    if isinstance(model, TwinModel):
        doc.update(kind="twin", network=_network(model.network),
                   normalizer=_normalizer(model.normalizer),
                   anchors_X=encode_array(model.anchors_X), anchors_y=encode_array(model.anchors_y))
    elif isinstance(model, AnnModel):
        doc.update(kind="ann", network=_network(model.network),
                   normalizer=_normalizer(model.normalizer),
                   dropout_rate=model.dropout_rate, input_dropout=model.input_dropout)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    if extra:
        doc["extra"] = extra
    return doc


def from_dict(doc: dict):
    if doc.get("format") != FORMAT:
        raise ModelFormatError("not a twinreg model file")
    if doc.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')}")
    net = _load_network(doc["network"])
    norm = Normalizer(decode_array(doc["normalizer"]["center"]),
                      decode_array(doc["normalizer"]["half_range"]))
    if doc["kind"] == "twin":
        return TwinModel(net, decode_array(doc["anchors_X"]), decode_array(doc["anchors_y"]), norm)
    if doc["kind"] == "ann":
        return AnnModel(net, norm, doc["dropout_rate"], doc["input_dropout"])
    raise ModelFormatError(f"unknown model kind {doc['kind']!r}")


def dumps(model, extra: dict | None = None) -> str:
    return json.dumps(to_dict(model, extra), sort_keys=True, indent=1) + "\n"


def save_model(model, path, extra: dict | None = None):
    Path(path).write_text(dumps(model, extra))


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ModelFormatError(f"{path}: {err}") from None
    return from_dict(doc)
