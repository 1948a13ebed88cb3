"""Parameter checkpoints as JSON: layer name -> shape + flat coefficients."""
import json

import numpy as np

FORMAT_VERSION = 1


def encode_arrays(arrays):
    return {k: {"shape": list(np.shape(v)), "data": np.asarray(v, dtype=np.float64).ravel().tolist()} for k, v in arrays.items()}


def decode_arrays(doc):
    return {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc.items()}


def dumps(params, architecture=None, extra=None):
    doc = {
        "format_version": FORMAT_VERSION,
        "architecture": architecture or {},
        "params": encode_arrays(params),
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, sort_keys=True)


def loads(text):
    doc = json.loads(text)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {doc.get('format_version')!r}")
    doc["params"] = decode_arrays(doc["params"])
    return doc


def load_into(params, stored):
    """Copy ``stored`` arrays into the live ``params`` arrays in place."""
    missing = set(params) ^ set(stored)
    if missing:
        raise ValueError(f"checkpoint/parameter name mismatch: {sorted(missing)}")
    for k, v in params.items():
        if v.shape != stored[k].shape:
            raise ValueError(f"shape mismatch for {k}: {v.shape} vs {stored[k].shape}")
        v[...] = stored[k]
