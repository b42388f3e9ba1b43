"""Model files: one UTF-8 JSON document per model.

Floats are written with Python's shortest round-trip repr, so reading a
file back reproduces every parameter bit for bit.
"""

import json
import os
from pathlib import Path

import numpy as np

from ..rng import RNG_ALGORITHM
from .model import N_HIDDEN, AutoencoderModel, param_order

FORMAT_VERSION = 1

HEADER_FIELDS = (
    "region_start_deg",
    "region_end_deg",
    "delta_theta_deg",
    "snr_train_db",
    "seed",
)


class ModelFormatError(ValueError):
    pass


def _array_order():
    names = ["b_weights", "wrf_phases", "wbb_weights"]
    for i in range(1, N_HIDDEN + 1):
        names += [f"bn{i}.scale", f"bn{i}.shift", f"bn{i}.running_mean", f"bn{i}.running_var"]
    for i in range(1, N_HIDDEN + 1):
        names += [f"fc{i}.weight", f"fc{i}.bias"]
    return names


def _get(model, name):
    if name == "b_weights":
        return model.b_weights
    if name.endswith(".running_mean"):
        return model.running[name.replace("running_mean", "mean")]
    if name.endswith(".running_var"):
        return model.running[name.replace("running_var", "var")]
    return model.params[name]


def model_to_dict(model, **meta):
    doc = {
        "format_version": FORMAT_VERSION,
        "N": model.n,
        "R": model.r,
    }
    merged = {**model.meta, **meta}
    for key in HEADER_FIELDS:
        doc[key] = merged.get(key)
    doc["rng_algorithm"] = RNG_ALGORITHM
    doc["bn_epsilon"] = model.bn_epsilon
    doc["bn_momentum"] = model.bn_momentum
    doc["dtype"] = str(model.dtype)
    doc["arrays"] = [
        {
            "name": name,
            "shape": list(_get(model, name).shape),
            "data": np.asarray(_get(model, name), dtype=np.float64).ravel().tolist(),
        }
        for name in _array_order()
    ]
    return doc


def model_from_dict(doc):
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format_version {version!r}")
    dtype = np.dtype(doc.get("dtype", "float64"))
    arrays = {}
    for entry in doc["arrays"]:
        a = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        arrays[entry["name"]] = a
    missing = set(_array_order()) - set(arrays)
    if missing:
        raise ModelFormatError(f"model file lacks arrays {sorted(missing)}")
    params = {k: arrays[k].astype(dtype) for k in param_order()}
    running = {}
    for i in range(1, N_HIDDEN + 1):
        running[f"bn{i}.mean"] = arrays[f"bn{i}.running_mean"].astype(dtype)
        running[f"bn{i}.var"] = arrays[f"bn{i}.running_var"].astype(dtype)
    meta = {k: doc.get(k) for k in HEADER_FIELDS if doc.get(k) is not None}
    return AutoencoderModel(
        n=int(doc["N"]),
        r=int(doc["R"]),
        b_weights=arrays["b_weights"],
        params=params,
        running=running,
        bn_epsilon=float(doc["bn_epsilon"]),
        bn_momentum=float(doc.get("bn_momentum", 0.9)),
        meta=meta,
    )


def atomic_write_text(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def save_model(model, path, **meta):
    atomic_write_text(path, json.dumps(model_to_dict(model, **meta)))


def load_model(path):
    with open(path, encoding="utf-8") as f:
        return model_from_dict(json.load(f))
