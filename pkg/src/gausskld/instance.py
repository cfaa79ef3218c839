"""Reading instance files and writing output documents (see FORMAT.md)."""

import json
import math

import numpy as np

from . import __version__
from .exceptions import GaussKLDError
from .kld import GaussianPair

OUTPUT_FORMAT = "gausskld-output/1"


class InstanceParseError(GaussKLDError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


def _number(x, field):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise InstanceParseError(field, f"expected a number, got {type(x).__name__}")
    if not math.isfinite(x):
        raise InstanceParseError(field, "must be finite")
    return float(x)


def _vector(doc, key, n):
    v = doc.get(key)
    if not isinstance(v, list):
        raise InstanceParseError(key, "expected an array of numbers")
    if len(v) != n:
        raise InstanceParseError(key, f"expected {n} entries, got {len(v)}")
    return np.array([_number(x, f"{key}[{i}]") for i, x in enumerate(v)])


def _matrix(doc, key, n):
    rows = doc.get(key)
    if not isinstance(rows, list):
        raise InstanceParseError(key, "expected an array of rows")
    if len(rows) != n:
        raise InstanceParseError(key, f"expected {n} rows, got {len(rows)}")
    out = np.empty((n, n))
    for i, row in enumerate(rows):
        if not isinstance(row, list):
            raise InstanceParseError(f"{key}[{i}]", "expected an array of numbers")
        if len(row) != n:
            raise InstanceParseError(f"{key}[{i}]", f"expected {n} entries, got {len(row)} (matrix must be {n}x{n})")
        for j, x in enumerate(row):
            out[i, j] = _number(x, f"{key}[{i}][{j}]")
    return out


def parse_instance(doc):
    """
    Validate the structure of a decoded instance document.

    Returns ``(name, m, w, S, V)`` with row-major nested lists converted to
    arrays. Structural problems raise InstanceParseError naming the field;
    symmetry and definiteness are checked later by GaussianPair.
    """
    if not isinstance(doc, dict):
        raise InstanceParseError(None, "instance must be a JSON object")
    n = doc.get("n")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise InstanceParseError("n", "expected a positive integer")
    name = doc.get("name")
    if name is not None and not isinstance(name, str):
        raise InstanceParseError("name", "expected a string")
    return name, _vector(doc, "m", n), _vector(doc, "w", n), _matrix(doc, "S", n), _matrix(doc, "V", n)


def load_instance(path):
    """Read an instance file into ``(name, GaussianPair)``."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InstanceParseError(None, f"invalid JSON: {exc}") from exc
    name, m, w, S, V = parse_instance(doc)
    return name, GaussianPair(m, w, S, V)


def instance_document(pair, name=None):
    doc = {"n": pair.n}
    if name is not None:
        doc["name"] = name
    doc.update(m=pair.m.tolist(), w=pair.w.tolist(), S=pair.S.tolist(), V=pair.V.tolist())
    return doc


def encode_array(a):
    """Shape-tagged, row-major encoding; floats keep their exact repr."""
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.reshape(-1, order="C").tolist()}


def decode_array(obj):
    return np.array(obj["data"], dtype=float).reshape(obj["shape"], order="C")


def output_document(command, payload, instance=None, basis=None, config=None):
    return {
        "format": OUTPUT_FORMAT,
        "command": command,
        "version": __version__,
        "instance": instance,
        "basis": basis,
        "config": config or {},
        "payload": payload,
    }


def dumps(doc):
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"
