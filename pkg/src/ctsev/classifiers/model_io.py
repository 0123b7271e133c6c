"""Self-describing binary model files.

Layout (integers little-endian)::

    b"CTSEV01"                  magic, 7 bytes
    u16 n, kind tag             n bytes of ASCII
    u32 m, header               m bytes of JSON (sorted keys): model metadata
                                plus name/dtype/shape/offset of every array
    array block                 raw little-endian array bytes, in header order
    sha256                      32-byte digest of everything above

The same model always serializes to the same bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CorruptModelError, ModelVersionError
from .ensemble import EnsembleModel
from .ert import ErtModel
from .gboost import GboostModel
from .knn import KnnModel
from .logreg import LogregModel
from .svm import SvmModel

MAGIC = b"CTSEV01"
DIGEST_SIZE = 32

MODEL_KINDS = {cls.kind: cls for cls in (ErtModel, GboostModel, SvmModel, KnnModel, LogregModel, EnsembleModel)}

_DTYPES = {"f8": "<f8", "i8": "<i8"}


def _encode_array(a: np.ndarray):
    a = np.asarray(a)
    code = "f8" if a.dtype.kind == "f" else "i8"
    return code, np.ascontiguousarray(a, dtype=_DTYPES[code]).tobytes()


def dumps(model) -> bytes:
    meta, arrays = model.state()
    specs, blobs, offset = [], [], 0
    for name in sorted(arrays):
        code, raw = _encode_array(arrays[name])
        specs.append({"name": name, "dtype": code, "shape": list(np.shape(arrays[name])), "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta, "arrays": specs}, sort_keys=True, separators=(",", ":")).encode()
    kind = model.kind.encode("ascii")
    body = b"".join([MAGIC, struct.pack("<H", len(kind)), kind, struct.pack("<I", len(header)), header, *blobs])
    return body + hashlib.sha256(body).digest()


def loads(data: bytes):
    if not data.startswith(MAGIC):
        if data[:5] == MAGIC[:5]:
            raise ModelVersionError(f"unsupported model format version {data[:7]!r}")
        raise CorruptModelError("not a model file (bad magic)")
    if len(data) < len(MAGIC) + 6 + DIGEST_SIZE:
        raise CorruptModelError("model file truncated")
    body, digest = data[:-DIGEST_SIZE], data[-DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptModelError("model checksum mismatch (file corrupt or truncated)")
    pos = len(MAGIC)
    (n,) = struct.unpack_from("<H", body, pos)
    pos += 2
    kind = body[pos:pos + n].decode("ascii", errors="replace")
    pos += n
    if kind not in MODEL_KINDS:
        raise ModelVersionError(f"unknown model kind {kind!r}")
    (m,) = struct.unpack_from("<I", body, pos)
    pos += 4
    try:
        header = json.loads(body[pos:pos + m])
    except ValueError as exc:
        raise CorruptModelError(f"bad model header: {exc}") from exc
    pos += m
    arrays = {}
    for spec in header["arrays"]:
        dt = np.dtype(_DTYPES[spec["dtype"]])
        count = int(np.prod(spec["shape"], dtype=np.int64))
        start = pos + spec["offset"]
        if start + count * dt.itemsize > len(body):
            raise CorruptModelError(f"array {spec['name']} runs past the end of the file")
        arr = np.frombuffer(body, dtype=dt, count=count, offset=start).reshape(spec["shape"])
        arrays[spec["name"]] = arr.astype(dt.newbyteorder("="))
    return MODEL_KINDS[kind].from_state(header["meta"], arrays)


def save_model(model, path) -> str:
    """Write ``model`` to ``path``; returns the hex sha256 of the file."""
    data = dumps(model)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load_model(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CorruptModelError(f"cannot read model file {path}: {exc}") from exc
    return loads(data)
