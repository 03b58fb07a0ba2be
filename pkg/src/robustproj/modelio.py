"""Binary persistence for fitted projections and trained heads.

Format: magic ``SPCR``, a little-endian u16 version, a u32 matrix count, then
a sequence of named matrices, each encoded as u32 name length, the UTF-8 name,
u32 rows, u32 cols, and a row-major float64 little-endian payload. Everything
is fixed little-endian so files round-trip bit-exactly across platforms.
"""

import struct

import numpy as np

from .errors import ModelIOError
from .heads import LinearHead, MlpHead
from .projection import PCA, SPCA, ProjectionModel

MAGIC = b"SPCR"
VERSION = 1

_KIND_CODE = {PCA: 0.0, SPCA: 1.0}
_CODE_KIND = {0.0: PCA, 1.0: SPCA}
_HEAD_NONE, _HEAD_LINEAR, _HEAD_MLP = -1.0, 0.0, 1.0


def _model_matrices(model, head):
    mats = {
        "projection/W": model.W,
        "projection/b": model.b,
        "projection/mean": model.mean,
        "projection/explained_variance": model.explained_variance,
        "projection/kind": np.array([_KIND_CODE[model.kind]]),
        "projection/converged": np.array([1.0 if model.converged else 0.0]),
    }
    if head is None:
        mats["head/kind"] = np.array([_HEAD_NONE])
    elif isinstance(head, LinearHead):
        mats["head/kind"] = np.array([_HEAD_LINEAR])
        mats["head/U"] = head.U
        mats["head/biases"] = head.biases
    else:
        mats["head/kind"] = np.array([_HEAD_MLP])
        for i, (W, b) in enumerate(zip(head.weights, head.biases)):
            mats[f"head/W{i}"] = W
            mats[f"head/b{i}"] = b
    return mats


def save_model(path, model, head=None):
    """Write a projection (and optionally a head) to one model file."""
    mats = _model_matrices(model, head)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H", VERSION))
        f.write(struct.pack("<I", len(mats)))
        for name in sorted(mats):
            arr = np.ascontiguousarray(np.atleast_2d(np.asarray(mats[name], dtype="<f8")))
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
            f.write(arr.tobytes())


def _read_exact(f, n, what):
    buf = f.read(n)
    if len(buf) != n:
        raise ModelIOError(f"file truncated while reading {what}")
    return buf


def load_model(path):
    """Read back a (projection, head) pair; head is None for fit-only files."""
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != MAGIC:
            raise ModelIOError(f"{path}: bad magic")
        (version,) = struct.unpack("<H", _read_exact(f, 2, "version"))
        if version != VERSION:
            raise ModelIOError(f"{path}: unsupported version {version}")
        (count,) = struct.unpack("<I", _read_exact(f, 4, "matrix count"))
        mats = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4, "name length"))
            name = _read_exact(f, name_len, "name").decode("utf-8")
            rows, cols = struct.unpack("<II", _read_exact(f, 8, "shape"))
            payload = _read_exact(f, rows * cols * 8, f"payload of {name}")
            mats[name] = np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()

    try:
        model = ProjectionModel(
            W=mats["projection/W"],
            b=mats["projection/b"].ravel(),
            mean=mats["projection/mean"].ravel(),
            kind=_CODE_KIND[float(mats["projection/kind"][0, 0])],
            explained_variance=mats["projection/explained_variance"].ravel(),
            converged=bool(mats["projection/converged"][0, 0]),
        )
        head_kind = float(mats["head/kind"][0, 0])
        if head_kind == _HEAD_NONE:
            head = None
        elif head_kind == _HEAD_LINEAR:
            head = LinearHead(U=mats["head/U"], biases=mats["head/biases"].ravel())
        else:
            weights, biases = [], []
            for i in range(3):
                weights.append(mats[f"head/W{i}"])
                biases.append(mats[f"head/b{i}"].ravel())
            head = MlpHead(weights=tuple(weights), biases=tuple(biases))
    except KeyError as exc:
        raise ModelIOError(f"{path}: missing matrix {exc}") from exc
    return model, head
