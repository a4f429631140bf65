"""Binary file formats: tensors, fitted models and eigen decompositions.

Tensor files carry a fixed header (magic ``MPBT``, version byte, mode count,
little-endian u64 dimensions) followed by the float64 payload with the last
index varying fastest. Model and eigen files share an envelope: a 4-byte
magic, a version byte, a u32 length-prefixed JSON header, then float64
little-endian payloads in the order listed in the header. Loads validate
magic, version, size and finiteness; every writer round-trips losslessly
through its reader.
"""

from __future__ import annotations

import json
import struct
from typing import BinaryIO

import numpy as np

from .basis import basis_from_dict
from .fpca import FPCAResult
from .model import MPBModel

__all__ = [
    "write_tensor",
    "read_tensor",
    "write_model",
    "read_model",
    "write_eigen",
    "read_eigen",
    "peek_kind",
]

TENSOR_MAGIC = b"MPBT"
MODEL_MAGIC = b"MPBM"
EIGEN_MAGIC = b"MPBE"
FORMAT_VERSION = 1


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ValueError(f"truncated file while reading {what}")
    return data


def _check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite values in {what}")
    return arr


def _write_payload(fh: BinaryIO, arr: np.ndarray) -> None:
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_payload(fh: BinaryIO, shape: tuple[int, ...], what: str) -> np.ndarray:
    count = int(np.prod(shape)) if shape else 1
    data = _read_exact(fh, 8 * count, what)
    arr = np.frombuffer(data, dtype="<f8").astype(float).reshape(shape)
    return _check_finite(arr, what)


def write_tensor(path, array: np.ndarray) -> None:
    """Write a dense float64 tensor with its dimension header."""
    arr = np.asarray(array, dtype=float)
    if arr.ndim < 1:
        raise ValueError("tensor must have at least one mode")
    _check_finite(arr, "tensor payload")
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<BB", FORMAT_VERSION, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        _write_payload(fh, arr)


def read_tensor(path) -> np.ndarray:
    """Read a tensor written by :func:`write_tensor`, validating the header."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != TENSOR_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {TENSOR_MAGIC!r}")
        version, ndim = struct.unpack("<BB", _read_exact(fh, 2, "header"))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported tensor format version {version}")
        if ndim < 1:
            raise ValueError("tensor must have at least one mode")
        dims = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim, "dimensions"))
        if any(d < 1 for d in dims):
            raise ValueError(f"invalid dimensions {dims}")
        arr = _read_payload(fh, tuple(dims), "tensor payload")
        if fh.read(1):
            raise ValueError("trailing bytes after tensor payload")
    return arr


def _write_envelope(path, magic: bytes, header: dict, payloads: list[np.ndarray]) -> None:
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<B", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in payloads:
            _write_payload(fh, arr)


def _read_envelope(path, magic: bytes, what: str) -> tuple[dict, BinaryIO]:
    fh = open(path, "rb")
    try:
        got = _read_exact(fh, 4, "magic")
        if got != magic:
            raise ValueError(f"bad magic {got!r}, expected {magic!r}")
        (version,) = struct.unpack("<B", _read_exact(fh, 1, "version"))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported {what} format version {version}")
        (hlen,) = struct.unpack("<I", _read_exact(fh, 4, "header length"))
        header = json.loads(_read_exact(fh, hlen, "header"))
        return header, fh
    except Exception:
        fh.close()
        raise


def write_model(path, model: MPBModel) -> None:
    """Serialize a fitted model: JSON header plus coefficient payloads."""
    header = {
        "kind": "mpb-model",
        "bases": [b.to_dict() for b in model.bases],
        "rank": model.rank,
        "n_subjects": model.n_subjects,
        "coef_shapes": [list(c.shape) for c in model.coefs],
        "mean": None,
    }
    payloads = [*model.coefs, model.subject_coefs]
    if model.mean_values is not None:
        header["mean"] = {"shape": list(model.mean_values.shape)}
        for g in model.mean_grids:
            payloads.append(np.asarray(g, dtype=float))
        payloads.append(model.mean_values)
    _write_envelope(path, MODEL_MAGIC, header, payloads)


def read_model(path) -> MPBModel:
    header, fh = _read_envelope(path, MODEL_MAGIC, "model")
    with fh:
        bases = [basis_from_dict(spec) for spec in header["bases"]]
        k = int(header["rank"])
        n = int(header["n_subjects"])
        coefs = [
            _read_payload(fh, tuple(shape), f"coefficients {d}")
            for d, shape in enumerate(header["coef_shapes"])
        ]
        subject_coefs = _read_payload(fh, (n, k), "subject coefficients")
        mean_grids = mean_values = None
        if header.get("mean") is not None:
            shape = tuple(header["mean"]["shape"])
            mean_grids = [_read_payload(fh, (s,), "mean grid") for s in shape]
            mean_values = _read_payload(fh, shape, "mean values")
        if fh.read(1):
            raise ValueError("trailing bytes after model payload")
    return MPBModel(
        bases=bases,
        coefs=coefs,
        subject_coefs=subject_coefs,
        mean_grids=mean_grids,
        mean_values=mean_values,
    )


def write_eigen(path, result: FPCAResult) -> None:
    """Serialize an FPCA result (eigen coordinates, variances, scores)."""
    if result.scores is None:
        raise ValueError("scores must be computed before serializing")
    header = {
        "kind": "mpb-eigen",
        "rank": result.s.shape[0],
        "n_components": result.n_components,
        "n_subjects": result.scores.shape[0],
        "lambda": float(result.lam),
    }
    _write_envelope(
        path, EIGEN_MAGIC, header, [result.s, result.nu, result.scores, result.var_explained]
    )


def read_eigen(path) -> FPCAResult:
    header, fh = _read_envelope(path, EIGEN_MAGIC, "eigen")
    with fh:
        k = int(header["rank"])
        kk = int(header["n_components"])
        n = int(header["n_subjects"])
        s = _read_payload(fh, (k, kk), "eigenvector coordinates")
        nu = _read_payload(fh, (kk,), "eigenvalues")
        sc = _read_payload(fh, (n, kk), "scores")
        var = _read_payload(fh, (kk,), "variance fractions")
        if fh.read(1):
            raise ValueError("trailing bytes after eigen payload")
    return FPCAResult(s=s, nu=nu, scores=sc, lam=float(header["lambda"]), var_explained=var)


def peek_kind(path) -> str:
    """Identify a file by its magic bytes: 'tensor', 'model' or 'eigen'."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    kinds = {TENSOR_MAGIC: "tensor", MODEL_MAGIC: "model", EIGEN_MAGIC: "eigen"}
    if magic not in kinds:
        raise ValueError(f"bad magic {magic!r}")
    return kinds[magic]
