"""Dense multiway-array kernels: unfoldings, mode products, Khatri-Rao algebra.

Conventions, fixed once for the whole package:

* Tensors are C-contiguous ``float64`` numpy arrays (last index varies fastest
  in memory). Modes are 0-based.
* ``unfold(t, d)`` produces the ``n_d x prod(other dims)`` matrix whose columns
  are ordered with *earlier* modes varying fastest, so that a rank-1 tensor
  built from factor columns ``a_0, ..., a_{P-1}`` unfolds along mode ``d`` to
  ``a_d`` times the Kronecker row built from the remaining factors in
  *descending* mode order.
* ``khatri_rao([A, B])`` stacks columnwise Kronecker products ``kron(a_k, b_k)``
  with the second argument's index varying fastest.

All functions are pure and never mutate their inputs.
"""

from __future__ import annotations

from string import ascii_lowercase
from typing import Sequence

import numpy as np

__all__ = [
    "unfold",
    "fold",
    "mode_multiply",
    "multi_mode_multiply",
    "khatri_rao",
    "gram_of_khatri_rao",
    "mttkrp",
    "cp_to_tensor",
    "cp_norm_sq",
    "cp_inner",
]


def _check_mode(tensor: np.ndarray, mode: int) -> None:
    if not 0 <= mode < tensor.ndim:
        raise ValueError(f"mode {mode} out of range for a {tensor.ndim}-mode tensor")


def unfold(tensor: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding with earlier remaining modes varying fastest."""
    t = np.asarray(tensor)
    _check_mode(t, mode)
    return np.reshape(np.moveaxis(t, mode, 0), (t.shape[mode], -1), order="F")


def fold(matrix: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold` for a tensor of the given full shape."""
    shape = tuple(int(s) for s in shape)
    if not 0 <= mode < len(shape):
        raise ValueError(f"mode {mode} out of range for shape {shape}")
    lead = (shape[mode],) + tuple(s for i, s in enumerate(shape) if i != mode)
    m = np.asarray(matrix)
    if m.size != int(np.prod(shape)):
        raise ValueError(f"cannot fold {m.shape} into shape {shape}")
    return np.moveaxis(np.reshape(m, lead, order="F"), 0, mode)


def mode_multiply(tensor: np.ndarray, matrix: np.ndarray, mode: int) -> np.ndarray:
    """Contract ``matrix`` (shape ``r x n_mode``) against mode ``mode``.

    Equivalent to ``fold(matrix @ unfold(tensor, mode), mode, new_shape)``.
    """
    t = np.asarray(tensor)
    m = np.asarray(matrix)
    _check_mode(t, mode)
    if m.ndim != 2 or m.shape[1] != t.shape[mode]:
        raise ValueError(
            f"matrix of shape {m.shape} does not match mode {mode} of size {t.shape[mode]}"
        )
    return np.moveaxis(np.tensordot(m, t, axes=(1, mode)), 0, mode)


def multi_mode_multiply(
    tensor: np.ndarray,
    matrices: Sequence[np.ndarray],
    modes: Sequence[int] | None = None,
) -> np.ndarray:
    """Apply :func:`mode_multiply` for several (matrix, mode) pairs in order."""
    if modes is None:
        modes = range(len(matrices))
    out = np.asarray(tensor)
    for m, d in zip(matrices, modes):
        out = mode_multiply(out, m, d)
    return out


def _check_factor_columns(mats: Sequence[np.ndarray]) -> int:
    if len(mats) == 0:
        raise ValueError("need at least one factor matrix")
    k = mats[0].shape[1]
    for i, m in enumerate(mats):
        if m.ndim != 2 or m.shape[1] != k:
            raise ValueError(f"factor {i} has {m.shape[1]} columns, expected {k}")
    return k


def khatri_rao(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Columnwise Kronecker product; the last listed factor varies fastest."""
    k = _check_factor_columns(mats)
    out = np.asarray(mats[0])
    for m in mats[1:]:
        out = (out[:, None, :] * np.asarray(m)[None, :, :]).reshape(-1, k)
    return out


def gram_of_khatri_rao(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Gram matrix of the Khatri-Rao product without materializing it.

    Uses the Hadamard identity: the Gram of a columnwise Kronecker stack is the
    elementwise product of the per-factor Gram matrices.
    """
    _check_factor_columns(mats)
    out = None
    for m in mats:
        g = np.asarray(m).T @ np.asarray(m)
        out = g if out is None else out * g
    return out


def mttkrp(tensor: np.ndarray, mats: Sequence[np.ndarray], mode: int) -> np.ndarray:
    """Matricized tensor times Khatri-Rao product along ``mode``.

    ``mats`` holds one factor per tensor mode except ``mode``, in ascending
    mode order. The result equals
    ``unfold(tensor, mode) @ khatri_rao(mats reversed)`` but is contracted
    mode by mode so the Khatri-Rao product is never formed.
    """
    t = np.asarray(tensor)
    _check_mode(t, mode)
    if len(mats) != t.ndim - 1:
        raise ValueError(f"expected {t.ndim - 1} factors, got {len(mats)}")
    other = [d for d in range(t.ndim) if d != mode]
    for d, m in zip(other, mats):
        m = np.asarray(m)
        if m.ndim != 2 or m.shape[0] != t.shape[d]:
            raise ValueError(
                f"factor for mode {d} has shape {m.shape}, expected ({t.shape[d]}, K)"
            )
    letters = ascii_lowercase[: t.ndim]
    inputs = [letters] + [letters[d] + "z" for d in other]
    out = letters[mode] + "z"
    return np.einsum(",".join(inputs) + "->" + out, t, *mats, optimize=True)


def cp_to_tensor(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Materialize the sum of rank-1 outer products defined by factor columns."""
    _check_factor_columns(factors)
    letters = ascii_lowercase[: len(factors)]
    spec = ",".join(c + "z" for c in letters) + "->" + letters
    return np.einsum(spec, *factors, optimize=True)


def cp_norm_sq(factors: Sequence[np.ndarray]) -> float:
    """Squared Frobenius norm of the represented tensor, via Gram identities."""
    return float(np.sum(gram_of_khatri_rao(factors)))


def cp_inner(tensor: np.ndarray, factors: Sequence[np.ndarray]) -> float:
    """Frobenius inner product of a dense tensor with a CP-format tensor."""
    t = np.asarray(tensor)
    if len(factors) != t.ndim:
        raise ValueError(f"expected {t.ndim} factors, got {len(factors)}")
    last = t.ndim - 1
    return float(np.sum(mttkrp(t, list(factors[:last]), last) * factors[last]))
