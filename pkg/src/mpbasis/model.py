"""Continuous representations built from marginal product basis functions.

An :class:`MPBModel` bundles the marginal basis systems, one coefficient
matrix per dimension and the per-subject coefficients. Each basis function is
a product of one smooth function per dimension, which makes inner products,
Laplacian penalties and projections of new gridded data computable from
marginal quantities alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import basis as basis_mod
from .errors import NumericalError
from .tensors import gram_of_khatri_rao, mttkrp

__all__ = ["MPBModel"]


def _grids_equal(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


@dataclass
class MPBModel:
    """Rank-K marginal product representation of a functional sample.

    Parameters
    ----------
    bases : list of marginal bases
        One basis system per dimension.
    coefs : list of ndarray
        Per-dimension coefficient matrices, each ``rank(basis_d) x K``.
    subject_coefs : ndarray
        ``N x K`` coefficients expressing each subject over the K product
        functions.
    mean_grids, mean_values : optional
        Gridded mean that was subtracted before fitting. It is added back
        only when evaluating on the identical grid; evaluation on any other
        grid raises instead of silently interpolating the mean.
    """

    bases: list
    coefs: list[np.ndarray]
    subject_coefs: np.ndarray
    mean_grids: list[np.ndarray] | None = None
    mean_values: np.ndarray | None = None

    def __post_init__(self) -> None:
        if len(self.bases) != len(self.coefs):
            raise ValueError("one coefficient matrix per basis is required")
        if len(self.bases) == 0:
            raise ValueError("at least one dimension is required")
        self.coefs = [np.asarray(c, dtype=float) for c in self.coefs]
        self.subject_coefs = np.asarray(self.subject_coefs, dtype=float)
        k = self.subject_coefs.shape[1] if self.subject_coefs.ndim == 2 else -1
        if k < 1:
            raise ValueError("subject_coefs must be an N x K matrix with K >= 1")
        for d, (b, c) in enumerate(zip(self.bases, self.coefs)):
            if c.shape != (b.rank, k):
                raise ValueError(
                    f"coefficient matrix {d} has shape {c.shape}, expected ({b.rank}, {k})"
                )
        if (self.mean_grids is None) != (self.mean_values is None):
            raise ValueError("mean_grids and mean_values must be given together")
        if self.mean_values is not None:
            self.mean_grids = [np.asarray(g, dtype=float) for g in self.mean_grids]
            self.mean_values = np.asarray(self.mean_values, dtype=float)
            expect = tuple(len(g) for g in self.mean_grids)
            if self.mean_values.shape != expect:
                raise ValueError(
                    f"mean values shape {self.mean_values.shape} does not match grids {expect}"
                )

    @property
    def n_dims(self) -> int:
        return len(self.bases)

    @property
    def rank(self) -> int:
        return self.subject_coefs.shape[1]

    @property
    def n_subjects(self) -> int:
        return self.subject_coefs.shape[0]

    def marginal_values(self, grids: Sequence[np.ndarray], deriv: int = 0) -> list[np.ndarray]:
        """Per-dimension evaluations of the K marginal functions on grids."""
        if len(grids) != self.n_dims:
            raise ValueError(f"expected {self.n_dims} grids, got {len(grids)}")
        return [
            b.evaluate(np.asarray(g, dtype=float), deriv) @ c
            for b, c, g in zip(self.bases, self.coefs, grids)
        ]

    def evaluate_basis(self, points: np.ndarray) -> np.ndarray:
        """Evaluate the K product basis functions at scattered points.

        ``points`` is ``n_points x D``; entry ``(i, k)`` of the result is the
        product over dimensions of the k-th marginal function at ``points[i]``.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.n_dims:
            raise ValueError(f"points must have {self.n_dims} columns, got {pts.shape[1]}")
        out = np.ones((pts.shape[0], self.rank))
        for d, (b, c) in enumerate(zip(self.bases, self.coefs)):
            out *= b.evaluate(pts[:, d]) @ c
        return out

    def evaluate_subjects(self, grids: Sequence[np.ndarray]) -> np.ndarray:
        """Reconstruct every subject on a tensor grid.

        Returns a ``(len(g_1), ..., len(g_D), N)`` array. When a stored mean
        is present the grids must match the mean grid exactly.
        """
        xis = self.marginal_values(grids)
        letters = "abcdefgh"[: self.n_dims]
        spec = ",".join(c + "z" for c in letters) + ",nz->" + letters + "n"
        out = np.einsum(spec, *xis, self.subject_coefs, optimize=True)
        if self.mean_values is not None:
            if not _grids_equal([np.asarray(g, dtype=float) for g in grids], self.mean_grids):
                raise ValueError(
                    "a gridded mean is stored but the evaluation grid differs from "
                    "the mean grid; evaluate the mean separately instead"
                )
            out = out + self.mean_values[..., None]
        return out

    def gram_zeta(self) -> np.ndarray:
        """K x K matrix of pairwise inner products of the product functions.

        Entry ``(i, j)`` is the product over dimensions of the marginal
        quadratic forms through each basis Gram matrix.
        """
        out = np.ones((self.rank, self.rank))
        for b, c in zip(self.bases, self.coefs):
            out *= c.T @ basis_mod.gram_matrix(b) @ c
        return 0.5 * (out + out.T)

    def laplacian_penalty_zeta(self) -> np.ndarray:
        """K x K matrix of inner products of Laplacians of the product functions.

        Assembled from marginal Gram, second-derivative penalty, and cross
        matrices. The same-dimension terms use the penalty forms; the mixed
        terms pair a cross form with a transposed cross form, which is what
        integration by parts of the mixed partials yields when boundary terms
        do not vanish. The result is symmetric PSD up to roundoff.
        """
        op2 = basis_mod.PenaltyOperator(order=2)
        j_forms = [c.T @ basis_mod.gram_matrix(b) @ c for b, c in zip(self.bases, self.coefs)]
        r_forms = [
            c.T @ basis_mod.penalty_matrix(b, op2) @ c for b, c in zip(self.bases, self.coefs)
        ]
        e_mats = [basis_mod.cross_matrix(b) for b in self.bases]
        e_forms = [c.T @ e @ c for c, e in zip(self.coefs, e_mats)]
        out = np.zeros((self.rank, self.rank))
        for d in range(self.n_dims):
            term = r_forms[d].copy()
            for b in range(self.n_dims):
                if b != d:
                    term *= j_forms[b]
            out += term
        for d in range(self.n_dims):
            for a in range(self.n_dims):
                if a == d:
                    continue
                term = e_forms[d].T * e_forms[a]
                for b in range(self.n_dims):
                    if b != d and b != a:
                        term *= j_forms[b]
                out += term
        asym = np.linalg.norm(out - out.T)
        if asym > 1e-8 * max(np.linalg.norm(out), 1e-300):
            raise NumericalError(
                f"Laplacian penalty assembly lost symmetry (relative asymmetry {asym:.2e})"
            )
        return 0.5 * (out + out.T)

    def project(
        self, y_new: np.ndarray, grids: Sequence[np.ndarray]
    ) -> tuple[np.ndarray, np.ndarray]:
        """Least-squares coefficients of new gridded observations.

        ``y_new`` is either a single ``(n_1, ..., n_D)`` array or a stack
        ``(n_1, ..., n_D, N)``. Returns ``(coefs, residual_norms)`` where
        ``coefs`` is ``N x K`` (or ``(K,)`` for a single observation) in the
        discrete inner product of the evaluated basis.
        """
        y = np.asarray(y_new, dtype=float)
        single = y.ndim == self.n_dims
        if single:
            y = y[..., None]
        xis = self.marginal_values(grids)
        expect = tuple(x.shape[0] for x in xis)
        if y.shape[:-1] != expect:
            raise ValueError(f"data shape {y.shape[:-1]} does not match grids {expect}")
        gram = gram_of_khatri_rao(xis)
        rhs = mttkrp(y, xis, self.n_dims)  # N x K
        try:
            chol = cho_factor(gram)
            diag = np.diag(chol[0])
            if diag.min() <= 1e-7 * diag.max():
                raise LinAlgError("effectively singular")
        except LinAlgError as exc:
            raise NumericalError(
                "evaluated product basis is numerically dependent on this grid; "
                "projection is not unique"
            ) from exc
        coefs = cho_solve(chol, rhs.T).T
        y_sq = np.sum(y**2, axis=tuple(range(self.n_dims)))
        res_sq = y_sq - 2.0 * np.sum(coefs * rhs, axis=1) + np.sum(coefs * (coefs @ gram), axis=1)
        resid = np.sqrt(np.maximum(res_sq, 0.0))
        if single:
            return coefs[0], resid[0]
        return coefs, resid
