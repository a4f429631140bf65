"""Data reduction: SVD guards, compression isometry, penalty transport."""

import numpy as np
import pytest

from mpbasis import tensors as T
from mpbasis.basis import BSplineBasis, FourierBasis, PenaltyOperator, penalty_matrix
from mpbasis.errors import NumericalError
from mpbasis.reduction import (
    back_transform,
    compress,
    decompress,
    factorize,
    forward_transform,
    penalty_transform,
)


def test_factorize_identity():
    fac = factorize(np.eye(4))
    assert np.allclose(fac.s, np.ones(4))
    assert np.allclose(np.abs(fac.u), np.eye(4), atol=1e-14)
    assert np.allclose(fac.u @ fac.vt, np.eye(4), atol=1e-14)


def test_factorize_reconstruction():
    rng = np.random.default_rng(0)
    phi = rng.standard_normal((50, 10))
    fac = factorize(phi)
    rec = fac.u @ (fac.s[:, None] * fac.vt)
    assert np.linalg.norm(rec - phi) < 1e-10 * np.linalg.norm(phi)
    assert np.all(np.diff(fac.s) <= 0)
    assert np.abs(fac.u.T @ fac.u - np.eye(10)).max() < 1e-12
    assert np.abs(fac.vt @ fac.vt.T - np.eye(10)).max() < 1e-12


def test_factorize_fourier_singular_values_clustered():
    # sampled orthonormal functions: every singular value close to sqrt(n)
    basis = FourierBasis((0.0, 1.0), 9)
    n = 200
    phi = basis.evaluate(np.linspace(0, 1, n))
    fac = factorize(phi)
    assert np.abs(fac.s / np.sqrt(n) - 1.0).max() < 0.05


def test_factorize_rank_deficient_names_dimension():
    phi = np.ones((10, 2))  # duplicate columns
    with pytest.raises(NumericalError, match="dimension 1"):
        factorize(phi, dim=1)


def test_compress_recovers_core_on_the_range():
    rng = np.random.default_rng(1)
    facs = [factorize(rng.standard_normal((n, m))) for n, m in [(12, 4), (10, 3)]]
    x = rng.standard_normal((4, 3, 5))
    y = T.multi_mode_multiply(x, [f.u for f in facs], [0, 1])
    assert np.abs(compress(y, facs) - x).max() < 1e-12


def test_compress_pythagoras():
    rng = np.random.default_rng(2)
    facs = [factorize(rng.standard_normal((n, m))) for n, m in [(15, 5), (12, 4)]]
    y = rng.standard_normal((15, 12, 6))
    g = compress(y, facs)
    proj = decompress(g, facs)
    lhs = np.sum(y**2)
    rhs = np.sum(g**2) + np.sum((y - proj) ** 2)
    assert abs(lhs - rhs) < 1e-9 * lhs


def test_compress_zero_tensor():
    rng = np.random.default_rng(3)
    facs = [factorize(rng.standard_normal((8, 3)))]
    assert np.array_equal(compress(np.zeros((8, 2)), facs), np.zeros((3, 2)))


def test_compress_dimension_mismatch():
    rng = np.random.default_rng(4)
    facs = [factorize(rng.standard_normal((8, 3)))]
    with pytest.raises(ValueError, match="size"):
        compress(np.zeros((7, 2)), facs)
    with pytest.raises(ValueError, match="modes"):
        compress(np.zeros((8, 2, 3)), facs)


def test_compress_order_is_irrelevant():
    rng = np.random.default_rng(5)
    facs = [factorize(rng.standard_normal((n, 3))) for n in (9, 8, 7)]
    y = rng.standard_normal((9, 8, 7, 4))
    ref = compress(y, facs)
    out = y
    for d in (2, 0, 1):  # arbitrary order
        out = T.mode_multiply(out, facs[d].u.T, d)
    assert np.abs(out - ref).max() < 1e-12


def test_penalty_transform_zero():
    fac = factorize(np.random.default_rng(6).standard_normal((9, 4)))
    assert np.array_equal(penalty_transform(fac, np.zeros((4, 4))), np.zeros((4, 4)))


def test_penalty_transform_scaled_orthonormal():
    rng = np.random.default_rng(7)
    q = np.linalg.qr(rng.standard_normal((10, 4)))[0]
    s = 2.5
    fac = factorize(s * q)
    t = penalty_transform(fac, np.eye(4))
    assert np.abs(t - np.eye(4) / s**2).max() < 1e-12


def test_penalty_transform_trace_identity():
    rng = np.random.default_rng(8)
    phi = rng.standard_normal((20, 6))
    fac = factorize(phi)
    r = rng.standard_normal((6, 6))
    r = r @ r.T
    t = penalty_transform(fac, r)
    c = rng.standard_normal((6, 3))
    c_tilde = forward_transform(fac, c)
    lhs = np.trace(c_tilde.T @ t @ c_tilde)
    rhs = np.trace(c.T @ r @ c)
    assert abs(lhs - rhs) < 1e-10 * abs(rhs)


def test_back_transform_round_trip():
    rng = np.random.default_rng(9)
    fac = factorize(rng.standard_normal((15, 5)))
    c = rng.standard_normal((5, 4))
    assert np.abs(back_transform(fac, forward_transform(fac, c)) - c).max() < 1e-12


def test_back_transform_orthonormal_phi():
    rng = np.random.default_rng(10)
    q = np.linalg.qr(rng.standard_normal((12, 4)))[0]
    fac = factorize(q)
    c_tilde = rng.standard_normal((4, 2))
    assert np.allclose(back_transform(fac, c_tilde), fac.vt.T @ c_tilde, atol=1e-12)


def test_evaluation_identity():
    rng = np.random.default_rng(11)
    phi = rng.standard_normal((18, 6))
    fac = factorize(phi)
    c = rng.standard_normal((6, 3))
    c_tilde = forward_transform(fac, c)
    assert np.abs(phi @ c - fac.u @ c_tilde).max() < 1e-10


def test_objective_equivalence_identity():
    # || Y - model ||^2 == || G - compressed model ||^2 + || Y - proj Y ||^2
    rng = np.random.default_rng(12)
    for n_dims in (2, 3):
        dims = [9, 8, 7][:n_dims]
        ranks = [4, 3, 3][:n_dims]
        n_subj, k = 5, 2
        phis = [rng.standard_normal((n, m)) for n, m in zip(dims, ranks)]
        facs = [factorize(p) for p in phis]
        y = rng.standard_normal((*dims, n_subj))
        c_tilde = [rng.standard_normal((m, k)) for m in ranks]
        b = rng.standard_normal((n_subj, k))
        cs = [back_transform(f, ct) for f, ct in zip(facs, c_tilde)]
        model_grid = T.cp_to_tensor([p @ c for p, c in zip(phis, cs)] + [b])
        lhs = np.sum((y - model_grid) ** 2)
        g = compress(y, facs)
        mid = np.sum((g - T.cp_to_tensor(c_tilde + [b])) ** 2)
        resid = np.sum((y - decompress(g, facs)) ** 2)
        assert abs(lhs - (mid + resid)) < 1e-8 * lhs


def test_penalty_equivalence_against_dense_quadrature():
    # tr(Ct' T Ct) matches the trapezoid value of the integrated squared
    # second derivative of each represented marginal function
    rng = np.random.default_rng(13)
    basis = BSplineBasis((0.0, 1.0), 8)
    grid = np.linspace(0, 1, 30)
    phi = basis.evaluate(grid)
    fac = factorize(phi)
    r = penalty_matrix(basis, PenaltyOperator(2))
    t_mat = penalty_transform(fac, r)
    c = rng.standard_normal((8, 3))
    c_tilde = forward_transform(fac, c)
    lhs = np.trace(c_tilde.T @ t_mat @ c_tilde)
    x = np.linspace(0, 1, 100_000)
    d2 = basis.evaluate(x, 2) @ c
    rhs = float(np.trapezoid((d2**2).sum(axis=1), x))
    assert abs(lhs - rhs) < 1e-6 * abs(rhs)
