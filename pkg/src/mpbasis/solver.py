"""Penalized CP decomposition of the compressed data tensor.

Block coordinate descent over the factor matrices: each grid-mode factor
solves a Sylvester equation (least squares plus a quadratic roughness
penalty), and the subject-coefficient block solves either a closed-form ridge
problem or, for the lasso penalty, an ADMM splitting with soft thresholding.
A small proximal term keeps every subproblem strongly convex, which makes the
objective trace nonincreasing.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh

from .errors import NumericalError
from .tensors import cp_inner, cp_norm_sq, cp_to_tensor, gram_of_khatri_rao, mttkrp, unfold

__all__ = [
    "SolverConfig",
    "SolverState",
    "objective",
    "sylvester_solve",
    "soft_threshold",
    "update_factor",
    "update_b_ridge",
    "update_b_admm",
    "fit",
]

#: Above this many tensor entries the residual is evaluated through Gram
#: identities instead of materializing the rank-K reconstruction.
MATERIALIZE_LIMIT = 4_000_000


@dataclass
class SolverConfig:
    """Settings for one decomposition run.

    Parameters
    ----------
    rank : int
        Number of rank-1 components K.
    lambda_marginal : sequence of float
        Roughness weights, one per grid dimension. A scalar is broadcast.
    lambda_coef : float
        Weight of the subject-coefficient penalty.
    coef_penalty : {"ridge", "lasso"}
        Squared Frobenius or elementwise l1 penalty on the coefficients.
    max_outer_iters, outer_tol
        Sweep cap and relative objective-change stopping rule.
    admm_tol_primal, admm_tol_dual, admm_max_iters
        Inner ADMM stopping controls (tolerances are scaled by sqrt(N*K)).
    proximal_mu : float
        Strong-convexity shift added to each factor update.
    gamma : float or None
        ADMM penalty weight; ``None`` selects ``norm(W'W, 'fro') / K``.
    init : {"random", "hosvd"}
        Random unit-norm columns, or leading singular vectors per unfolding.
    seed : int
        Seed for all solver randomness.
    """

    rank: int
    lambda_marginal: Sequence[float] | float = 0.0
    lambda_coef: float = 0.0
    coef_penalty: str = "ridge"
    max_outer_iters: int = 200
    outer_tol: float = 1e-8
    admm_tol_primal: float = 1e-6
    admm_tol_dual: float = 1e-6
    admm_max_iters: int = 500
    proximal_mu: float = 1e-8
    gamma: float | None = None
    init: str = "random"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")
        if self.coef_penalty not in ("ridge", "lasso"):
            raise ValueError(f"unknown coef_penalty {self.coef_penalty!r}")
        if self.init not in ("random", "hosvd"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.lambda_coef < 0:
            raise ValueError("lambda_coef must be >= 0")
        for name in ("outer_tol", "admm_tol_primal", "admm_tol_dual"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.proximal_mu < 0:
            raise ValueError("proximal_mu must be >= 0")
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be > 0 when given")

    def marginal_weights(self, n_dims: int) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(self.lambda_marginal, dtype=float))
        if lam.size == 1:
            lam = np.full(n_dims, lam[0])
        if lam.shape != (n_dims,):
            raise ValueError(
                f"lambda_marginal has {lam.size} entries, expected {n_dims}"
            )
        if np.any(lam < 0):
            raise ValueError("marginal penalty weights must be >= 0")
        return lam


@dataclass
class SolverState:
    """Factor matrices and bookkeeping for one decomposition."""

    c_tilde: list[np.ndarray]
    b: np.ndarray
    z: np.ndarray
    a_star: np.ndarray
    objective_trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    converged: bool = False
    iters: int = 0
    admm_converged: bool = True

    @property
    def rank(self) -> int:
        return self.b.shape[1]

    def factors(self) -> list[np.ndarray]:
        return list(self.c_tilde) + [self.b]


def soft_threshold(x: np.ndarray, kappa: float) -> np.ndarray:
    """Elementwise ``sign(x) * max(|x| - kappa, 0)``."""
    if kappa < 0:
        raise ValueError("threshold must be >= 0")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - kappa, 0.0)


def sylvester_solve(m: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Solve ``X m + p X = q`` for symmetric ``m`` (K x K) and ``p`` (n x n).

    Both matrices are diagonalized with symmetric eigendecompositions, so the
    solve reduces to elementwise division by sums of eigenvalue pairs. With
    ``m`` positive definite and ``p`` positive semidefinite every denominator
    is positive.
    """
    m = np.asarray(m, dtype=float)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if q.shape != (p.shape[0], m.shape[0]):
        raise ValueError(
            f"right-hand side shape {q.shape} does not match ({p.shape[0]}, {m.shape[0]})"
        )
    alpha, qm = eigh(m)
    beta, pm = eigh(p)
    den = beta[:, None] + alpha[None, :]
    scale = max(abs(alpha).max(initial=0.0), abs(beta).max(initial=0.0), 1e-300)
    if np.min(np.abs(den)) <= 1e-14 * scale:
        raise NumericalError(
            "Sylvester spectra overlap (near-zero eigenvalue sum); "
            "raise proximal_mu to shift the factor Gram away from singularity"
        )
    return pm @ ((pm.T @ q @ qm) / den) @ qm.T


def _penalty_value(state: SolverState, t_mats, lam_marg, config: SolverConfig) -> float:
    val = 0.0
    for c, t, lam in zip(state.c_tilde, t_mats, lam_marg):
        if lam > 0:
            val += lam * float(np.sum(c * (t @ c)))
    if config.lambda_coef > 0:
        if config.coef_penalty == "ridge":
            val += config.lambda_coef * float(np.sum(state.b**2))
        else:
            val += config.lambda_coef * float(np.sum(np.abs(state.b)))
    return val


def _residual_sq(g_hat, factors, g_norm_sq, materialize=None) -> float:
    if materialize is None:
        materialize = g_hat.size <= MATERIALIZE_LIMIT
    if materialize:
        return float(np.sum((g_hat - cp_to_tensor(factors)) ** 2))
    val = g_norm_sq - 2.0 * cp_inner(g_hat, factors) + cp_norm_sq(factors)
    # the identity route can dip microscopically negative from cancellation
    return max(val, 0.0)


def objective(
    g_hat: np.ndarray,
    state: SolverState,
    t_mats: Sequence[np.ndarray],
    config: SolverConfig,
    materialize: bool | None = None,
) -> float:
    """Penalized least-squares objective at the current state."""
    g_hat = np.asarray(g_hat, dtype=float)
    lam_marg = config.marginal_weights(g_hat.ndim - 1)
    g_norm_sq = float(np.sum(g_hat**2))
    val = _residual_sq(g_hat, state.factors(), g_norm_sq, materialize)
    val += _penalty_value(state, t_mats, lam_marg, config)
    if not math.isfinite(val):
        raise NumericalError("objective is not finite; factor matrices diverged")
    return val


def update_factor(
    g_hat: np.ndarray,
    state: SolverState,
    d: int,
    t_d: np.ndarray,
    config: SolverConfig,
) -> np.ndarray:
    """Exact conditional minimizer for the grid-mode-``d`` factor matrix.

    Solves ``X (W'W + mu I) + lambda_d T_d X = G_(d) W + mu X_old`` where the
    Gram is assembled through the Hadamard identity and ``G_(d) W`` through a
    mode-wise contraction; the Khatri-Rao product ``W`` is never formed.
    """
    n_dims = g_hat.ndim - 1
    lam = config.marginal_weights(n_dims)[d]
    mu = config.proximal_mu
    others = [state.c_tilde[j] for j in range(n_dims) if j != d] + [state.b]
    gram = gram_of_khatri_rao(others)
    rhs = mttkrp(g_hat, others, d)
    m = gram + mu * np.eye(gram.shape[0])
    if mu > 0:
        rhs = rhs + mu * state.c_tilde[d]
    return sylvester_solve(m, lam * t_d, rhs)


def update_b_ridge(g_hat: np.ndarray, state: SolverState, config: SolverConfig) -> np.ndarray:
    """Closed-form ridge update of the subject coefficients."""
    n_dims = g_hat.ndim - 1
    gram = gram_of_khatri_rao(state.c_tilde)
    rhs = mttkrp(g_hat, state.c_tilde, n_dims)  # N x K, equals G_(D+1) W
    a = gram + config.lambda_coef * np.eye(gram.shape[0])
    try:
        chol = cho_factor(a)
        diag = np.diag(chol[0])
        if diag.min() <= 1e-7 * diag.max():
            raise LinAlgError("effectively singular")
    except LinAlgError as exc:
        raise NumericalError(
            "singular normal matrix in the coefficient update; "
            "increase lambda_coef or reduce the rank"
        ) from exc
    return cho_solve(chol, rhs.T).T


def update_b_admm(
    g_hat: np.ndarray, state: SolverState, config: SolverConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool, int]:
    """ADMM solve of the lasso-penalized subject-coefficient block.

    Splits on an auxiliary variable equal to the transposed coefficients; the
    coefficient step is elementwise soft thresholding with level
    ``lambda_coef / (2 gamma)``, the auxiliary step is a ridge solve, and the
    scaled dual accumulates the constraint violation. Stops when the primal
    and dual residuals drop below ``sqrt(N K)`` times the tolerances.

    Returns ``(b, z, a_star, converged, n_iters)``; the inputs in ``state``
    serve as warm starts and are not mutated.
    """
    n_dims = g_hat.ndim - 1
    k = state.rank
    n_subj = state.b.shape[0]
    gram = gram_of_khatri_rao(state.c_tilde)
    wty = mttkrp(g_hat, state.c_tilde, n_dims).T  # K x N, equals W' G_(D+1)'
    gamma = config.gamma if config.gamma is not None else float(np.linalg.norm(gram)) / k
    gamma = max(gamma, 1e-12)
    chol = cho_factor(gram + gamma * np.eye(k))
    kappa = config.lambda_coef / (2.0 * gamma)
    scale = math.sqrt(n_subj * k)
    b, z, a = state.b, state.z, state.a_star
    converged = False
    it = 0
    for it in range(1, config.admm_max_iters + 1):
        b = soft_threshold(z.T - a, kappa)
        z_prev = z
        z = cho_solve(chol, wty + gamma * (b + a).T)
        a = a + b - z.T
        r_primal = float(np.linalg.norm(b - z.T))
        r_dual = gamma * float(np.linalg.norm(z - z_prev))
        if r_primal <= config.admm_tol_primal * scale and r_dual <= config.admm_tol_dual * scale:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"coefficient ADMM hit {config.admm_max_iters} iterations "
            f"(primal {r_primal:.2e}, dual {r_dual:.2e}); returning last iterate",
            RuntimeWarning,
        )
    return b, z, a, converged, it


def _b_conditional_value(gram, rhs, b, config: SolverConfig) -> float:
    """Subject-block objective up to a constant: data term plus penalty."""
    val = float(np.sum(b * (b @ gram))) - 2.0 * float(np.sum(b * rhs))
    if config.coef_penalty == "ridge":
        val += config.lambda_coef * float(np.sum(b**2))
    else:
        val += config.lambda_coef * float(np.sum(np.abs(b)))
    return val


def _initialize(g_hat: np.ndarray, config: SolverConfig) -> SolverState:
    rng = np.random.default_rng(config.seed)
    k = config.rank
    shapes = g_hat.shape

    def random_unit(n: int) -> np.ndarray:
        f = rng.standard_normal((n, k))
        return f / np.linalg.norm(f, axis=0)

    factors = []
    for d, n in enumerate(shapes):
        if config.init == "hosvd":
            u = np.linalg.svd(unfold(g_hat, d), full_matrices=False)[0]
            f = u[:, : min(k, u.shape[1])]
            if f.shape[1] < k:
                f = np.hstack([f, random_unit(n)[:, : k - f.shape[1]]])
        else:
            f = random_unit(n)
        factors.append(np.ascontiguousarray(f))
    b = factors[-1]
    return SolverState(
        c_tilde=factors[:-1],
        b=b,
        z=b.T.copy(),
        a_star=np.zeros_like(b),
    )


def _gauge_normalize(state: SolverState) -> None:
    """Fix the column gauge in place: order, scale and sign conventions.

    Components are sorted by decreasing weight (product of column norms),
    every grid-mode column is rescaled to unit norm with the magnitude pushed
    into the subject coefficients, and signs are flipped so the largest-
    magnitude entry of each first-mode column is positive. The represented
    tensor is unchanged.
    """
    norms = [np.linalg.norm(c, axis=0) for c in state.c_tilde]
    weights = np.linalg.norm(state.b, axis=0) * np.prod(norms, axis=0)
    order = np.argsort(-weights, kind="stable")
    state.b = state.b[:, order]
    scale = np.ones(state.rank)
    for d, c in enumerate(state.c_tilde):
        c = c[:, order]
        nd = norms[d][order]
        nz = nd > 0
        c[:, nz] /= nd[nz]
        scale[nz] *= nd[nz]
        state.c_tilde[d] = c
    state.b *= scale
    lead = state.c_tilde[0]
    signs = np.sign(lead[np.argmax(np.abs(lead), axis=0), np.arange(state.rank)])
    signs[signs == 0] = 1.0
    state.c_tilde[0] = lead * signs
    state.b *= signs
    # the split variable tracks the coefficients; the stale dual is restarted
    state.z = state.b.T.copy()
    state.a_star = np.zeros_like(state.b)


def fit(
    g_hat: np.ndarray,
    t_mats: Sequence[np.ndarray],
    config: SolverConfig,
    initial_state: SolverState | None = None,
) -> SolverState:
    """Run block coordinate descent to convergence.

    Each sweep updates the grid-mode factors in ascending mode order and the
    subject coefficients last, then records the objective. Iteration stops
    when the relative objective change falls below ``config.outer_tol`` or
    after ``config.max_outer_iters`` sweeps. The returned state is gauge
    normalized (see :func:`_gauge_normalize`); the objective trace refers to
    the pre-normalization iterates, whose represented tensor is identical.

    Parameters
    ----------
    g_hat : ndarray
        Compressed data tensor with the subject mode last.
    t_mats : sequence of ndarray
        Transported penalty matrices, one per grid mode.
    config : SolverConfig
    initial_state : SolverState, optional
        Warm start; factor shapes must match. Overrides ``config.init``.
    """
    g_hat = np.ascontiguousarray(np.asarray(g_hat, dtype=float))
    n_dims = g_hat.ndim - 1
    if n_dims < 1:
        raise ValueError("expected at least one grid mode plus the subject mode")
    if len(t_mats) != n_dims:
        raise ValueError(f"expected {n_dims} penalty matrices, got {len(t_mats)}")
    for d, t in enumerate(t_mats):
        if t.shape != (g_hat.shape[d], g_hat.shape[d]):
            raise ValueError(
                f"penalty matrix {d} has shape {t.shape}, expected square of size {g_hat.shape[d]}"
            )
    config.marginal_weights(n_dims)
    m_total = int(np.prod(g_hat.shape[:-1]))
    if config.rank > m_total:
        warnings.warn(
            f"rank {config.rank} exceeds the compressed dimension {m_total}; "
            "the decomposition is overparameterized",
            RuntimeWarning,
        )
    if initial_state is not None:
        state = SolverState(
            c_tilde=[c.copy() for c in initial_state.c_tilde],
            b=initial_state.b.copy(),
            z=initial_state.z.copy(),
            a_star=initial_state.a_star.copy(),
        )
        for d in range(n_dims):
            if state.c_tilde[d].shape != (g_hat.shape[d], config.rank):
                raise ValueError("warm-start factor shapes do not match the tensor and rank")
        if state.b.shape != (g_hat.shape[-1], config.rank):
            raise ValueError("warm-start coefficient shape does not match")
    else:
        state = _initialize(g_hat, config)

    trace = [objective(g_hat, state, t_mats, config)]
    f_prev = trace[0]
    # objective changes below 1e-12 of the data energy are numerical noise,
    # so the relative-change denominator is floored at that scale
    f_floor = 1e-12 * float(np.sum(g_hat**2))
    state.admm_converged = True
    it = 0
    for it in range(1, config.max_outer_iters + 1):
        for d in range(n_dims):
            state.c_tilde[d] = update_factor(g_hat, state, d, t_mats[d], config)
            if not np.all(np.isfinite(state.c_tilde[d])):
                raise NumericalError(f"factor update for mode {d} produced non-finite values")
        if config.coef_penalty == "ridge" or config.lambda_coef == 0.0:
            state.b = update_b_ridge(g_hat, state, config)
            state.z = state.b.T.copy()
        else:
            gram = gram_of_khatri_rao(state.c_tilde)
            rhs = mttkrp(g_hat, state.c_tilde, n_dims)
            before = _b_conditional_value(gram, rhs, state.b, config)
            b_new, z_new, a_new, ok, _ = update_b_admm(g_hat, state, config)
            after = _b_conditional_value(gram, rhs, b_new, config)
            if after <= before + 1e-12 * max(1.0, abs(before)):
                state.b, state.z, state.a_star = b_new, z_new, a_new
                state.admm_converged = state.admm_converged and ok
            else:
                # inexact ADMM exit made things worse: keep the previous block
                state.z = state.b.T.copy()
        if not np.all(np.isfinite(state.b)):
            raise NumericalError("subject-coefficient update produced non-finite values")
        f_new = objective(g_hat, state, t_mats, config)
        trace.append(f_new)
        rel = abs(f_prev - f_new) / max(f_prev, f_floor, 1e-300)
        f_prev = f_new
        if rel < config.outer_tol:
            state.converged = True
            break

    state.iters = it
    state.objective_trace = np.asarray(trace)
    _gauge_normalize(state)
    return state
