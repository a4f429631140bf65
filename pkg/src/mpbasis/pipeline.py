"""End-to-end fitting: bases and grids in, continuous model out."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import basis as basis_mod
from . import reduction, solver
from .model import MPBModel
from .solver import SolverConfig, SolverState

__all__ = ["FitReport", "fit_mpb"]


@dataclass
class FitReport:
    """Summary of one fit, suitable for serializing to JSON."""

    objective_trace: np.ndarray
    iters: int
    converged: bool
    admm_converged: bool
    residual_ratio: float
    elapsed_seconds: float

    def to_dict(self) -> dict:
        return {
            "objective_trace": [float(v) for v in self.objective_trace],
            "iters": int(self.iters),
            "converged": bool(self.converged),
            "admm_converged": bool(self.admm_converged),
            "residual_ratio": float(self.residual_ratio),
            "elapsed_seconds": float(self.elapsed_seconds),
        }


def compressed_residual_ratio(g_hat: np.ndarray, state: SolverState) -> float:
    """Squared relative residual of the decomposition in compressed space."""
    g_norm_sq = float(np.sum(np.asarray(g_hat) ** 2))
    if g_norm_sq == 0.0:
        raise ValueError("data tensor has zero norm")
    res = solver._residual_sq(np.asarray(g_hat, dtype=float), state.factors(), g_norm_sq)
    return res / g_norm_sq


def fit_mpb(
    y: np.ndarray,
    grids: Sequence[np.ndarray],
    bases: Sequence,
    penalty_orders: Sequence[int],
    config: SolverConfig,
    center: bool = False,
) -> tuple[MPBModel, SolverState, FitReport]:
    """Fit a marginal product basis representation to gridded observations.

    Evaluates each basis on its grid, compresses the data tensor through the
    thin SVDs of the evaluation matrices, transports the roughness penalties,
    runs the block-coordinate solver and maps the solution back to basis
    coefficients.

    Parameters
    ----------
    y : ndarray
        Observations of shape ``(n_1, ..., n_D, N)`` with subjects last.
    grids : sequence of 1-d arrays
        Marginal grid points, lengths matching the leading dims of ``y``.
    bases : sequence of marginal bases
    penalty_orders : sequence of int
        Derivative order of the roughness penalty per dimension.
    config : SolverConfig
    center : bool
        Subtract the gridded sample mean before fitting and store it on the
        model.
    """
    y = np.asarray(y, dtype=float)
    n_dims = len(bases)
    if y.ndim != n_dims + 1:
        raise ValueError(f"data tensor has {y.ndim} modes, expected {n_dims + 1}")
    if len(grids) != n_dims or len(penalty_orders) != n_dims:
        raise ValueError("need one grid and one penalty order per dimension")
    grids = [np.asarray(g, dtype=float) for g in grids]
    for d, g in enumerate(grids):
        if g.ndim != 1 or g.size != y.shape[d]:
            raise ValueError(
                f"grid {d} has {g.size} points but the tensor mode has size {y.shape[d]}"
            )
    start = time.perf_counter()
    mean_grids = mean_values = None
    if center:
        mean_values = y.mean(axis=-1)
        mean_grids = grids
        y = y - mean_values[..., None]
    phis = [b.evaluate(g) for b, g in zip(bases, grids)]
    facs = [reduction.factorize(phi, dim=d) for d, phi in enumerate(phis)]
    t_mats = []
    for d, (b, fac) in enumerate(zip(bases, facs)):
        r = basis_mod.penalty_matrix(b, basis_mod.PenaltyOperator(order=penalty_orders[d]))
        t_mats.append(reduction.penalty_transform(fac, r))
    g_hat = reduction.compress(y, facs)
    state = solver.fit(g_hat, t_mats, config)
    coefs = [reduction.back_transform(fac, c) for fac, c in zip(facs, state.c_tilde)]
    model = MPBModel(
        bases=list(bases),
        coefs=coefs,
        subject_coefs=state.b.copy(),
        mean_grids=mean_grids,
        mean_values=mean_values,
    )
    report = FitReport(
        objective_trace=state.objective_trace,
        iters=state.iters,
        converged=state.converged,
        admm_converged=state.admm_converged,
        residual_ratio=compressed_residual_ratio(g_hat, state),
        elapsed_seconds=time.perf_counter() - start,
    )
    return model, state, report
