"""Data-driven hyperparameter selection: basis ranks, decomposition rank and
penalty weights.

Three criteria are provided. The marginal-rank criterion measures the share
of data energy captured by the compression onto candidate basis systems and
can be evaluated without running the solver. The global-rank criterion is the
normalized residual of a fitted decomposition. Penalty weights are chosen by
subject-held-out cross validation over a 2-d grid of (marginal, coefficient)
weights.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import reduction, solver
from .pipeline import compressed_residual_ratio, fit_mpb
from .solver import SolverConfig, SolverState

__all__ = [
    "SelectionRecord",
    "SelectionReport",
    "marginal_rank_criterion",
    "select_marginal_rank",
    "global_rank_criterion",
    "sweep_global_rank",
    "cv_lambda_grid",
]


@dataclass
class SelectionRecord:
    params: dict
    criterion: float
    chosen: bool = False


@dataclass
class SelectionReport:
    kind: str  # one of "marginal_variance", "normalized_residual", "cv_error"
    records: list[SelectionRecord]

    @property
    def chosen(self) -> SelectionRecord:
        picked = [r for r in self.records if r.chosen]
        if len(picked) != 1:
            raise ValueError(f"expected exactly one chosen record, found {len(picked)}")
        return picked[0]

    def write_csv(self, path) -> None:
        keys = sorted({k for r in self.records for k in r.params})
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([*keys, "criterion", "chosen"])
            for r in self.records:
                writer.writerow(
                    [*(r.params.get(k, "") for k in keys), repr(r.criterion), int(r.chosen)]
                )


def marginal_rank_criterion(
    y: np.ndarray, bases: Sequence, grids: Sequence[np.ndarray]
) -> float:
    """Fraction of data energy captured by compression onto the given bases.

    Equals the squared norm of the compressed tensor over the squared norm of
    the data, a number in [0, 1] that grows toward 1 as the basis ranks
    approach the grid sizes.
    """
    y = np.asarray(y, dtype=float)
    y_norm_sq = float(np.sum(y**2))
    if y_norm_sq == 0.0:
        raise ValueError("data tensor has zero norm")
    phis = [b.evaluate(np.asarray(g, dtype=float)) for b, g in zip(bases, grids)]
    facs = [reduction.factorize(phi, dim=d) for d, phi in enumerate(phis)]
    g_hat = reduction.compress(y, facs)
    ratio = float(np.sum(g_hat**2)) / y_norm_sq
    return min(ratio, 1.0)


def select_marginal_rank(
    y: np.ndarray,
    grids: Sequence[np.ndarray],
    candidates: Sequence[Sequence],
    threshold: float = 0.90,
) -> SelectionReport:
    """Sweep candidate basis systems; choose the first one whose captured
    energy meets the threshold.

    ``candidates`` is a list of basis lists ordered from smallest to largest;
    if none reaches the threshold the candidate with the largest criterion is
    chosen and a warning is issued.
    """
    if not candidates:
        raise ValueError("need at least one candidate basis system")
    records = []
    for bases in candidates:
        ratio = marginal_rank_criterion(y, bases, grids)
        records.append(
            SelectionRecord(
                params={f"rank_{d}": b.rank for d, b in enumerate(bases)},
                criterion=ratio,
            )
        )
    chosen = next((i for i, r in enumerate(records) if r.criterion >= threshold), None)
    if chosen is None:
        chosen = int(np.argmax([r.criterion for r in records]))
        warnings.warn(
            f"no candidate reached the threshold {threshold}; "
            "choosing the best available",
            RuntimeWarning,
        )
    records[chosen].chosen = True
    return SelectionReport(kind="marginal_variance", records=records)


def global_rank_criterion(g_hat: np.ndarray, state: SolverState) -> float:
    """Normalized residual of a fitted decomposition in compressed space."""
    return compressed_residual_ratio(g_hat, state)


def sweep_global_rank(
    g_hat: np.ndarray,
    t_mats: Sequence[np.ndarray],
    config: SolverConfig,
    k_grid: Sequence[int],
    threshold: float = 0.05,
    warm_start: bool = True,
    return_states: bool = False,
):
    """Fit a grid of ranks and report the normalized residual per rank.

    With ``warm_start`` each fit at a larger rank starts from the previous
    solution padded with fresh random grid-mode columns and zero coefficient
    columns, which makes the criterion nonincreasing along the grid. The
    chosen rank is the smallest meeting the threshold (largest otherwise).
    """
    k_grid = [int(k) for k in k_grid]
    if sorted(k_grid) != k_grid or len(set(k_grid)) != len(k_grid):
        raise ValueError("rank grid must be strictly increasing")
    rng = np.random.default_rng(config.seed)
    records = []
    states = []
    prev: SolverState | None = None
    for k in k_grid:
        cfg = replace(config, rank=k)
        init = None
        if warm_start and prev is not None:
            extra = k - prev.rank
            c_tilde = []
            for c in prev.c_tilde:
                pad = rng.standard_normal((c.shape[0], extra))
                pad /= np.linalg.norm(pad, axis=0)
                c_tilde.append(np.hstack([c, pad]))
            b = np.hstack([prev.b, np.zeros((prev.b.shape[0], extra))])
            init = SolverState(c_tilde=c_tilde, b=b, z=b.T.copy(), a_star=np.zeros_like(b))
        state = solver.fit(g_hat, t_mats, cfg, initial_state=init)
        prev = state
        states.append(state)
        records.append(
            SelectionRecord(params={"rank": k}, criterion=global_rank_criterion(g_hat, state))
        )
    chosen = next((i for i, r in enumerate(records) if r.criterion <= threshold), None)
    if chosen is None:
        chosen = len(records) - 1
        warnings.warn(
            f"no rank reached the residual threshold {threshold}; choosing the largest",
            RuntimeWarning,
        )
    records[chosen].chosen = True
    report = SelectionReport(kind="normalized_residual", records=records)
    if return_states:
        return report, states
    return report


def _fold_assignment(n_subjects: int, n_folds: int, seed: int) -> np.ndarray:
    """Deterministic round-robin fold labels after a seeded shuffle."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_subjects)
    labels = np.empty(n_subjects, dtype=int)
    labels[perm] = np.arange(n_subjects) % n_folds
    return labels


def cv_lambda_grid(
    y: np.ndarray,
    grids: Sequence[np.ndarray],
    bases: Sequence,
    penalty_orders: Sequence[int],
    config: SolverConfig,
    lambda_grid: Sequence[tuple[float, float]],
    n_folds: int,
    seed: int = 0,
    fold_labels: np.ndarray | None = None,
) -> SelectionReport:
    """Choose (marginal, coefficient) penalty weights by cross validation.

    Subjects are partitioned into folds (seeded shuffle, round robin), or by
    the explicit ``fold_labels`` when given. For each grid point and fold,
    the model is fitted on the training subjects and the held-out subjects
    are projected onto the fitted product basis; the criterion is the mean
    squared residual per tensor entry, averaged over held-out subjects and
    folds. Ties go to the larger weights.
    """
    y = np.asarray(y, dtype=float)
    n_subjects = y.shape[-1]
    if not 2 <= n_folds <= n_subjects:
        raise ValueError(f"n_folds must lie in [2, {n_subjects}]")
    if not lambda_grid:
        raise ValueError("lambda grid is empty")
    if fold_labels is not None:
        labels = np.asarray(fold_labels, dtype=int)
        if labels.shape != (n_subjects,) or set(labels) != set(range(n_folds)):
            raise ValueError("fold_labels must assign every fold to at least one subject")
    else:
        labels = _fold_assignment(n_subjects, n_folds, seed)
    n_entries = int(np.prod(y.shape[:-1]))
    records = []
    best = None
    best_params = None
    for lam_f, lam_c in lambda_grid:
        errors = []
        for fold in range(n_folds):
            train = y[..., labels != fold]
            held = y[..., labels == fold]
            cfg = replace(
                config, lambda_marginal=float(lam_f), lambda_coef=float(lam_c)
            )
            model, _, _ = fit_mpb(train, grids, bases, penalty_orders, cfg)
            _, resid = model.project(held, grids)
            errors.append(float(np.mean(resid**2)) / n_entries)
        err = float(np.mean(errors))
        records.append(
            SelectionRecord(params={"lambda_marginal": lam_f, "lambda_coef": lam_c}, criterion=err)
        )
        key = (lam_f, lam_c)
        if best is None or err < best or (err == best and key > best_params):
            best = err
            best_params = key
            chosen_idx = len(records) - 1
    records[chosen_idx].chosen = True
    return SelectionReport(kind="cv_error", records=records)
