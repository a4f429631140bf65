"""Command-line front end.

Subcommands: ``fit``, ``fpca``, ``select``, ``simulate``, ``verify``,
``info``. Exit codes: 0 on success, 2 for input or configuration problems,
3 for numerical failures, 4 when a solver finished without converging but
outputs were still written. Set ``MPB_LOG`` to a level name (DEBUG, INFO,
...) for progress logging.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import fileio, fpca, selection, sim
from .config import load_run_config, load_sim_config
from .errors import NumericalError
from .pipeline import fit_mpb

log = logging.getLogger("mpbasis")


def _setup_logging() -> None:
    level = os.environ.get("MPB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(message)s")


_thread_limiter = None


def _limit_threads(n: int | None) -> None:
    global _thread_limiter
    if n is None:
        return
    try:
        import threadpoolctl

        # keep the limiter alive: dropping it would restore the old limits
        _thread_limiter = threadpoolctl.threadpool_limits(n)
    except ImportError:  # pragma: no cover
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_fit(args) -> int:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.solver = dataclasses.replace(cfg.solver, seed=args.seed)
    y = fileio.read_tensor(args.tensor)
    if y.ndim != cfg.n_dims + 1:
        raise ValueError(
            f"tensor has {y.ndim} modes but the config describes {cfg.n_dims} dimensions "
            "plus subjects"
        )
    grids = cfg.build_grids(y.shape[:-1])
    model, state, report = fit_mpb(
        y, grids, cfg.bases, cfg.penalty_orders, cfg.solver, center=cfg.center
    )
    out = _outdir(args)
    fileio.write_model(out / "model.mpbm", model)
    with open(out / "fit_report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    log.info(
        "fit finished in %d sweeps (residual ratio %.3e)", report.iters, report.residual_ratio
    )
    print(f"model written to {out / 'model.mpbm'}")
    if not state.converged:
        print("warning: solver hit the sweep cap before reaching the tolerance", file=sys.stderr)
        return 4
    return 0


def cmd_fpca(args) -> int:
    model = fileio.read_model(args.model)
    result = fpca.run_fpca(
        model, lam=args.smoothing, k_keep=args.components, var_threshold=args.var_threshold
    )
    out = _outdir(args)
    fileio.write_eigen(out / "eigen.mpbe", result)
    with open(out / "eigen.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["component", "eigenvalue", "cumulative_variance"])
        for j in range(result.n_components):
            writer.writerow([j + 1, repr(float(result.nu[j])), repr(float(result.var_explained[j]))])
    with open(out / "scores.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject"] + [f"score_{j + 1}" for j in range(result.n_components)])
        for i, row in enumerate(result.scores):
            writer.writerow([i + 1] + [repr(float(v)) for v in row])
    print("component  eigenvalue    cumulative variance")
    for j in range(result.n_components):
        print(f"{j + 1:9d}  {result.nu[j]:.6e}  {result.var_explained[j]:.6f}")
    return 0


def cmd_select(args) -> int:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.solver = dataclasses.replace(cfg.solver, seed=args.seed)
    y = fileio.read_tensor(args.tensor)
    grids = cfg.build_grids(y.shape[:-1])
    out = _outdir(args)
    if args.mode == "marginal-rank":
        report = selection.select_marginal_rank(
            y,
            grids,
            cfg.candidate_bases(),
            threshold=cfg.selection.get("marginal_rank_threshold", 0.90),
        )
    elif args.mode == "global-rank":
        k_grid = cfg.selection.get("rank_grid")
        if not k_grid:
            raise ValueError("config is missing selection.rank_grid")
        from . import basis as basis_mod
        from . import reduction

        phis = [b.evaluate(g) for b, g in zip(cfg.bases, grids)]
        facs = [reduction.factorize(phi, dim=d) for d, phi in enumerate(phis)]
        t_mats = [
            reduction.penalty_transform(
                fac, basis_mod.penalty_matrix(b, basis_mod.PenaltyOperator(order))
            )
            for fac, b, order in zip(facs, cfg.bases, cfg.penalty_orders)
        ]
        g_hat = reduction.compress(y, facs)
        report = selection.sweep_global_rank(
            g_hat,
            t_mats,
            cfg.solver,
            k_grid,
            threshold=cfg.selection.get("rank_threshold", 0.05),
        )
    else:  # cv
        lam_grid = cfg.selection.get("lambda_grid")
        if lam_grid is None:
            exps = np.linspace(-10, -2, 5)
            lam_grid = [(10.0**a, 10.0**b) for a in exps for b in exps]
        else:
            lam_grid = [tuple(pair) for pair in lam_grid]
        report = selection.cv_lambda_grid(
            y,
            grids,
            cfg.bases,
            cfg.penalty_orders,
            cfg.solver,
            lam_grid,
            n_folds=cfg.selection.get("n_folds", 5),
            seed=cfg.seed,
        )
    path = out / f"selection_{args.mode.replace('-', '_')}.csv"
    report.write_csv(path)
    chosen = report.chosen
    print(f"selection report written to {path}")
    print(f"chosen: {chosen.params} (criterion {chosen.criterion:.6e})")
    return 0


def cmd_simulate(args) -> int:
    design, reps, sim_cfg = load_sim_config(args.config)
    if args.seed is not None:
        sim_cfg = dataclasses.replace(sim_cfg, seed=args.seed)
    out = _outdir(args)
    rows = []
    if design == "product":
        for r in range(reps):
            sample = sim.generate_product_sample(sim_cfg, replication=r)
            fileio.write_tensor(out / f"truth_{r:03d}.mpbt", sample.truth)
            fileio.write_tensor(out / f"noisy_{r:03d}.mpbt", sample.noisy)
            fileio.write_model(out / f"truth_model_{r:03d}.mpbm", sample.model)
            rows.append((r, sim.mise(sample.truth, sample.noisy, sample.grids)))
    else:
        for r in range(reps):
            sample = sim.generate_gp2d_sample(sim_cfg, replication=r)
            fileio.write_tensor(out / f"train_{r:03d}.mpbt", sample.train)
            fileio.write_tensor(out / f"test_{r:03d}.mpbt", sample.test)
            rows.append((r, 0.0))
        fileio.write_tensor(out / "eigen_coefs.mpbt", sample.eigen_coefs)
        fileio.write_tensor(out / "eigen_values.mpbt", sample.eigen_values)
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replication", "noise_ise"])
        for r, v in rows:
            writer.writerow([r, repr(v)])
        writer.writerow(["mean", repr(float(np.mean([v for _, v in rows])))])
    print(f"wrote {reps} replications to {out}")
    return 0


def cmd_verify(args) -> int:
    kind = fileio.peek_kind(args.path)
    if kind == "tensor":
        arr = fileio.read_tensor(args.path)
        print(f"tensor ok: dims {arr.shape}")
        return 0
    if kind == "model":
        model = fileio.read_model(args.path)
        j = model.gram_zeta()
        eigs = np.linalg.eigvalsh(j)
        print(
            f"model ok: {model.n_dims} dims, rank {model.rank}, "
            f"{model.n_subjects} subjects, Gram eigenvalue range "
            f"[{eigs[0]:.3e}, {eigs[-1]:.3e}]"
        )
        if eigs[0] <= 1e-10 * max(eigs[-1], 1e-300):
            print(
                "warning: product basis functions are numerically dependent; "
                "downstream eigen solves will reduce to the independent subspace",
                file=sys.stderr,
            )
        return 0
    if args.model is None:
        raise ValueError("verifying an eigen file requires --model")
    result = fileio.read_eigen(args.path)
    model = fileio.read_model(args.model)
    j = model.gram_zeta()
    r = model.laplacian_penalty_zeta()
    norm_dev = np.abs(np.einsum("ij,ij->j", result.s, j @ result.s) - 1.0).max()
    pen = result.s.T @ (j + result.lam * r) @ result.s
    ortho_dev = np.abs(pen - np.diag(np.diag(pen))).max()
    print(f"normalization deviation {norm_dev:.3e}, orthogonality deviation {ortho_dev:.3e}")
    if norm_dev > 1e-8 or ortho_dev > 1e-8:
        raise NumericalError("eigen constraints violated beyond 1e-8")
    print("eigen ok")
    return 0


def cmd_info(args) -> int:
    kind = fileio.peek_kind(args.path)
    if kind == "tensor":
        arr = fileio.read_tensor(args.path)
        print(json.dumps({"kind": "tensor", "dims": list(arr.shape)}))
    elif kind == "model":
        model = fileio.read_model(args.path)
        print(
            json.dumps(
                {
                    "kind": "model",
                    "rank": model.rank,
                    "n_subjects": model.n_subjects,
                    "bases": [b.to_dict() for b in model.bases],
                    "centered": model.mean_values is not None,
                },
                sort_keys=True,
            )
        )
    else:
        result = fileio.read_eigen(args.path)
        print(
            json.dumps(
                {
                    "kind": "eigen",
                    "rank": result.s.shape[0],
                    "n_components": result.n_components,
                    "lambda": result.lam,
                },
                sort_keys=True,
            )
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpbasis",
        description="Marginal product basis representations for gridded functional data",
    )
    parser.add_argument("--threads", type=int, default=None, help="cap BLAS thread count")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model to a tensor of observations")
    p.add_argument("--config", required=True)
    p.add_argument("--tensor", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("fpca", help="penalized FPCA of a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--smoothing", type=float, default=0.0, help="global smoothing weight")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--components", type=int, default=None, help="number of components")
    group.add_argument(
        "--var-threshold",
        type=float,
        default=0.99,
        help="cumulative variance threshold for choosing the component count",
    )
    p.set_defaults(func=cmd_fpca, var_threshold=0.99)

    p = sub.add_parser("select", help="hyperparameter selection sweeps")
    p.add_argument("--config", required=True)
    p.add_argument("--tensor", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", required=True, choices=["marginal-rank", "global-rank", "cv"])
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="generate synthetic datasets")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="validate a written file and its invariants")
    p.add_argument("path")
    p.add_argument("--model", default=None, help="model file (required for eigen files)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("info", help="print header information of a file")
    p.add_argument("path")
    p.set_defaults(func=cmd_info)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    _limit_threads(args.threads)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
