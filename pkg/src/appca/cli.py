"""Command-line interface: ``appca {generate,fit,evaluate,reproduce-tables,export}``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import __version__
from .baselines import mppca_em_fit, mppca_reconstruct, pca_fit
from .data_io import (
    SyntheticSpec,
    ensure_dir,
    generate_synthetic,
    load_matrix_csv,
    orient_observations,
    read_manifest,
    save_matrix_csv,
    spec_manifest,
    write_manifest,
)
from .model import Hyperparameters, center_observations, mean_absolute_error
from .samplers import RunConfig, fit, state_metrics
from . import tables

log = logging.getLogger("appca")


def _manifest(args, extra=None) -> dict:
    entries = {k: v for k, v in vars(args).items() if k != "func"}
    entries = {k: (" ".join(map(str, v)) if isinstance(v, list) else v) for k, v in entries.items()}
    entries["code_version"] = __version__
    entries.update(extra or {})
    return entries


def cmd_generate(args) -> int:
    spec = SyntheticSpec(D=args.D, K_plus=args.k_plus, N=args.n, sigma_x=args.sigma_x,
                         sigma_y=args.sigma_y, seed=args.seed, z_rate=args.z_rate)
    data = generate_synthetic(spec)
    ensure_dir(args.out_dir)
    save_matrix_csv(data.Y, os.path.join(args.out_dir, "Y.csv"))
    save_matrix_csv(data.W, os.path.join(args.out_dir, "W_true.csv"))
    save_matrix_csv(data.X, os.path.join(args.out_dir, "X_true.csv"))
    save_matrix_csv(data.Z, os.path.join(args.out_dir, "Z_true.csv"))
    write_manifest(os.path.join(args.out_dir, "manifest.txt"),
                   _manifest(args, spec_manifest(spec)))
    print(f"wrote {spec.D}x{spec.N} data to {args.out_dir}")
    return 0


def _load_observations(path, orientation):
    return center_observations(orient_observations(load_matrix_csv(path), orientation))


def _fit_one(Y, args, alpha, out_dir) -> dict:
    hyper = Hyperparameters(alpha=alpha, sigma_x=args.sigma_x, sigma_y=args.sigma_y,
                            sigma_v=args.sigma_v)
    cfg = RunConfig(
        max_iter=args.max_iter, burn_in=args.burn_in, seed=args.seed, sampler=args.sampler,
        birth_rate=args.birth_rate, resample_hyper=args.resample_hyper,
        track_every=args.track_every, em_exact=args.em_exact,
        hybrid_z_likelihood=args.z_likelihood, random_scan=args.random_scan,
    )
    result = fit(Y, hyper, cfg)
    state = result.map_state if args.report == "map" else result.final_state
    metrics = state_metrics(state, Y)
    from .model import posterior_latents

    x, _ = posterior_latents(Y, state.basis, state.assignments,
                             state.hyper.sigma_x, state.hyper.sigma_y)
    ensure_dir(out_dir)
    save_matrix_csv(state.basis.w, os.path.join(out_dir, "W.csv"))
    save_matrix_csv(state.assignments.z, os.path.join(out_dir, "Z.csv"))
    save_matrix_csv(x, os.path.join(out_dir, "X.csv"))
    save_matrix_csv(Y.column_mean[:, None], os.path.join(out_dir, "mean.csv"))
    with open(os.path.join(out_dir, "trace.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "log_likelihood", "k_plus", "sigma_x", "sigma_y", "mae"])
        for row in result.trace:
            w.writerow([row.iteration, "%.17g" % row.log_likelihood, row.k_plus,
                        "%.17g" % row.sigma_x, "%.17g" % row.sigma_y, "%.17g" % row.mae])
    metrics["map_log_likelihood"] = result.map_log_likelihood
    metrics["reported_state"] = args.report
    write_manifest(os.path.join(out_dir, "metrics.txt"), metrics)
    write_manifest(os.path.join(out_dir, "manifest.txt"),
                   _manifest(args, {"alpha": alpha, "n_points": Y.N, "n_dims": Y.D}))
    return metrics


def cmd_fit(args) -> int:
    Y = _load_observations(args.input, args.orientation)
    alphas = args.alpha
    if len(alphas) == 1:
        m = _fit_one(Y, args, alphas[0], args.out_dir)
        print(f"K+ = {m['k_plus']}  MAE = {m['mae']:.4f}  "
              f"orthonormality loss = {m['orthonormality_loss']:.2f} deg")
        return 0
    rows = []
    for a in alphas:
        m = _fit_one(Y, args, a, os.path.join(args.out_dir, f"alpha_{a:g}"))
        rows.append((a, m["k_plus"], m["mae"], m["orthonormality_loss"]))
        print(f"alpha = {a:g}: K+ = {m['k_plus']}  MAE = {m['mae']:.4f}  "
              f"loss = {m['orthonormality_loss']:.2f} deg")
    with open(os.path.join(args.out_dir, "alpha_sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "k_plus", "mae", "orthonormality_loss_deg"])
        for a, k, mae, loss in rows:
            w.writerow(["%g" % a, k, "%.17g" % mae, "%.17g" % loss])
    return 0


def _load_fit(fit_dir):
    need = ["W.csv", "Z.csv", "X.csv", "manifest.txt"]
    missing = [f for f in need if not os.path.exists(os.path.join(fit_dir, f))]
    if missing:
        raise FileNotFoundError(f"{fit_dir} is missing fit artifacts: {', '.join(missing)}")
    W = load_matrix_csv(os.path.join(fit_dir, "W.csv"))
    Z = load_matrix_csv(os.path.join(fit_dir, "Z.csv"))
    X = load_matrix_csv(os.path.join(fit_dir, "X.csv"))
    return W, Z, X, read_manifest(os.path.join(fit_dir, "manifest.txt"))


def cmd_evaluate(args) -> int:
    W, Z, X, manifest = _load_fit(args.fit_dir)
    path = args.input or manifest["input"]
    Y = _load_observations(path, args.orientation or manifest["orientation"])
    K = min(args.pca_dim, Y.D)
    report = {
        "appca_mae": mean_absolute_error(Y.data, W @ (X * Z)),
        "appca_k_plus": W.shape[1],
        "pca_dim": K,
        "pca_mae": mean_absolute_error(Y.data, pca_fit(Y, K).reconstruction),
    }
    if args.mppca_components > 0:
        q = min(args.mppca_dim or max(1, K // args.mppca_components), Y.D - 1)
        model = mppca_em_fit(Y, args.mppca_components, q, seed=args.seed)
        report.update(mppca_components=args.mppca_components, mppca_dim=q,
                      mppca_mae=mean_absolute_error(Y.data, mppca_reconstruct(model, Y)))
    out = args.out or os.path.join(args.fit_dir, "evaluation.txt")
    write_manifest(out, report)
    for key in sorted(report):
        print(f"{key} = {report[key]}")
    return 0


def cmd_reproduce_tables(args) -> int:
    cfg = tables.TableConfig(replicates=args.replicates, n_points=args.n_points,
                             seed=args.seed, alpha=args.alpha, max_iter=args.max_iter,
                             collapsed_max_iter=args.collapsed_max_iter)
    ensure_dir(args.out_dir)
    for t in args.table:
        records = tables.run_table(t, cfg, n_jobs=args.jobs)
        rows = tables.summarize(t, records)
        tables.write_records(os.path.join(args.out_dir, f"table{t}_cells.csv"), records)
        tables.write_table(os.path.join(args.out_dir, f"table{t}.csv"), rows)
        text = tables.format_table(t, rows)
        with open(os.path.join(args.out_dir, f"table{t}.txt"), "w") as fh:
            fh.write(text + "\n")
        print(f"Table {t} (D = {tables.TABLE_GRIDS[t][0]}): mean±sd (reference)")
        print(text)
    write_manifest(os.path.join(args.out_dir, "manifest.txt"),
                   _manifest(args, tables.config_manifest(cfg)))
    return 0


def cmd_export(args) -> int:
    W, Z, X, manifest = _load_fit(args.fit_dir)
    out = args.out or os.path.join(args.fit_dir, f"{args.what}.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if args.what == "w-heatmap":
            vals = np.abs(W) if args.absolute else W
            w.writerow(["row", "column", "value"])
            for i in range(vals.shape[0]):
                for j in range(vals.shape[1]):
                    w.writerow([i, j, "%.17g" % vals[i, j]])
        else:
            Y = _load_observations(manifest["input"], manifest["orientation"])
            err = np.mean(np.abs(Y.data - W @ (X * Z)), axis=0)
            w.writerow(["time", "abs_error"])
            for n, e in enumerate(err):
                w.writerow([n, "%.17g" % e])
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="appca", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthetic data Y = W (X * Z) + noise")
    g.add_argument("--D", type=int, default=15)
    g.add_argument("--k-plus", type=int, default=4)
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--sigma-x", type=float, default=1.5)
    g.add_argument("--sigma-y", type=float, default=0.5)
    g.add_argument("--z-rate", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit A-PPCA to a CSV matrix")
    f.add_argument("--input", required=True)
    f.add_argument("--orientation", choices=["dims_by_points", "points_by_dims"],
                   default="dims_by_points")
    f.add_argument("--sampler", choices=["collapsed", "hybrid"], default="hybrid")
    f.add_argument("--alpha", type=float, nargs="+", default=[1.0],
                   help="one value, or several for a sweep")
    f.add_argument("--sigma-x", type=float, default=1.0)
    f.add_argument("--sigma-y", type=float, default=1.0)
    f.add_argument("--sigma-v", type=float, default=1.0)
    f.add_argument("--max-iter", type=int, default=100)
    f.add_argument("--burn-in", type=int, default=0)
    f.add_argument("--track-every", type=int, default=1)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--birth-rate", choices=["alpha_over_N", "alpha_over_n"],
                   default="alpha_over_N")
    f.add_argument("--resample-hyper", action="store_true")
    f.add_argument("--em-exact", dest="em_exact", action="store_true", default=True)
    f.add_argument("--em-verbatim", dest="em_exact", action="store_false",
                   help="W update from posterior means only")
    f.add_argument("--z-likelihood", choices=["conditional", "marginal"],
                   default="conditional")
    f.add_argument("--random-scan", action="store_true")
    f.add_argument("--report", choices=["final", "map"], default="final")
    f.add_argument("--out-dir", required=True)
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("evaluate", help="compare a fit against PCA and MPPCA")
    e.add_argument("--fit-dir", required=True)
    e.add_argument("--input")
    e.add_argument("--orientation", choices=["dims_by_points", "points_by_dims"])
    e.add_argument("--pca-dim", type=int, default=9)
    e.add_argument("--mppca-components", type=int, default=2)
    e.add_argument("--mppca-dim", type=int)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("reproduce-tables", help="run the synthetic benchmark grids")
    r.add_argument("--table", type=int, nargs="+", choices=[2, 3, 4], default=[2])
    r.add_argument("--replicates", type=int, default=5)
    r.add_argument("--n-points", type=int, default=1000)
    r.add_argument("--alpha", type=float, default=tables.TableConfig.alpha)
    r.add_argument("--max-iter", type=int, default=tables.TableConfig.max_iter)
    r.add_argument("--collapsed-max-iter", type=int,
                   default=tables.TableConfig.collapsed_max_iter)
    r.add_argument("--seed", type=int, default=tables.TableConfig.seed)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--out-dir", required=True)
    r.set_defaults(func=cmd_reproduce_tables)

    x = sub.add_parser("export", help="plot-ready CSV from a fit directory")
    x.add_argument("--fit-dir", required=True)
    x.add_argument("--what", choices=["w-heatmap", "reconstruction-error"], required=True)
    x.add_argument("--absolute", action="store_true")
    x.add_argument("--out")
    x.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
