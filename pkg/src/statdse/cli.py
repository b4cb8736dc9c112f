"""Command-line front end: ``statdse {dse,bootstrap,regress,pareto,report}``.

Exit codes: 0 success, 2 configuration, 3 data, 4 numerical, 5 not covered.
Errors print one line ``statdse: error[<category>]: <message>`` on stderr.
Set ``STATDSE_LOG_LEVEL`` (e.g. ``INFO``) to see progress logging.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .active import ObjectiveSpec, RunConfig, run_active_learning
from .bootstrap import BootstrapConfig, bootstrap_sample
from .errors import ConfigurationError, DataError, StatDSEError
from .evaluators import load_table_evaluator, make_synthetic_evaluator, read_csv_table, write_dataset
from .gp import DEFAULT_NOISE_VARIANCE, KernelSpec, load_gp, posterior, save_gp
from .pareto import ObjectivePoint, Provenance, pareto_frontier, write_frontier_csv
from .regression import (
    ForestConfig,
    RegressionDataset,
    fit_lasso_path,
    fit_linear,
    fit_random_forest,
    normalized_rmse,
)
from .space import Manifest, format_number, load_manifest
from .transfer import TransferConfig

logger = logging.getLogger("statdse")


def _csv_list(text: str | None) -> list[str] | None:
    if text is None:
        return None
    return [t.strip() for t in text.split(",") if t.strip()]


def _prepare_out(path: str | None) -> Path:
    if not path:
        raise ConfigurationError("--out is required")
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise ConfigurationError(f"--out {out} exists and is not a directory")
    return out


def _write_out(out: Path) -> Path:
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {out}: {exc.strerror}") from None
    if not os.access(out, os.W_OK):
        raise ConfigurationError(f"output directory {out} is not writable")
    return out


def _dump_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _model_filename(name: str) -> str:
    safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in name)
    return f"model_{safe}.gp"


# ---------------------------------------------------------------------------
# dse
# ---------------------------------------------------------------------------


def cmd_dse(args) -> int:
    out = _prepare_out(args.out)
    manifest = load_manifest(args.manifest)
    if bool(args.dataset) == bool(args.synthetic):
        raise ConfigurationError("give exactly one evaluator source: --dataset or --synthetic")
    if args.dataset:
        evaluator = load_table_evaluator(args.dataset, manifest)
    else:
        evaluator = make_synthetic_evaluator(args.synthetic, manifest.space, args.synthetic_seed)
    names = _csv_list(args.objectives) or evaluator.objective_names
    unknown = [n for n in names if n not in evaluator.objective_names]
    if unknown:
        raise ConfigurationError(f"unknown objective(s) {unknown}; available {evaluator.objective_names}")
    kernel = KernelSpec.from_name(args.kernel, args.length_scale)
    directions = dict(zip(evaluator.objective_names, evaluator.directions))
    objectives = tuple(
        ObjectiveSpec(n, directions[n], kernel, args.noise_variance) for n in names
    )
    transfer = None
    if args.transfer_from:
        target, _, path = args.transfer_from.rpartition("=")
        transfer = TransferConfig(path, args.lambda1, args.lambda2, objective=target or None)
    config = RunConfig(
        objectives,
        n_init=args.n_init,
        candidates_per_model=args.candidates_per_model,
        pool_size=args.pool_size,
        max_iterations=args.iterations,
        patience=args.patience,
        exploration_beta=args.beta,
        seed=args.seed,
        transfer=transfer,
        max_queries=args.budget,
    )
    models, history = run_active_learning(config, evaluator)

    _write_out(out)
    history.write_csv(out / "run_history.csv")
    X, Y = history.evaluated()
    write_dataset(out / "evaluations.csv", manifest.space.names + names, X, Y)
    model_files = {}
    for m in models:
        fname = _model_filename(m.name)
        save_gp(m, out / fname)
        model_files[m.name] = fname
    extra = {
        "evaluator": evaluator.kind if args.dataset else f"synthetic:{args.synthetic}",
        "seed": args.seed,
        "kernel": kernel.name,
        "length_scale": kernel.length_scale,
        "candidates_per_model": args.candidates_per_model,
        "model_files": model_files,
        "transfer": None if transfer is None else {"lambda1": args.lambda1, "lambda2": args.lambda2},
    }
    history.write_summary(out / "summary.json", extra)
    _save_run_manifest(manifest, out, names, directions)
    print(f"dse: {history.total_queries} queries, {history.stop_reason}; outputs in {out}")
    return 0


def _save_run_manifest(manifest: Manifest, out: Path, names, directions) -> None:
    doc = manifest.to_dict()
    doc["objectives"] = [{"name": n, "direction": directions[n].value} for n in names]
    _dump_json(out / "manifest.json", doc)


# ---------------------------------------------------------------------------
# bootstrap
# ---------------------------------------------------------------------------


def cmd_bootstrap(args) -> int:
    out = _prepare_out(args.out)
    manifest = load_manifest(args.manifest)
    gp = load_gp(args.model)
    if args.dataset:
        header, data = read_csv_table(args.dataset)
        names = manifest.space.names
        if header[: len(names)] != names:
            raise DataError(f"{args.dataset}: query columns must start with the manifest parameters {names}")
        cfg = BootstrapConfig(noise_mode=args.noise_mode, seed=args.seed, query_source="provided",
                              queries=data[:, : len(names)])
    else:
        cfg = BootstrapConfig(args.n_points, args.noise_mode, args.seed)
    X, y = bootstrap_sample(gp, manifest.space, cfg)
    _write_out(out)
    write_dataset(out / "simulated.csv", manifest.space.names + [gp.name], X, y)
    print(f"bootstrap: wrote {len(y)} simulated rows to {out / 'simulated.csv'}")
    return 0


# ---------------------------------------------------------------------------
# regress
# ---------------------------------------------------------------------------


def _load_regression(path, target: str | None, manifest: Manifest | None) -> tuple[RegressionDataset, str]:
    header, data = read_csv_table(path)
    if manifest is not None:
        features = manifest.space.names
        missing = [f for f in features if f not in header]
        if missing:
            raise DataError(f"{path}: missing parameter columns {missing}")
    else:
        features = None
    if target is None:
        candidates = [h for h in header if features is None or h not in features]
        if not candidates:
            raise DataError(f"{path}: no target column")
        target = candidates[-1]
    if target not in header:
        raise ConfigurationError(f"{path}: no column named {target!r}")
    if features is None:
        features = [h for h in header if h != target]
    cols = [header.index(f) for f in features]
    return RegressionDataset(data[:, cols], data[:, header.index(target)], tuple(features)), target


def cmd_regress(args) -> int:
    out = _prepare_out(args.out)
    manifest = load_manifest(args.manifest) if args.manifest else None
    targets = _csv_list(args.objectives)
    if targets and len(targets) != 1:
        raise ConfigurationError("regress fits one target; pass a single name to --objectives")
    target = targets[0] if targets else None
    data, target = _load_regression(args.dataset, target, manifest)
    if args.test_dataset:
        train = data
        test, _ = _load_regression(args.test_dataset, target, manifest)
        if test.feature_names != train.feature_names:
            raise DataError("test dataset columns differ from the training dataset")
    else:
        train, test = data.split(args.test_fraction, args.seed)

    files = {}
    if args.model == "linear":
        model = fit_linear(train)
        pred = model.predict(test.features)
        coef_rows = [("intercept", model.intercept)] + list(zip(train.feature_names, model.coef))
    elif args.model == "lasso":
        path = fit_lasso_path(train, args.n_lambdas)
        pred = path.intercepts[0] + test.features @ path.coefficients[0]
        rank = {j: r for r, j in enumerate(path.collapse_order)}
        coef_rows = [("intercept", path.intercepts[0])] + [
            (name, c) for name, c in zip(train.feature_names, path.coefficients[0])
        ]
    else:
        model = fit_random_forest(train, ForestConfig(seed=args.seed))
        pred = model.predict(test.features)
        coef_rows = None

    metrics = {
        "model": args.model,
        "normalized_rmse": normalized_rmse(pred, test.targets),
        "n_samples": train.n,
        "n_test": test.n,
        "data_source": args.data_source,
        "target": target,
        "seed": args.seed,
    }
    _write_out(out)
    if coef_rows is not None:
        lines = ["term,coefficient"] + [f"{t},{format_number(c)}" for t, c in coef_rows]
        (out / "coefficients.csv").write_text("\n".join(lines) + "\n")
        files["coefficients"] = "coefficients.csv"
    if args.model == "lasso":
        rows = ["lambda," + ",".join(train.feature_names)]
        for lam, coefs in zip(path.lambdas, path.coefficients):
            rows.append(",".join([format_number(lam)] + [format_number(c) for c in coefs]))
        (out / "lasso_path.csv").write_text("\n".join(rows) + "\n")
        lines = ["collapse_rank,feature"] + [f"{rank[j]},{train.feature_names[j]}" for j in path.collapse_order]
        (out / "collapse_order.csv").write_text("\n".join(lines) + "\n")
        files["lasso_path"] = "lasso_path.csv"
        metrics["collapse_order"] = path.collapse_names()
        metrics["lambda_max"] = path.lambda_max
    metrics["files"] = files
    _dump_json(out / "metrics.json", metrics)
    print(f"regress: {args.model} normalized RMSE {metrics['normalized_rmse']:.6g} on {test.n} held-out rows")
    return 0


# ---------------------------------------------------------------------------
# pareto
# ---------------------------------------------------------------------------


def cmd_pareto(args) -> int:
    out = _prepare_out(args.out)
    if args.run:
        run = Path(args.run)
        manifest = load_manifest(args.manifest or run / "manifest.json")
        dataset = run / "evaluations.csv"
    else:
        if not (args.manifest and args.dataset):
            raise ConfigurationError("pareto needs --manifest and --dataset, or --run")
        manifest = load_manifest(args.manifest)
        dataset = Path(args.dataset)
    names = _csv_list(args.objectives) or manifest.objective_names
    if len(names) < 2:
        raise ConfigurationError("a frontier needs at least two objectives")
    directions = [manifest.objective(n).direction for n in names]
    params = manifest.space.names

    if args.surrogate:
        if not args.run:
            raise ConfigurationError("--surrogate needs --run (saved models)")
        summary = json.loads((run / "summary.json").read_text())
        files = summary.get("model_files", {})
        models = []
        for n in names:
            if n not in files:
                raise ConfigurationError(f"run has no saved model for objective {n!r}")
            models.append(load_gp(run / files[n]))
        rng = np.random.default_rng(args.seed)
        X = manifest.space.sample(rng, args.pool_size)
        Y = np.column_stack([posterior(m, X)[0] for m in models])
        provenance = Provenance.SURROGATE
    else:
        header, data = read_csv_table(dataset)
        missing = [c for c in params + names if c not in header]
        if missing:
            raise DataError(f"{dataset}: missing columns {missing}")
        X = data[:, [header.index(p) for p in params]]
        Y = data[:, [header.index(n) for n in names]]
        provenance = Provenance.EVALUATED
    if len(X) == 0:
        raise DataError("no points to build a frontier from")
    points = [ObjectivePoint(x, y, provenance) for x, y in zip(X, Y)]
    front = pareto_frontier(points, directions)
    _write_out(out)
    write_frontier_csv(out / "frontier.csv", front, names, params)
    label = "surrogate-predicted" if args.surrogate else "evaluated"
    print(f"pareto: {len(front)} {label} frontier points of {len(points)} in {out / 'frontier.csv'}")
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def render_report(run: Path) -> str:
    try:
        summary = json.loads((run / "summary.json").read_text())
    except OSError:
        raise ConfigurationError(f"{run} has no summary.json; is it a dse output directory?") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{run / 'summary.json'}: invalid JSON ({exc.msg})") from None
    lines = [f"Run directory: {run}", ""]
    lines.append("Summary")
    lines.append("-------")
    for obj in summary["objectives"]:
        point = ", ".join(f"{k}={format_number(v)}" for k, v in obj["best_point"].items())
        lines.append(f"  {obj['name']} ({obj['direction']}): best {obj['best_value']:.6g} at {point}")
    lines.append("")
    lines.append(f"Queries: {summary['total_queries']} total, {summary.get('failed_queries', 0)} failed")
    lines.append(f"Iterations: {summary['iterations']} ({summary['stop_reason']})")
    if "kernel" in summary:
        lines.append(f"Kernel: {summary['kernel']} (length scale {summary['length_scale']:g})")
    if summary.get("transfer"):
        t = summary["transfer"]
        lines.append(f"Transfer: lambda1={t['lambda1']:g}, lambda2={t['lambda2']:g}, linear decay")
    history = run / "run_history.csv"
    if history.exists():
        _, data = _read_text_rows(history)
        lines.append("")
        lines.append("Best value by iteration")
        for row in data:
            lines.append("  " + "  ".join(row[:4]))
    return "\n".join(lines) + "\n"


def _read_text_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    with path.open(newline="") as handle:
        rows = list(csv.reader(handle))
    return rows[0], rows[1:]


def cmd_report(args) -> int:
    text = render_report(Path(args.run))
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="statdse",
        description="Statistical hardware performance modeling over discrete design spaces.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dse", help="multi-model active-learning design-space exploration")
    p.add_argument("--manifest", required=True, help="design-space manifest (JSON)")
    p.add_argument("--dataset", help="results table CSV to replay as the evaluator")
    p.add_argument("--synthetic", help="synthetic generator: bowl, multimodal, correlated_pair, interaction")
    p.add_argument("--synthetic-seed", type=int, default=0, help="seed of the synthetic surface (default 0)")
    p.add_argument("--objectives", help="comma-separated objectives to model (default: all)")
    p.add_argument("--budget", type=int, help="maximum number of evaluator queries (default: unlimited)")
    p.add_argument("--iterations", type=int, default=50, help="maximum active-learning iterations (default 50)")
    p.add_argument("--patience", type=int, default=10, help="stop after this many iterations without improvement (default 10)")
    p.add_argument("--n-init", type=int, default=5, help="initial random queries (default 5)")
    p.add_argument("--candidates-per-model", type=int, default=5, help="top-k candidates per model per iteration (default 5)")
    p.add_argument("--pool-size", type=int, default=1000, help="random unvisited points scored per iteration (default 1000)")
    p.add_argument("--beta", type=float, default=0.0, help="UCB exploration weight on the posterior stddev (default 0)")
    p.add_argument("--kernel", choices=["se", "matern32", "matern52"], default="se")
    p.add_argument("--length-scale", type=float, default=1.0, help="kernel length scale on normalized inputs (default 1)")
    p.add_argument("--noise-variance", type=float, default=DEFAULT_NOISE_VARIANCE)
    p.add_argument("--transfer-from", help="source GP model file, optionally OBJECTIVE=PATH")
    p.add_argument("--lambda1", type=float, default=0.5, help="initial source-mean weight (default 0.5)")
    p.add_argument("--lambda2", type=float, default=0.0, help="initial source-variance weight (default 0)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_dse)

    p = sub.add_parser("bootstrap", help="simulate a dataset from a saved GP")
    p.add_argument("--model", required=True, help="GP model file written by dse")
    p.add_argument("--manifest", required=True)
    p.add_argument("--n-points", type=int, default=2000, help="simulated rows (default 2000)")
    p.add_argument("--noise-mode", choices=["mean", "joint"], default="joint",
                   help="mean: posterior mean only; joint: mean plus one joint posterior draw (default)")
    p.add_argument("--dataset", help="CSV whose parameter columns give the query points")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory (writes simulated.csv)")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("regress", help="fit linear, LASSO or random-forest performance models")
    p.add_argument("--dataset", required=True)
    p.add_argument("--manifest", help="restrict features to the manifest parameters")
    p.add_argument("--objectives", help="target column (default: last non-parameter column)")
    p.add_argument("--model", choices=["linear", "lasso", "forest"], default="linear")
    p.add_argument("--test-dataset", help="held-out CSV; default is a seeded 80/20 split")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--n-lambdas", type=int, default=100)
    p.add_argument("--data-source", default="real", help="label recorded in metrics.json (e.g. real, simulated)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("pareto", help="extract the Pareto frontier")
    p.add_argument("--manifest")
    p.add_argument("--dataset")
    p.add_argument("--run", help="dse output directory (uses its evaluations and manifest)")
    p.add_argument("--surrogate", action="store_true", help="frontier of model predictions over a random pool")
    p.add_argument("--objectives", help="comma-separated objectives (default: all manifest objectives)")
    p.add_argument("--pool-size", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("report", help="print a text summary of a dse output directory")
    p.add_argument("run", help="dse output directory")
    p.add_argument("--out", help="also write the report to this file")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("STATDSE_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StatDSEError as exc:
        print(f"statdse: error[{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
