"""Command-line surface: fit datasets or feature matrices, simulate, compute power, serve.

Exit codes: 0 success, 2 input error, 3 numerical failure, 4 internal error.
Errors are emitted as one JSON object on stderr so wrappers can parse them.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from .estimator import FitConfig, fit_mle
from .inference import residual_bootstrap, variance_a0, z_test
from .model import Dataset, StudyDesign, validate_dataset
from .power import PowerQuery, min_remeasured, power_curve, theoretical_power
from .simulate import METHODS, monte_carlo, run_method, scenario_from_json

EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_INTERNAL = 4

_REQUIRED_COLUMNS = ("sample_id", "pair_id", "group", "batch", "y")


def _fail(code: int, message: str) -> None:
    category = {EXIT_INPUT: "input", EXIT_NUMERICAL: "numerical"}.get(code, "internal")
    click.echo(json.dumps({"error": message, "category": category}), err=True)
    sys.exit(code)


def _internal_guard(fn):
    """Map unexpected exceptions to the internal-error exit code."""

    @functools.wraps(fn)
    def wrapped(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (SystemExit, KeyboardInterrupt, click.ClickException, click.Abort):
            raise
        except Exception as err:
            _fail(EXIT_INTERNAL, f"{type(err).__name__}: {err}")

    return wrapped


def _effective_threads(ctx_threads) -> int:
    if ctx_threads is not None:
        return max(1, int(ctx_threads))
    env = os.environ.get("REMEASURE_THREADS")
    return max(1, int(env)) if env else 1


def read_long_csv(path):
    """Parse the long-format dataset CSV into a validated Dataset.

    Expected header: sample_id, pair_id (empty when unpaired), group in
    {0,1}, batch in {1,2}, y, then covariate columns z1..zp.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError("empty CSV: header row required")
        missing = [c for c in _REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"missing required columns: {', '.join(missing)}")
        z_cols = [c for c in reader.fieldnames if c not in _REQUIRED_COLUMNS]
        rows = list(reader)
    if not rows:
        raise ValueError("CSV contains no data rows")

    n_rows = len(rows)
    y = np.empty(n_rows)
    x = np.empty(n_rows, dtype=int)
    batch = np.empty(n_rows, dtype=int)
    z = np.empty((n_rows, len(z_cols)))
    pair_ids = []
    for i, row in enumerate(rows):
        try:
            y[i] = float(row["y"])
            x[i] = int(row["group"])
            batch[i] = int(row["batch"])
            for j, c in enumerate(z_cols):
                z[i, j] = float(row[c])
        except (TypeError, ValueError) as err:
            raise ValueError(f"row {i + 2}: non-numeric value ({err})") from err
        pair_ids.append((row["pair_id"] or "").strip())

    originals = {}
    for i in range(n_rows):
        if x[i] == 0 and batch[i] == 1 and pair_ids[i]:
            if pair_ids[i] in originals:
                raise ValueError("duplicate pair indices: repeated pair_id among batch-1 controls")
            originals[pair_ids[i]] = i
    pair_index = []
    for i in range(n_rows):
        if x[i] == 0 and batch[i] == 2:
            if not pair_ids[i]:
                raise ValueError(f"row {i + 2}: remeasured control lacks a pair_id")
            if pair_ids[i] not in originals:
                raise ValueError(f"row {i + 2}: pair_id {pair_ids[i]!r} has no batch-1 original")
            pair_index.append(originals[pair_ids[i]])

    n1 = int(np.sum((x == 0) & (batch == 1)))
    n2 = int(np.sum(x == 1))
    m = int(np.sum((x == 0) & (batch == 2)))
    if z.shape[1] == 0:
        z = np.ones((n_rows, 1))
    has_intercept = bool(np.all(z[:, 0] == 1.0))
    p = z.shape[1] if has_intercept else z.shape[1] + 1
    design = StudyDesign(n1=n1, n2=n2, n1_prime=m, p=p)
    raw = Dataset(
        design=design, y=y, x=x, batch=batch, z=z,
        pair_index=np.asarray(pair_index, dtype=int),
    )
    return validate_dataset(design, raw)


def read_feature_matrix(features_path, metadata_path):
    """Parse matrix mode inputs: metadata rows plus a features x samples table."""
    with open(metadata_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "sample_id" not in reader.fieldnames:
            raise ValueError("metadata CSV must include a sample_id column")
        meta_rows = list(reader)
    sample_ids = [row["sample_id"] for row in meta_rows]
    if len(set(sample_ids)) != len(sample_ids):
        raise ValueError("metadata sample_id values must be unique")

    with open(features_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "feature_id":
            raise ValueError("features CSV must start with a feature_id column")
        if set(header[1:]) != set(sample_ids):
            raise ValueError("feature matrix columns do not match metadata sample ids")
        col_order = [header.index(s, 1) for s in sample_ids]
        feature_ids = []
        values = []
        for row in reader:
            feature_ids.append(row[0])
            try:
                values.append([float(row[j]) for j in col_order])
            except ValueError as err:
                raise ValueError(f"feature {row[0]!r}: non-numeric value ({err})") from err
    if len(set(feature_ids)) != len(feature_ids):
        raise ValueError("feature ids must be unique")
    if not feature_ids:
        raise ValueError("features CSV contains no data rows")
    return meta_rows, feature_ids, np.asarray(values)


def _dataset_from_metadata(meta_rows, y):
    """Build a validated Dataset from metadata dict rows and a response vector."""
    z_cols = [c for c in meta_rows[0].keys() if c not in ("sample_id", "pair_id", "group", "batch")]
    n_rows = len(meta_rows)
    x = np.array([int(r["group"]) for r in meta_rows])
    batch = np.array([int(r["batch"]) for r in meta_rows])
    z = (
        np.array([[float(r[c]) for c in z_cols] for r in meta_rows])
        if z_cols
        else np.ones((n_rows, 1))
    )
    pair_ids = [(r.get("pair_id") or "").strip() for r in meta_rows]
    originals = {}
    for i in range(n_rows):
        if x[i] == 0 and batch[i] == 1 and pair_ids[i]:
            if pair_ids[i] in originals:
                raise ValueError("duplicate pair indices: repeated pair_id among batch-1 controls")
            originals[pair_ids[i]] = i
    pair_index = [
        originals[pair_ids[i]]
        for i in range(n_rows)
        if x[i] == 0 and batch[i] == 2
    ]
    n1 = int(np.sum((x == 0) & (batch == 1)))
    n2 = int(np.sum(x == 1))
    m = int(np.sum((x == 0) & (batch == 2)))
    has_intercept = bool(np.all(z[:, 0] == 1.0))
    p = z.shape[1] if has_intercept else z.shape[1] + 1
    design = StudyDesign(n1=n1, n2=n2, n1_prime=m, p=p)
    raw = Dataset(design=design, y=np.asarray(y, dtype=float), x=x, batch=batch, z=z,
                  pair_index=np.asarray(pair_index, dtype=int))
    return validate_dataset(design, raw)


def bh_qvalues(pvals: np.ndarray) -> np.ndarray:
    """Benjamini-Hochberg step-up q-values."""
    p = np.asarray(pvals, dtype=float)
    n = len(p)
    order = np.argsort(p, kind="stable")
    scaled = p[order] * n / np.arange(1, n + 1)
    adjusted = np.minimum(1.0, np.minimum.accumulate(scaled[::-1])[::-1])
    q = np.empty(n)
    q[order] = adjusted
    return q


def _feature_task(args):
    meta_rows, y_row, method, bootstrap_B, seed, index = args
    try:
        data = _dataset_from_metadata(meta_rows, y_row)
        res = run_method(method, data, bootstrap_B, None if seed is None else [seed, index])
        return index, (res.estimate, res.stderr, res.z, res.p_value), None
    except ValueError as err:
        return index, None, str(err)


def _test_result_doc(res) -> dict:
    return {
        "estimate": res.estimate,
        "stderr": res.stderr,
        "z": res.z,
        "p_value": res.p_value,
        "method": res.method,
        "extra": res.extra,
    }


def _fit_result_doc(fit) -> dict:
    th = fit.theta
    return {
        "a0": th.a0,
        "a1": th.a1,
        "b": list(np.asarray(th.b)),
        "rho": th.rho,
        "sigma1": th.sigma1,
        "sigma2": th.sigma2,
        "loglik": fit.loglik,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "backend": fit.backend,
    }


@click.group()
@click.option("--seed", type=int, default=None, help="Base seed for stochastic steps.")
@click.option("--threads", type=int, default=None,
              help="Worker processes (default: REMEASURE_THREADS or 1).")
@click.option("--json", "as_json", is_flag=True, help="Emit machine-readable JSON on stdout.")
@click.pass_context
def main(ctx, seed, threads, as_json):
    """Estimation, testing, and power analysis for two-batch designs with remeasured controls."""
    ctx.obj = {"seed": seed, "threads": threads, "json": as_json}


@main.command("fit")
@click.argument("dataset_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(METHODS), default="remeasure", show_default=True)
@click.option("--bootstrap", "bootstrap_b", type=int, default=None,
              help="Use the residual bootstrap with this many replicates.")
@click.option("--per-feature", is_flag=True, help="Treat the input as a feature matrix.")
@click.option("--metadata", type=click.Path(exists=True, dir_okay=False),
              help="Sample metadata CSV (required with --per-feature).")
@click.option("--fdr", type=float, default=None,
              help="Flag features significant at this Benjamini-Hochberg level.")
@click.option("--output", type=click.Path(dir_okay=False), default=None,
              help="Write results to this file instead of stdout.")
@click.pass_context
@_internal_guard
def cmd_fit(ctx, dataset_csv, method, bootstrap_b, per_feature, metadata, fdr, output):
    """Fit and test a single dataset CSV, or every row of a feature matrix."""
    seed = ctx.obj["seed"]
    if per_feature:
        if not metadata:
            _fail(EXIT_INPUT, "--per-feature requires --metadata")
        try:
            meta_rows, feature_ids, matrix = read_feature_matrix(dataset_csv, metadata)
        except (ValueError, OSError) as err:
            _fail(EXIT_INPUT, str(err))
        threads = _effective_threads(ctx.obj["threads"])
        tasks = [
            (meta_rows, matrix[i], method, bootstrap_b or 1000, seed, i)
            for i in range(len(feature_ids))
        ]
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                raw = list(pool.map(_feature_task, tasks, chunksize=max(1, len(tasks) // (8 * threads))))
        else:
            raw = [_feature_task(t) for t in tasks]
        raw.sort(key=lambda item: item[0])

        ok = [i for i, stats, _ in raw if stats is not None]
        pvals = np.array([raw[i][1][3] for i in ok])
        qvals = bh_qvalues(pvals) if len(ok) else np.empty(0)
        q_by_index = dict(zip(ok, qvals))
        records = []
        for i, stats, err in raw:
            rec = {"feature_id": feature_ids[i]}
            if stats is None:
                rec.update(estimate=None, stderr=None, z=None, p_value=None,
                           q_value=None, error=err)
            else:
                est, se, zst, p = stats
                rec.update(estimate=est, stderr=se, z=zst, p_value=p,
                           q_value=float(q_by_index[i]), error=None)
                if fdr is not None:
                    rec["significant"] = bool(q_by_index[i] <= fdr)
            records.append(rec)

        if ctx.obj["json"]:
            text = json.dumps(records, indent=2)
        else:
            cols = list(records[0].keys())
            lines = [",".join(cols)]
            for rec in records:
                lines.append(",".join("" if rec.get(c) is None else str(rec.get(c)) for c in cols))
            text = "\n".join(lines)
        if output:
            Path(output).write_text(text + "\n")
        else:
            click.echo(text)
        return

    if method == "bootstrap":
        method = "remeasure"
        bootstrap_b = bootstrap_b or 1000
    if bootstrap_b is not None and method != "remeasure":
        _fail(EXIT_INPUT, "--bootstrap applies only to the remeasure methods")
    if bootstrap_b is not None and bootstrap_b < 100:
        _fail(EXIT_INPUT, "--bootstrap needs at least 100 replicates")
    try:
        data = read_long_csv(dataset_csv)
    except (ValueError, OSError) as err:
        _fail(EXIT_INPUT, str(err))
    doc = {}
    if method == "remeasure":
        try:
            fit = fit_mle(data)
            if not fit.converged:
                _fail(EXIT_NUMERICAL, "estimator did not converge; try more iterations")
            if bootstrap_b:
                res = residual_bootstrap(data, fit, B=bootstrap_b, seed=seed)
            else:
                res = z_test(fit, variance_a0(data, fit))
        except ValueError as err:
            _fail(EXIT_NUMERICAL, str(err))
        doc["fit"] = _fit_result_doc(fit)
    else:
        # Baseline failures are data preconditions (e.g. an empty block),
        # so they surface as input errors rather than numerical ones.
        try:
            res = run_method(method, data)
        except ValueError as err:
            _fail(EXIT_INPUT, str(err))
    doc["test"] = _test_result_doc(res)
    text = json.dumps(doc, indent=2)
    if output:
        Path(output).write_text(text + "\n")
    else:
        click.echo(text)


@main.command("simulate")
@click.argument("scenario_json", type=click.Path(exists=True, dir_okay=False))
@click.option("--reps", type=int, default=1000, show_default=True)
@click.option("--methods", default="remeasure", show_default=True,
              help="Comma-separated list of methods.")
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--bootstrap-b", type=int, default=300, show_default=True)
@click.option("--output", default=None,
              help="Output prefix (default: scenario name); writes PREFIX.json and PREFIX.csv.")
@click.pass_context
@_internal_guard
def cmd_simulate(ctx, scenario_json, reps, methods, alpha, bootstrap_b, output):
    """Run the Monte Carlo harness for a scenario file and write summaries."""
    try:
        scenario = scenario_from_json(Path(scenario_json).read_text())
        if ctx.obj["seed"] is not None:
            scenario = dataclasses.replace(scenario, seed=ctx.obj["seed"])
        method_list = [m.strip() for m in methods.split(",") if m.strip()]
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as err:
        _fail(EXIT_INPUT, f"bad scenario file: {err}")
    try:
        summary = monte_carlo(
            scenario,
            methods=method_list,
            reps=reps,
            alpha=alpha,
            bootstrap_B=bootstrap_b,
            threads=_effective_threads(ctx.obj["threads"]),
        )
    except ValueError as err:
        _fail(EXIT_INPUT, str(err))
    prefix = output or str(Path(scenario_json).with_suffix("")) + "_summary"
    Path(prefix + ".json").write_text(summary.to_json() + "\n")
    summary.write_csv(prefix + ".csv")
    if ctx.obj["json"]:
        click.echo(summary.to_json())
    else:
        click.echo(f"wrote {prefix}.json and {prefix}.csv")


def _power_result_doc(m, result) -> dict:
    return {
        "n1_prime": m,
        "absolute_power": result.absolute_power,
        "relative_power": result.relative_power,
        "optimal_power": result.optimal_power,
        "oracle_sd": result.oracle_sd,
    }


@main.command("power")
@click.option("--n1", type=int, required=True)
@click.option("--n2", type=int, required=True)
@click.option("--rho", type=float, required=True)
@click.option("--d", "effect", type=float, required=True, help="Effect size (Cohen's d).")
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--sigma1", type=float, default=1.0, show_default=True)
@click.option("--n1-prime", "n1_prime", default=None,
              help="A single value (e.g. 25) or an inclusive range (e.g. 2..50).")
@click.option("--target", type=float, default=None, help="Power level to reach.")
@click.option("--mode", type=click.Choice(["absolute", "relative"]), default="absolute",
              show_default=True)
@click.pass_context
@_internal_guard
def cmd_power(ctx, n1, n2, rho, effect, alpha, sigma1, n1_prime, target, mode):
    """Analytic power, power curves, and minimal-remeasurement answers."""
    try:
        base = PowerQuery(
            n1=n1, n2=n2, n1_prime=min(2, n1), effect=effect, rho=rho,
            alpha=alpha, sigma1=sigma1,
        )
    except ValueError as err:
        _fail(EXIT_INPUT, str(err))

    if target is not None:
        try:
            answer = min_remeasured(base, target, mode)
        except ValueError as err:
            _fail(EXIT_INPUT, str(err))
        doc = {"target": target, "mode": mode, "n1_prime": answer, "achievable": answer is not None}
        if answer is None:
            best = theoretical_power(dataclasses.replace(base, n1_prime=n1))
            doc["max_achievable_power"] = best.absolute_power
        else:
            doc.update(_power_result_doc(answer, theoretical_power(dataclasses.replace(base, n1_prime=answer))))
        click.echo(json.dumps(doc, indent=2))
        return

    if n1_prime is None:
        _fail(EXIT_INPUT, "provide either --n1-prime or --target")
    try:
        if ".." in str(n1_prime):
            lo, hi = (int(v) for v in str(n1_prime).split("..", 1))
            values = range(lo, hi + 1)
        else:
            values = [int(n1_prime)]
        curve = power_curve(base, values)
    except ValueError as err:
        _fail(EXIT_INPUT, str(err))

    if len(curve) == 1:
        click.echo(json.dumps(_power_result_doc(*curve[0]), indent=2))
    elif ctx.obj["json"]:
        click.echo(json.dumps([_power_result_doc(m, r) for m, r in curve], indent=2))
    else:
        click.echo("n1_prime,absolute_power,relative_power,optimal_power,oracle_sd")
        for m, r in curve:
            click.echo(f"{m},{r.absolute_power},{r.relative_power},{r.optimal_power},{r.oracle_sd}")


@main.command("serve")
@click.option("--port", type=int, default=None, help="Port (default: REMEASURE_PORT or 8000).")
@click.option("--host", default="127.0.0.1", show_default=True)
@_internal_guard
def cmd_serve(port, host):
    """Run the power HTTP service."""
    import uvicorn

    from .service import app

    if port is None:
        port = int(os.environ.get("REMEASURE_PORT", "8000"))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
