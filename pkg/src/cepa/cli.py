"""Command-line interface: run tests on panel CSVs, Monte Carlo designs,
and cluster-count selection.

Exit codes: 0 success (regardless of the statistical decision), 2 input
error, 3 numerical error, 4 configuration error.  All randomness flows
from --seed; when omitted, a fresh seed is drawn and echoed in the output
so the run can be reproduced.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .epa_tests import (
    cepa_selective,
    homogeneity_selective,
    oepa_test,
    split_sample_test,
    wald_fixed_clusters,
)
from .exceptions import CepaError, ConfigError, InputError, NumericalError
from .kmeans import Clustering, fit, select_k_cv, select_k_ic
from .panel import (
    LossPanel,
    RawPanel,
    TestFunctionSpec,
    apply_test_function,
    build_loss_differentials,
    read_panel_csv,
)
from .simlab import design_config, resolve_workers, run_experiment

SCHEMA_NAME = "cepa-report/1"

TEST_KINDS = ("selective-cepa", "homogeneity", "oepa", "naive", "predetermined", "split")

_EXIT_CODES = {InputError: 2, NumericalError: 3, ConfigError: 4}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); config errors are 4
        raise ConfigError(message)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=None, help="master seed (omit for entropy)")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("--output", default=None, help="write the JSON report to this path")


def _add_panel_flags(p: argparse.ArgumentParser):
    p.add_argument("--input", required=True, help="panel CSV (see README for the contract)")
    p.add_argument("--condition-cols", default=None,
                   help="comma-separated covariate columns for the conditional test function")
    p.add_argument("--tau", type=int, default=1, help="forecast horizon / conditioning lag")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cepa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", help="run one EPA test on a panel CSV")
    _add_panel_flags(p_test)
    p_test.add_argument("--test", required=True, choices=TEST_KINDS)
    p_test.add_argument("--k", default="ic",
                        help="number of clusters: integer, 'ic' or 'cv' (default ic)")
    p_test.add_argument("--k-max", type=int, default=5)
    p_test.add_argument("--varsigma", type=float, default=1.5)
    p_test.add_argument("--folds", type=int, default=10)
    p_test.add_argument("--r", type=float, default=-2.0, help="p-value merge order, in [-inf, -1)")
    p_test.add_argument("--b", default="auto", help="LRV basis count or 'auto'")
    p_test.add_argument("--gamma", type=float, default=0.2, help="split-sample training share")
    p_test.add_argument("--n-init", type=int, default=10)
    _add_common(p_test)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo size/power design")
    p_sim.add_argument("--design", required=True,
                       choices=("size", "power-case1", "power-case2", "break"))
    p_sim.add_argument("--n", type=int, default=80)
    p_sim.add_argument("--t", type=int, default=50)
    p_sim.add_argument("--psi", type=float, default=0.25)
    p_sim.add_argument("--reps", type=int, default=200)
    p_sim.add_argument("--q", type=float, default=0.05)
    p_sim.add_argument("--conditional", action="store_true")
    p_sim.add_argument("--tests", default="predetermined,naive,split,selective",
                       help="comma-separated test menu")
    p_sim.add_argument("--config", default=None,
                       help="JSON file of SimConfig fields (overridden by explicit flags)")
    p_sim.add_argument("--csv", default=None, help="also write the rate table as CSV")
    _add_common(p_sim)

    p_k = sub.add_parser("kselect", help="data-driven choice of the number of clusters")
    _add_panel_flags(p_k)
    p_k.add_argument("--method", choices=("ic", "cv", "both"), default="ic")
    p_k.add_argument("--k-max", type=int, default=5)
    p_k.add_argument("--varsigma", type=float, default=1.5)
    p_k.add_argument("--folds", type=int, default=10)
    p_k.add_argument("--n-init", type=int, default=10)
    _add_common(p_k)
    return parser


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = np.random.SeedSequence().entropy
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _build_moment_panel(args):
    raw: RawPanel = read_panel_csv(args.input)
    cols = [c.strip() for c in args.condition_cols.split(",")] if args.condition_cols else []
    if raw.z is not None:
        if cols:
            raise ConfigError(
                "conditioning columns cannot be applied to a prebuilt z1..zP panel"
            )
        return LossPanel(units=raw.units, times=raw.times, z=raw.z), raw
    dl = build_loss_differentials(raw.loss1, raw.loss2, raw.units, raw.times)
    if cols:
        missing = [c for c in cols if c not in raw.covariates]
        if missing:
            raise ConfigError(f"conditioning columns not in the CSV: {missing}")
        spec = TestFunctionSpec(
            kind="lagged-columns",
            columns={c: raw.covariates[c] for c in cols},
            tau=args.tau,
        )
    else:
        spec = TestFunctionSpec(kind="constant")
    return apply_test_function(dl, spec), raw


def _parse_k(value):
    if value in ("ic", "cv"):
        return value
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"--k must be an integer, 'ic' or 'cv', got {value!r}")


def _parse_b(value):
    if value == "auto":
        return None
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"--b must be an integer or 'auto', got {value!r}")


def cmd_test(args) -> dict:
    seed = _resolve_seed(args)
    z, raw = _build_moment_panel(args)
    k = _parse_k(args.k)
    b = _parse_b(args.b)
    kwargs = dict(n_init=args.n_init, seed=seed, varsigma=args.varsigma,
                  k_max=args.k_max)
    if args.test == "oepa":
        report = oepa_test(z, b=b)
    elif args.test == "selective-cepa":
        report = cepa_selective(z, k=k, r=args.r, b=b, folds=args.folds, **kwargs)
    elif args.test == "homogeneity":
        report = homogeneity_selective(z, k=k, r=args.r, b=b, folds=args.folds, **kwargs)
    elif args.test == "split":
        report = split_sample_test(z, gamma=args.gamma, k=k, b=b, **kwargs)
    elif args.test == "naive":
        rng = np.random.default_rng(seed)
        if isinstance(k, int):
            trace = fit(z, k, n_init=args.n_init, seed=rng)
            clustering = trace.clustering
        else:
            selector = select_k_ic if k == "ic" else select_k_cv
            extra = {"varsigma": args.varsigma} if k == "ic" else {"folds": args.folds}
            sel = selector(z, k_max=args.k_max, n_init=args.n_init, seed=rng, **extra)
            trace = (sel.traces.get(sel.selected)
                     or fit(z, sel.selected, n_init=args.n_init, seed=rng))
            clustering = trace.clustering
        report = wald_fixed_clusters(z, clustering, b=b, test_name="naive")
    elif args.test == "predetermined":
        if raw.clusters is None:
            raise ConfigError(
                "the predetermined test needs a 'cluster' column in the input CSV"
            )
        clustering = Clustering(assignments=raw.clusters, k=int(raw.clusters.max()))
        report = wald_fixed_clusters(z, clustering, b=b, test_name="predetermined")
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown test {args.test!r}")
    return {
        "schema": SCHEMA_NAME,
        "command": "test",
        "seed": seed,
        "config": {
            "input": args.input,
            "test": args.test,
            "k": args.k,
            "r": args.r,
            "b": args.b,
            "gamma": args.gamma,
            "tau": args.tau,
            "condition_cols": args.condition_cols,
            "n_init": args.n_init,
        },
        "report": report.to_dict(),
    }


def cmd_simulate(args) -> dict:
    seed = _resolve_seed(args)
    overrides = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                overrides = json.load(fh)
        except FileNotFoundError as exc:
            raise InputError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(overrides, dict):
            raise InputError("config file must hold a JSON object of SimConfig fields")
    tests = tuple(t.strip() for t in args.tests.split(",") if t.strip())
    try:
        cfg = design_config(
            args.design, n=args.n, t=args.t, psi=args.psi,
            conditional=args.conditional, reps=args.reps, seed=seed, q=args.q,
            **overrides,
        )
    except TypeError as exc:
        raise ConfigError(f"bad config override: {exc}") from exc
    table = run_experiment(cfg, tests, workers=resolve_workers())
    return {
        "schema": SCHEMA_NAME,
        "command": "simulate",
        "seed": seed,
        "design": args.design,
        "config": table["config"],
        "q": table["q"],
        "results": table["results"],
    }


def cmd_kselect(args) -> dict:
    seed = _resolve_seed(args)
    z, _ = _build_moment_panel(args)
    selected = {}
    rows: dict[int, dict] = {k: {"k": k} for k in range(2, args.k_max + 1)}
    rng = np.random.default_rng(seed)
    if args.method in ("ic", "both"):
        sel = select_k_ic(z, k_max=args.k_max, varsigma=args.varsigma,
                          n_init=args.n_init, seed=rng)
        selected["ic"] = sel.selected
        for row in sel.table:
            rows[row["k"]]["ic"] = row["ic"]
    if args.method in ("cv", "both"):
        sel = select_k_cv(z, k_max=args.k_max, folds=args.folds,
                          n_init=args.n_init, seed=rng)
        selected["cv"] = sel.selected
        for row in sel.table:
            rows[row["k"]]["cv_error"] = row["cv_error"]
    return {
        "schema": SCHEMA_NAME,
        "command": "kselect",
        "seed": seed,
        "config": {
            "input": args.input,
            "method": args.method,
            "k_max": args.k_max,
            "varsigma": args.varsigma,
            "folds": args.folds,
            "n_init": args.n_init,
        },
        "selected": selected,
        "table": [rows[k] for k in sorted(rows)],
    }


def _format_table(payload: dict) -> str:
    lines = []
    if payload["command"] == "test":
        rep = payload["report"]
        lines.append(f"test           : {rep['test']}")
        lines.append(f"statistic      : {rep['statistic']:.6g}")
        lines.append(f"p-value        : {rep['p_value']:.6g}")
        for key in ("k", "k_method", "b", "r"):
            if rep.get(key) is not None:
                lines.append(f"{key:<15}: {rep[key]}")
        if rep.get("sub_p_values"):
            lines.append("sub p-values   :")
            for name, p in rep["sub_p_values"].items():
                lines.append(f"  {name:<12} {p:.6g}")
    elif payload["command"] == "simulate":
        lines.append(f"design: {payload['design']}  q={payload['q']}  "
                     f"reps={payload['config']['reps']}  seed={payload['seed']}")
        lines.append(f"{'test':<15}{'rate':>8}{'mc_se':>10}{'used':>6}{'fail':>6}")
        for row in payload["results"]:
            se = f"{row['mc_se']:.4f}" if row["mc_se"] is not None else "n/a"
            lines.append(f"{row['test']:<15}{row['rejection_rate']:>8.3f}{se:>10}"
                         f"{row['reps_used']:>6}{row['failures']:>6}")
    else:
        lines.append(f"selected: {payload['selected']}")
        header = sorted({key for row in payload["table"] for key in row})
        lines.append("  ".join(f"{h:>12}" for h in header))
        for row in payload["table"]:
            cells = []
            for h in header:
                v = row.get(h)
                cells.append(f"{v:>12.6g}" if isinstance(v, float) else f"{str(v):>12}")
            lines.append("  ".join(cells))
    return "\n".join(lines)


def _emit(payload: dict, args) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    if args.format == "json":
        print(text)
    else:
        print(_format_table(payload))
    if getattr(args, "csv", None) and payload["command"] == "simulate":
        import csv as _csv

        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            writer = _csv.DictWriter(
                fh, fieldnames=["test", "rejection_rate", "mc_se", "reps_used", "failures"])
            writer.writeheader()
            for row in payload["results"]:
                writer.writerow(row)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "test":
            payload = cmd_test(args)
        elif args.command == "simulate":
            payload = cmd_simulate(args)
        else:
            payload = cmd_kselect(args)
        _emit(payload, args)
        return 0
    except CepaError as exc:
        for klass, code in _EXIT_CODES.items():
            if isinstance(exc, klass):
                print(f"error: {exc}", file=sys.stderr)
                return code
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
