"""``causal-kit`` command line: graph queries, simulation and estimation as JSON.

Exit codes: 0 ok, 2 input could not be parsed, 3 query/estimation error,
4 bad usage.  Errors are written to stderr as JSON with a ``code``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from pathlib import Path as FsPath

import numpy as np

from . import dag as dagmod
from . import estimators as est
from . import highdim as hd
from . import sem
from .data import Dataset, read_csv, write_csv
from .errors import CausalKitError, ConvergenceError, DagParseError, DataError, ModelError

SCHEMA = "causal-kit/1"
EXIT_OK, EXIT_PARSE, EXIT_ESTIMATION, EXIT_USAGE = 0, 2, 3, 4


class UsageError(Exception):
    code = "USAGE"


class InputError(Exception):
    """Wraps failures while reading an input file."""

    def __init__(self, cause):
        super().__init__(str(cause))
        self.code = getattr(cause, "code", "PARSE")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# output helpers


def _clean(obj):
    """Make a result JSON-safe: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(payload: dict) -> str:
    return json.dumps(_clean(payload), sort_keys=True, indent=2) + "\n"


def _emit(args, command: str, result: dict) -> None:
    payload = {"schema": SCHEMA, "command": command, "config": _config(args), "result": result}
    text = dumps(payload)
    out = getattr(args, "out", None)
    if out and command != "simulate":
        FsPath(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _config(args) -> dict:
    skip = {"func", "out_json"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _split(text):
    if text is None:
        return []
    return [t.strip() for t in text.split(",") if t.strip()]


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("CAUSAL_KIT_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"CAUSAL_KIT_SEED must be an integer, got {env!r}") from None


# ---------------------------------------------------------------------------
# dag


def _load_dag(path):
    try:
        return dagmod.read_dag(path)
    except (OSError, DagParseError) as exc:
        raise InputError(exc) from exc
    except dagmod.DagError as exc:  # cycles, duplicate edges: the file is not a DAG
        raise InputError(exc) from exc


def cmd_dag_dsep(args):
    g = _load_dag(args.dagfile)
    given = _split(args.given)
    return {
        "x": args.x, "y": args.y, "given": sorted(given),
        "d_separated": dagmod.d_separated(g, args.x, args.y, given),
    }


def cmd_dag_backdoor(args):
    g = _load_dag(args.dagfile)
    given = _split(args.given)
    check = dagmod.is_valid_backdoor_set(g, args.d, args.y, given)
    out = {"d": args.d, "y": args.y, "given": sorted(given), **check.to_dict()}
    try:
        out["backdoor_paths"] = [
            {"path": str(p), "blocked": dagmod.path_blocked(g, p, given)}
            for p in dagmod.backdoor_paths(g, args.d, args.y)
        ]
    except dagmod.PathLimitError:
        out["backdoor_paths"] = None
    return out


def cmd_dag_minsets(args):
    g = _load_dag(args.dagfile)
    sets = dagmod.minimal_backdoor_sets(g, args.d, args.y, args.max_size)
    return {"d": args.d, "y": args.y, "minimal_sets": [sorted(s) for s in sets]}


def cmd_dag_swig(args):
    g = _load_dag(args.dagfile)
    sw = dagmod.make_swig(g, args.node, args.label)
    return {
        "split_node": sw.split_node,
        "natural_node": sw.natural_node,
        "intervention_node": sw.intervention_node,
        "nodes": sorted(sw.dag.nodes),
        "edges": [list(e) for e in sorted(sw.dag.edges)],
        "rename": dict(sorted(sw.rename.items())),
        "text": dagmod.format_dag(sw.dag),
    }


# ---------------------------------------------------------------------------
# simulate


def _params(pairs):
    params = {}
    for item in pairs:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"scenario parameters must be key=value, got {item!r}")
        try:
            params[key] = float(value)
        except ValueError:
            if value.lower() in ("true", "false"):
                params[key] = value.lower() == "true"
            else:
                raise UsageError(f"parameter {key} needs a number, got {value!r}") from None
    return params


def cmd_simulate(args):
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    seed = _seed(args)
    try:
        model = sem.scenario(args.scenario, **_params(args.params))
    except (ModelError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    d = model.roles["d"]
    oracle = sem.oracle_effects(model, d, args.n, seed)
    ds = sem.simulate(model, args.n, seed)
    if model.is_binary(d):
        try:
            g = est.group_means(ds)
            crude = {"method": "difference_in_means", "estimate": g.theta1 - g.theta0}
        except CausalKitError:
            crude = None
    else:
        dc = ds.D - ds.D.mean()
        crude = {"method": "ols_slope", "estimate": float(dc @ ds.Y / (dc @ dc))} if dc.any() else None
    write_csv(ds, args.out)
    sidecar = {
        "scenario": args.scenario,
        "params": model.params,
        "n": args.n,
        "seed": seed,
        "roles": {"y": ds.y, "d": ds.d, "x": list(ds.x)},
        "crude_contrast": crude,
        **oracle,
    }
    side_path = args.sidecar or (args.out + ".json")
    payload = {"schema": SCHEMA, "command": "simulate", "config": _config(args), "result": sidecar}
    FsPath(side_path).write_text(dumps(payload), encoding="utf-8")
    return sidecar


# ---------------------------------------------------------------------------
# estimate


def _load_data(args) -> Dataset:
    try:
        ds = read_csv(args.data)
    except (OSError, DataError) as exc:
        raise InputError(exc) from exc
    reserved = {args.y, args.d, args.stratum}
    if args.scores not in (None, "fit"):
        reserved.add(args.scores)
    x = _split(args.x) if args.x is not None else [c for c in ds.names if c not in reserved]
    for col in [args.y, args.d, *x]:
        if col not in ds.columns:
            raise UsageError(f"column {col!r} not in {args.data}")
    return ds.with_roles(y=args.y, d=args.d, x=x)


def _truncate(text):
    if text is None:
        return None
    parts = _split(text)
    try:
        lo, hi = (float(p) for p in parts)
    except ValueError:
        raise UsageError("--truncate expects lo,hi percentiles, e.g. 1,99") from None
    if not 0 <= lo < hi <= 100:
        raise UsageError("--truncate percentiles must satisfy 0 <= lo < hi <= 100")
    return (lo, hi)


def _scores(args, ds):
    """Known scores from a column, or a fitted logistic model (reported)."""
    if args.scores is None:
        raise UsageError(f"method {args.method} needs --scores COLUMN or --scores fit")
    if args.scores != "fit":
        return ds[args.scores], None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", est.SeparationWarning)
        model = est.fit_propensity(ds)
    if model.separated:
        raise ConvergenceError("treatment is separated by the covariates; propensity fit diverges")
    info = model.to_dict()
    info["warnings"] = [str(w.message) for w in caught]
    return model.scores, info


def _estimate(args, ds, seed):
    m = args.method
    level = args.level
    if m == "ate":
        return est.ate_wald(ds, level).to_dict()
    if m == "risk":
        return {"method": "risk_measures", **est.risk_measures(ds)}
    if m == "standardize":
        if not args.stratum:
            raise UsageError("standardize needs --stratum")
        y, s = ds.Y, ds[args.stratum]
        exact = bool(np.all(y == np.round(y)) and np.all(s == np.round(s)))
        out = est.standardized_contrast(ds, args.stratum, exact=exact).to_dict()
        out["method"] = "standardization"
        return out
    if m == "relative":
        return est.relative_effect(ds, level).to_dict()
    if m == "ipw":
        scores, prop = _scores(args, ds)
        trunc = _truncate(args.truncate)
        report = est.ipw_ate(ds, scores, args.stabilized, trunc, level).to_dict()
        if args.bootstrap:
            known = None if args.scores == "fit" else scores
            boot = est.ipw_bootstrap(ds, args.bootstrap, seed, known, args.stabilized, trunc,
                                     level, args.jobs)
            report["bootstrap"] = boot.to_dict()
        if prop is not None:
            report["propensity"] = prop
        return report
    if m == "balance":
        scores, prop = _scores(args, ds)
        out = est.balance_check(ds, scores).to_dict()
        if prop is not None:
            out["propensity"] = prop
        return out
    if m == "cate":
        return est.cate_interaction(ds, level).to_dict()
    rule = args.lambda_rule
    if m in ("dml-po", "dml-ds", "dml-db"):
        return hd.ESTIMATORS[m](ds, rule=rule, level=level, seed=seed).to_dict()
    if m == "ortho-check":
        grid = [float(t) for t in _split(args.t_grid)] if args.t_grid else hd.DEFAULT_T_GRID
        po = hd.partial_out(ds, rule=rule, level=level, seed=seed)
        single = hd.single_selection(ds, rule=rule, level=level, seed=seed)
        return {
            "method": "orthogonality_check",
            "partialling_out": {**hd.orthogonality_check(ds, po, grid, seed).to_dict(),
                                "estimate": po.alpha},
            "single_selection": {**hd.orthogonality_check(ds, single, grid, seed).to_dict(),
                                 "estimate": single.alpha},
        }
    raise UsageError(f"unknown method {m!r}")  # pragma: no cover - argparse restricts choices


def cmd_estimate(args):
    seed = _seed(args)
    ds = _load_data(args)
    return _estimate(args, ds, seed)


# ---------------------------------------------------------------------------
# parser and entry point


METHODS = ("ate", "risk", "standardize", "relative", "ipw", "balance", "cate", "dml-po",
           "dml-ds", "dml-db", "ortho-check")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="causal-kit", description="Causal graph queries, simulation and estimation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pd = sub.add_parser("dag", help="graph queries on a .dag file")
    dsub = pd.add_subparsers(dest="query", required=True, parser_class=_Parser)
    q = dsub.add_parser("dsep", help="is X d-separated from Y given a set?")
    q.add_argument("dagfile")
    q.add_argument("--x", required=True)
    q.add_argument("--y", required=True)
    q.add_argument("--given", default=None, help="comma-separated conditioning set")
    q.set_defaults(func=cmd_dag_dsep)
    q = dsub.add_parser("backdoor", help="check a candidate adjustment set")
    q.add_argument("dagfile")
    q.add_argument("--d", required=True)
    q.add_argument("--y", required=True)
    q.add_argument("--given", default=None)
    q.set_defaults(func=cmd_dag_backdoor)
    q = dsub.add_parser("minsets", help="minimal valid adjustment sets")
    q.add_argument("dagfile")
    q.add_argument("--d", required=True)
    q.add_argument("--y", required=True)
    q.add_argument("--max-size", type=int, default=None)
    q.set_defaults(func=cmd_dag_minsets)
    q = dsub.add_parser("swig", help="split a node into natural and intervention halves")
    q.add_argument("dagfile")
    q.add_argument("--node", required=True)
    q.add_argument("--label", required=True)
    q.set_defaults(func=cmd_dag_swig)
    for action in dsub.choices.values():
        action.add_argument("--out", default=None)

    ps = sub.add_parser("simulate", help="draw a dataset from a named scenario")
    ps.add_argument("scenario")
    ps.add_argument("params", nargs="*", help="key=value scenario parameters")
    ps.add_argument("--n", type=int, required=True)
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--out", required=True, help="CSV path; sidecar goes to OUT.json")
    ps.add_argument("--sidecar", default=None)
    ps.set_defaults(func=cmd_simulate)

    pe = sub.add_parser("estimate", help="estimate an effect from a CSV file")
    pe.add_argument("method", choices=METHODS)
    pe.add_argument("data")
    pe.add_argument("--y", required=True)
    pe.add_argument("--d", required=True)
    pe.add_argument("--x", default=None, help="comma-separated covariates (default: all others)")
    pe.add_argument("--stratum", default=None)
    pe.add_argument("--scores", default=None, help="score column or 'fit'")
    pe.add_argument("--level", type=float, default=0.95)
    pe.add_argument("--seed", type=int, default=None)
    pe.add_argument("--lambda", dest="lambda_rule", default="plugin",
                    help="plugin, cv or cvK")
    pe.add_argument("--truncate", nargs="?", const="1,99", default=None)
    pe.add_argument("--stabilized", action="store_true")
    pe.add_argument("--bootstrap", type=int, default=500,
                    help="IPW bootstrap replicates (0 disables)")
    pe.add_argument("--jobs", type=int, default=1)
    pe.add_argument("--t-grid", default=None, help="ortho-check step sizes")
    pe.add_argument("--out", default=None)
    pe.set_defaults(func=cmd_estimate)
    return p


def _fail(code: str, message: str, exit_code: int) -> int:
    sys.stderr.write(json.dumps({"schema": SCHEMA, "error": {"code": code, "message": message}},
                                sort_keys=True) + "\n")
    return exit_code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "level", 0.95) is not None and not 0 < getattr(args, "level", 0.95) < 1:
            raise UsageError("--level must lie in (0, 1)")
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        if getattr(args, "bootstrap", 0) not in (0, None) and args.bootstrap < 100:
            raise UsageError("--bootstrap needs at least 100 replicates (or 0)")
        if getattr(args, "seed", None) is None and hasattr(args, "seed"):
            args.seed = _seed(args)
        result = args.func(args)
        name = args.command if args.command != "dag" else f"dag {args.query}"
        if args.command == "estimate":
            name = f"estimate {args.method}"
        _emit(args, name, result)
        return EXIT_OK
    except UsageError as exc:
        return _fail("USAGE", str(exc), EXIT_USAGE)
    except InputError as exc:
        return _fail(exc.code, str(exc), EXIT_PARSE)
    except (CausalKitError, ValueError) as exc:
        return _fail(getattr(exc, "code", "ERROR"), str(exc), EXIT_ESTIMATION)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
