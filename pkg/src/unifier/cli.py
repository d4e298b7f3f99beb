"""Command-line front end.

Subcommands::

    gen-synthetic  write a planted-cluster dataset with manifest
    mask           draw missing samples for a dataset (mask CSV + provenance)
    select         run the solver from a JSON run configuration
    evaluate       score a selection result with k-means ACC / NMI
    sweep          grid over alpha, lambda, selection fraction and missing ratio

Exit codes: 0 success, 2 input error, 3 solver hit max_iter without
converging (outputs still written), 4 numerical failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import itertools
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import solver as _solver
from .data import (
    MaskSpec,
    apply_mask,
    load_dataset,
    save_dataset,
    with_missing,
    write_mask_csv,
    write_matrix_csv,
)
from .errors import ConfigError, DataError, MaskError, NumericalError, ParameterError
from .evaluation import evaluate_selection
from .graph import laplacian
from .solver import SelectionResult, SolverConfig, SylvesterConfig
from .synthetic import planted_clusters

log = logging.getLogger("unifier")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_NUMERICAL = 0, 2, 3, 4
DEFAULT_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5)

_SOLVER_KEYS = {
    "alpha": {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}, "minItems": 1}]},
    "lam": {"type": "number"},
    "gamma": {"type": "number"},
    "k": {"type": "integer"},
    "eps": {"type": "number"},
    "max_iter": {"type": "integer"},
    "tol": {"type": "number"},
    "select_fraction": {"type": "number"},
    "ablation": {"enum": list(_solver.ABLATIONS)},
    "standardize": {"type": "boolean"},
    "view_scale": {"type": "boolean"},
    "smoothed_l21": {"type": "boolean"},
    "check_steps": {"type": "boolean"},
    "sylvester": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "tol": {"type": "number"},
            "max_iter": {"type": "integer"},
            "ridge": {"type": ["number", "null"]},
        },
    },
}

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["manifest"],
    "properties": {
        "manifest": {"type": "string"},
        "output_dir": {"type": "string"},
        "seed": {"type": "integer"},
        "mask": {
            "type": ["object", "null"],
            "additionalProperties": False,
            "required": ["ratio"],
            "properties": {"ratio": {"type": "number"}, "seed": {"type": "integer"}},
        },
        "solver": {"type": "object", "additionalProperties": False, "properties": _SOLVER_KEYS},
        "evaluation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "clusters": {"type": ["integer", "null"]},
                "restarts": {"type": "integer"},
                "fractions": {"type": "array", "items": {"type": "number"}},
            },
        },
    },
}


class CLIError(Exception):
    """Input problem detected by the CLI itself."""


# --------------------------------------------------------------------------
# run configuration


def load_run_config(path) -> dict:
    """Validate a run configuration and resolve it to a complete document.

    Relative paths are taken relative to the configuration file. The returned
    dict carries every default explicitly, so it alone reproduces the run.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: run configuration not found")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    try:
        jsonschema.validate(doc, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {where}: {exc.message}") from None
    base = path.parent
    seed = int(doc.get("seed", 0))
    solver = dict(doc.get("solver", {}))
    solver["seed"] = seed
    try:
        cfg = SolverConfig.from_dict(solver)
    except (TypeError, ParameterError) as exc:
        raise ConfigError(f"{path}: solver: {exc}") from None
    mask = doc.get("mask")
    if mask is not None:
        mask = {"ratio": float(mask["ratio"]), "seed": int(mask.get("seed", seed))}
    ev = doc.get("evaluation", {})
    return {
        "manifest": str((base / doc["manifest"]).resolve()),
        "output_dir": str((base / doc.get("output_dir", "out")).resolve()),
        "seed": seed,
        "mask": mask,
        "solver": cfg.to_dict(),
        "evaluation": {
            "clusters": ev.get("clusters"),
            "restarts": int(ev.get("restarts", 30)),
            "fractions": [float(f) for f in ev.get("fractions", DEFAULT_FRACTIONS)],
        },
    }


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _one_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _prepare_dataset(rc: dict):
    dataset = load_dataset(rc["manifest"])
    spec = None
    if rc["mask"] is not None and rc["mask"]["ratio"] > 0:
        if not dataset.is_complete():
            raise DataError(f"{rc['manifest']}: dataset already has missing samples; drop 'mask' from the config")
        dataset, spec = apply_mask(dataset, rc["mask"]["ratio"], rc["mask"]["seed"])
    return dataset, spec


# --------------------------------------------------------------------------
# subcommands


def cmd_gen_synthetic(args) -> int:
    dims = _floats(args.dims, int)
    informative = _floats(args.informative, int) if args.informative else None
    if informative is not None and len(informative) == 1:
        informative = informative * len(dims)
    try:
        ds = planted_clusters(
            n=args.n, dims=dims, informative=informative, clusters=args.clusters,
            separation=args.separation, noise=args.noise, seed=args.seed,
        )
    except ValueError as exc:
        raise CLIError(str(exc)) from None
    params = {
        "generator": "planted_clusters", "n": args.n, "dims": dims, "informative": informative,
        "clusters": args.clusters, "separation": args.separation, "noise": args.noise, "seed": args.seed,
    }
    path = save_dataset(ds, args.out, header=_one_line(params))
    (Path(args.out) / "generator.json").write_text(_dump(params))
    print(path)
    return EXIT_OK


def cmd_mask(args) -> int:
    if not 0.0 <= args.ratio <= 0.9:
        raise CLIError(f"--ratio must lie in [0, 0.9], got {args.ratio}")
    dataset = load_dataset(args.manifest)
    if args.ratio == 0:
        log.warning("ratio 0: no samples removed, writing an empty mask file")
    masked, spec = apply_mask(dataset, args.ratio, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Path(args.manifest).resolve()
    provenance = {
        "manifest": str(manifest),
        "ratio": spec.ratio,
        "seed": spec.seed,
        "n_samples": dataset.n_samples,
        "missing_per_view": [len(r) for r in spec.missing],
    }
    write_mask_csv(out / "mask.csv", spec.missing, header=_one_line(provenance))
    (out / "mask.json").write_text(_dump({**provenance, "mask": spec.to_dict()}))
    # masked manifest pointing at the original view files
    doc = json.loads(manifest.read_text())
    for entry in doc["views"]:
        entry["path"] = os.path.relpath(manifest.parent / entry["path"], out.resolve())
    if doc.get("labels"):
        doc["labels"] = os.path.relpath(manifest.parent / doc["labels"], out.resolve())
    doc["mask"] = "mask.csv"
    (out / "manifest.json").write_text(_dump(doc))
    print(out / "mask.csv")
    return EXIT_OK


def _apply_overrides(rc: dict, args) -> dict:
    s = dict(rc["solver"])
    syl = dict(s["sylvester"])
    for key in ("alpha", "lam", "gamma", "k", "eps", "max_iter", "tol", "select_fraction", "ablation"):
        val = getattr(args, key, None)
        if val is not None:
            s[key] = val
    if getattr(args, "no_standardize", False):
        s["standardize"] = False
    for key, attr in (("tol", "sylvester_tol"), ("max_iter", "sylvester_max_iter"), ("ridge", "ridge")):
        val = getattr(args, attr, None)
        if val is not None:
            syl[key] = val
    s["sylvester"] = syl
    try:
        s = SolverConfig.from_dict(s).to_dict()
    except (TypeError, ParameterError) as exc:
        raise CLIError(str(exc)) from None
    return {**rc, "solver": s}


def cmd_select(args) -> int:
    rc = _apply_overrides(load_run_config(args.config), args)
    if args.out:
        rc["output_dir"] = str(Path(args.out).resolve())
    dataset, spec = _prepare_dataset(rc)
    cfg = SolverConfig.from_dict(rc["solver"])
    result = _solver.run(dataset, cfg, mask=spec)
    out = Path(rc["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    header = _one_line({"run_config": rc})
    doc = {"run_config": rc, "result": result.to_dict()}
    (out / "result.json").write_text(_dump(doc))
    with (out / "trace.csv").open("w") as fh:
        fh.write(f"# {header}\n")
        fh.write("iteration,objective\n")
        for i, f in enumerate(result.trace, start=1):
            fh.write(f"{i},{f!r}\n")
    if args.write_imputed:
        for v, X in enumerate(result.completed_views(dataset)):
            write_matrix_csv(out / f"imputed_view{v}.csv", X, header=header)
    if args.dump_graph:
        for v, S in enumerate(result.graphs):
            write_matrix_csv(out / f"graph_view{v}_S.csv", S, header=header)
            write_matrix_csv(out / f"graph_view{v}_L.csv", laplacian(S).L, header=header)
    print(out / "result.json")
    if not result.converged:
        log.warning("no convergence after %d iterations; results written anyway", result.iterations)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _load_result(path):
    path = Path(path)
    if not path.is_file():
        raise CLIError(f"{path}: result file not found")
    try:
        doc = json.loads(path.read_text())
        return doc["run_config"], SelectionResult.from_dict(doc["result"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CLIError(f"{path}: not a selection result ({exc})") from None


def _evaluation_dataset(rc: dict, result: SelectionResult, manifest: Optional[str]):
    dataset = load_dataset(manifest or rc["manifest"])
    if result.mask is not None and dataset.is_complete():
        dataset = with_missing(dataset, result.mask.missing)
    if dataset.labels is None:
        raise CLIError("evaluation needs class labels; add a 'labels' file to the manifest")
    return dataset


def cmd_evaluate(args) -> int:
    rc, result = _load_result(args.result)
    dataset = _evaluation_dataset(rc, result, args.manifest)
    fractions = _floats(args.fractions) if args.fractions else rc["evaluation"]["fractions"]
    for f in fractions:
        if not 0 < f <= 1:
            raise CLIError(f"fractions must lie in (0, 1], got {f}")
    restarts = args.restarts if args.restarts is not None else rc["evaluation"]["restarts"]
    clusters = args.clusters if args.clusters is not None else rc["evaluation"]["clusters"]
    seed = rc["seed"] if args.seed is None else args.seed
    records = []
    for f in fractions:
        o = evaluate_selection(dataset, result, c=clusters, restarts=restarts, seed=seed, fraction=f)
        records.append({
            "acc": o.acc,
            "nmi": o.nmi,
            "c": int(clusters or len(np.unique(dataset.labels))),
            "restarts": restarts,
            "seed": seed,
            "selected_fraction": f,
        })
    out = Path(args.out) if args.out else Path(args.result).parent / "metrics.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(_dump({"run_config": rc, "records": records}))
    for r in records:
        print(f"fraction={r['selected_fraction']:.2f}  ACC={r['acc']:.4f}  NMI={r['nmi']:.4f}")
    return EXIT_OK


def _cell_id(ratio, alpha, lam, fraction) -> str:
    return f"ratio={ratio!r},alpha={alpha!r},lambda={lam!r},fraction={fraction!r}"


def _run_cell(rc: dict, ratio: float, alpha: float, lam: float, fraction: float) -> dict:
    rec = {"cell": _cell_id(ratio, alpha, lam, fraction), "ratio": ratio, "alpha": alpha,
           "lambda": lam, "fraction": fraction}
    cell_rc = dict(rc)
    cell_rc["mask"] = {"ratio": ratio, "seed": rc["mask"]["seed"] if rc["mask"] else rc["seed"]}
    cell_rc["solver"] = {**rc["solver"], "alpha": alpha, "lam": lam, "select_fraction": fraction}
    rec["config"] = cell_rc
    try:
        dataset, spec = _prepare_dataset(cell_rc)
        result = _solver.run(dataset, SolverConfig.from_dict(cell_rc["solver"]), mask=spec)
        ev = rc["evaluation"]
        o = evaluate_selection(dataset, result, c=ev["clusters"], restarts=ev["restarts"], seed=rc["seed"])
    except Exception as exc:  # recorded per cell; the sweep goes on
        rec.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        return rec
    rec.update(
        status="ok" if result.converged else "not_converged",
        acc=o.acc, nmi=o.nmi, iterations=result.iterations,
        objective=result.trace[-1] if result.trace else None,
    )
    return rec


def cmd_sweep(args) -> int:
    rc = _apply_overrides(load_run_config(args.config), args)
    alphas = _floats(args.alphas) if args.alphas else [rc["solver"]["alpha"]]
    lambdas = _floats(args.lambdas) if args.lambdas else [rc["solver"]["lam"]]
    fractions = _floats(args.fractions) if args.fractions else [rc["solver"]["select_fraction"]]
    ratios = _floats(args.ratios) if args.ratios else [rc["mask"]["ratio"] if rc["mask"] else 0.0]
    out = Path(args.out) if args.out else Path(rc["output_dir"]) / "sweep"
    markers = out / "cells"
    markers.mkdir(parents=True, exist_ok=True)
    records_path = out / "sweep.jsonl"
    cells = list(itertools.product(ratios, alphas, lambdas, fractions))

    def marker(cell):
        return markers / (hashlib.sha1(_cell_id(*cell).encode()).hexdigest()[:16] + ".done")

    pending = [c for c in cells if not marker(c).exists()]
    log.info("%d cells, %d already done", len(cells), len(cells) - len(pending))
    failed = 0

    def commit(rec, cell):
        nonlocal failed
        failed += rec["status"] == "failed"
        with records_path.open("a") as fh:
            fh.write(_one_line(rec) + "\n")
        marker(cell).write_text(rec["status"] + "\n")

    if args.workers <= 1:
        for cell in pending:
            commit(_run_cell(rc, *cell), cell)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [pool.submit(_run_cell, rc, *cell) for cell in pending]
            for cell, fut in zip(pending, futures):
                commit(fut.result(), cell)
    print(records_path)
    if failed:
        log.warning("%d of %d cells failed", failed, len(pending))
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _floats(text: str, kind=float) -> list:
    try:
        return [kind(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise CLIError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    d = SolverConfig()
    s = SylvesterConfig()
    g = p.add_argument_group("solver overrides (default: value from the run config)")
    g.add_argument("--alpha", type=float, help=f"reconstruction weight, same for every view (default {d.alpha})")
    g.add_argument("--lambda", dest="lam", type=float, help=f"row-sparsity weight (default {d.lam})")
    g.add_argument("--gamma", type=float, help=f"Geman-McClure scale (default {d.gamma})")
    g.add_argument("--k", type=int, help=f"neighbours per sample in the similarity graph (default {d.k})")
    g.add_argument("--eps", type=float, help=f"smoothing inside the reweighting matrix (default {d.eps})")
    g.add_argument("--max-iter", dest="max_iter", type=int, help=f"outer iteration cap (default {d.max_iter})")
    g.add_argument("--tol", type=float, help=f"relative objective change to stop at (default {d.tol})")
    g.add_argument("--select-fraction", dest="select_fraction", type=float,
                   help=f"fraction of features kept per view (default {d.select_fraction})")
    g.add_argument("--ablation", choices=_solver.ABLATIONS,
                   help="full model, no_imputation (mean-filled, fixed) or no_sample_weights (e = 1)")
    g.add_argument("--no-standardize", action="store_true", help="use raw feature scales")
    g.add_argument("--sylvester-tol", dest="sylvester_tol", type=float,
                   help=f"relative residual for the missing-block CG solve (default {s.tol})")
    g.add_argument("--sylvester-max-iter", dest="sylvester_max_iter", type=int,
                   help=f"CG iteration cap (default {s.max_iter})")
    g.add_argument("--ridge", type=float, help="ridge added to the Sylvester operator (default 1e-8*||F||/(m*d))")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unifier", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a planted-cluster dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=60)
    p.add_argument("--dims", default="20,15", help="features per view (default 20,15)")
    p.add_argument("--informative", default="5", help="planted features per view, one value or one per view")
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--separation", type=float, default=3.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("mask", help="remove floor(n*ratio) random samples from each view")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratio", type=float, required=True, help="fraction of samples removed per view, e.g. 0.1-0.3")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("select", help="run feature selection with joint imputation")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides the run config)")
    p.add_argument("--write-imputed", action="store_true", help="also write completed views as CSV")
    p.add_argument("--dump-graph", action="store_true", help="write final S and L per view as CSV")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("evaluate", help="k-means ACC/NMI of the selected features")
    p.add_argument("--result", required=True)
    p.add_argument("--manifest", help="dataset manifest (default: the one in the result)")
    p.add_argument("--fractions", help="comma-separated selection fractions (default 0.1,0.2,0.3,0.4,0.5)")
    p.add_argument("--clusters", type=int, help="cluster count (default: number of label classes)")
    p.add_argument("--restarts", type=int, help="k-means restarts (default 30)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="metrics file (default: metrics.json next to the result)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="grid over alpha, lambda, fraction and missing ratio")
    p.add_argument("--config", required=True)
    p.add_argument("--alphas", help="e.g. 0.001,0.01,0.1,1,10,100,1000")
    p.add_argument("--lambdas")
    p.add_argument("--fractions")
    p.add_argument("--ratios")
    p.add_argument("--out", help="sweep directory (default: <output_dir>/sweep)")
    p.add_argument("--workers", type=int, default=1)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (CLIError, ConfigError, DataError, MaskError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
