"""Command-line interface.

Exit codes
----------
0  success
1  unexpected internal error
2  usage error (bad arguments)
3  input/output error (missing or unreadable file)
4  validation error (malformed data, configuration or descriptor text)
5  numerical failure (no detectable signal, domain violation, singular system)
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bart import PROFILES, BartConfig
from .descriptors import BINARY_OPS, UNARY_OPS, Op
from .exceptions import DomainError, NoSignalError, ValidationError
from .io import RunManifest, dump_json, read_dataset, write_space_csv
from .pan import PanConfig, load_config, pan_run
from .selectors import gse_select
from .simulation import (
    GENERATORS,
    SimDesign,
    cross_validate_rmse,
    plot_rows,
    run_pan_suite,
    run_screen_suite,
    write_rows,
)
from .space import DEFAULT_DEDUP_THRESHOLD, DescriptorSpace, generate_binary, generate_unary

logger = logging.getLogger("ibart")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_VALIDATION = 4
EXIT_NUMERICAL = 5


def _parse_ops(text):
    """Split an operator list; ``unary``/``binary`` expand to the full sets."""
    text = (text or "").strip()
    if text in ("", "none", "identity"):
        return None, []
    if text == "unary":
        return "unary", [o.value for o in UNARY_OPS]
    if text == "binary":
        return "binary", [o.value for o in BINARY_OPS]
    ops = [Op.lookup(t) for t in text.split(",") if t.strip()]
    kinds = {"unary" if o in UNARY_OPS else "binary" for o in ops if o is not Op.IDENTITY}
    if len(kinds) > 1:
        raise ValidationError("mix of unary and binary operators; run generate once per layer")
    return (kinds.pop() if kinds else None), [o.value for o in ops]


def _bart(args, default_profile="paper", **extra):
    return BartConfig.profile(args.profile or default_profile, seed=args.seed, **extra)


def _threads(args):
    return args.threads if args.threads and args.threads > 0 else (os.cpu_count() or 1)


def _out_dir(path):
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _dataset(args):
    return read_dataset(args.data, response=getattr(args, "response", None),
                        response_path=getattr(args, "response_file", None))


def _need_response(ds):
    if ds.y is None:
        raise ValidationError("a response is required: pass --response NAME or --response-file PATH")


def cmd_generate(args):
    ds = _dataset(args)
    kind, ops = _parse_ops(args.ops)
    space = DescriptorSpace.from_primary(ds.X, ds.names, ds.units if args.unit_filter else None)
    if kind == "unary":
        space = generate_unary(space, ops, dedup_threshold=args.dedup_threshold, cap=args.cap)
    elif kind == "binary":
        space = generate_binary(space, ops, dedup_threshold=args.dedup_threshold, cap=args.cap)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_space_csv(out, space, names=False)
    listing = out.with_suffix(".descriptors.txt")
    listing.write_text("".join(f"{d.text}\t{space.display(d)}\n" for d in space.descriptors))
    report = space.report.as_dict() if space.report else {"generated": len(space),
                                                          "retained": len(space)}
    print(" ".join(f"{k}={v}" for k, v in report.items()))
    m = RunManifest("generate", sys.argv, args.seed,
                    {"ops": ops, "kind": kind, "dedup_threshold": args.dedup_threshold,
                     "cap": args.cap, "unit_filter": args.unit_filter})
    m.add_input(args.data)
    m.outputs = [out, listing]
    m.write(out.with_suffix(".manifest.json"))
    return EXIT_OK


def _pan_config(args):
    cfg = load_config(args.config) if args.config else PanConfig()
    bart = cfg.bart
    if args.profile:
        bart = replace(bart, **PROFILES[args.profile])
    cfg = replace(cfg, bart=bart, n_jobs=_threads(args))
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.k is not None:
        cfg = replace(cfg, k=args.k)
    if args.scheme is not None:
        cfg = replace(cfg, scheme=args.scheme)
    return cfg


def cmd_select(args):
    ds = _dataset(args)
    _need_response(ds)
    cfg = _pan_config(args)
    res = pan_run(ds.X, ds.y, cfg, feature_names=ds.names,
                  leaf_units=ds.units if cfg.unit_filter else None)
    out = _out_dir(args.out_dir)
    result_path = out / "result.json"
    dump_json(result_path, res.to_dict(include_timing=False))
    (out / "report.txt").write_text(res.report())
    print(res.report(), end="")
    m = RunManifest("select", sys.argv, cfg.seed, cfg.to_dict())
    m.add_input(args.data)
    m.add_input(args.response_file)
    m.outputs = [result_path, out / "report.txt"]
    m.write(out / "manifest.json")
    return EXIT_OK


def cmd_bart_select(args):
    ds = _dataset(args)
    _need_response(ds)
    space = DescriptorSpace.from_primary(ds.X, ds.names, None)
    if args.expand == "unary":
        space = generate_unary(space)
    elif args.expand == "binary":
        space = generate_binary(space)
    cfg = _bart(args)
    g = gse_select(space.columns, ds.y, cfg, args.permutations, args.alpha, _threads(args),
                   args.average)
    out = _out_dir(args.out_dir)
    payload = g.to_dict([space.display(d) for d in space.descriptors])
    payload["descriptors"] = [space.display(d) for d in space.descriptors]
    dump_json(out / "gse.json", payload)
    for name in payload["selected"]:
        print(name)
    m = RunManifest("bart-select", sys.argv, args.seed,
                    {"bart": cfg.to_dict(), "permutations": args.permutations,
                     "alpha": args.alpha, "average": args.average, "expand": args.expand})
    m.add_input(args.data)
    m.outputs = [out / "gse.json"]
    m.write(out / "manifest.json")
    return EXIT_OK


def _suite_spec(args):
    spec = {}
    if args.suite:
        with open(args.suite) as fh:
            spec = json.load(fh)
    for key in ("family", "replicates", "n", "p", "sigma"):
        value = getattr(args, key)
        if value is not None:
            spec[key] = value
    if args.operators:
        spec["operators"] = args.operators.split(",")
    spec.setdefault("family", "unary-screen")
    spec.setdefault("replicates", 10)
    if spec["family"] not in GENERATORS:
        raise ValidationError(f"family must be one of {GENERATORS}")
    return spec


def cmd_simulate(args):
    spec = _suite_spec(args)
    threads = _threads(args)
    family = spec["family"]
    if family == "complex-3comp":
        pan = PanConfig.from_dict(spec.get("pan", {"scheme": "unary-first"}))
        bart = replace(pan.bart, **PROFILES[args.profile or "desk"])
        pan = replace(pan, bart=bart)
        design = SimDesign(family, n=spec.get("n"), p=spec.get("p"), sigma=spec.get("sigma"),
                           replicates=spec["replicates"], seed=args.seed)
        result = run_pan_suite(design, pan, n_jobs=threads)
        figure = "complex"
    else:
        result = run_screen_suite(family, _bart(args, "desk"), operators=spec.get("operators"),
                                  replicates=spec["replicates"], n=spec.get("n"), p=spec.get("p"),
                                  sigma=spec.get("sigma"), seed=args.seed,
                                  n_permutations=spec.get("permutations", 50),
                                  alpha=spec.get("alpha", 0.05), n_jobs=threads)
        figure = family
    out = _out_dir(args.out_dir)
    write_rows(out / "replicates.csv", result.rows)
    summary = {"spec": spec, "summary": result.summary()}
    dump_json(out / "summary.json", summary)
    outputs = [out / "replicates.csv", out / "summary.json"]
    if args.emit_plot_data:
        write_rows(out / "plot_data.csv", plot_rows(result, figure))
        outputs.append(out / "plot_data.csv")
    for label, s in result.summary().items():
        print(label, json.dumps(s))
    m = RunManifest("simulate", sys.argv, args.seed, {**spec, "profile": args.profile or "desk"})
    m.add_input(args.suite)
    m.outputs = outputs
    m.write(out / "manifest.json")
    return EXIT_OK


def cmd_evaluate(args):
    ds = _dataset(args)
    _need_response(ds)
    cfg = _pan_config(args)
    k_values = [int(k) for k in args.k_values.split(",")]
    rows, summary = cross_validate_rmse(
        ds.X, ds.y, cfg, splits=args.splits, train_fraction=args.train_fraction,
        k_values=k_values, seed=cfg.seed, feature_names=ds.names,
        leaf_units=ds.units if cfg.unit_filter else None)
    out = _out_dir(args.out_dir)
    write_rows(out / "rmse.csv", rows)
    dump_json(out / "rmse_summary.json", {str(k): v for k, v in summary.items()})
    outputs = [out / "rmse.csv", out / "rmse_summary.json"]
    if args.emit_plot_data:
        write_rows(out / "plot_data.csv", [{"figure": "rmse", "panel": f"k={r['k']}",
                                            "replicate": r["split"], "metric": "rmse",
                                            "value": r["rmse"]} for r in rows])
        outputs.append(out / "plot_data.csv")
    for k, s in summary.items():
        print(f"k={k} mean_rmse={s['mean']:.6g} sd={s['sd']:.6g}")
    m = RunManifest("evaluate", sys.argv, cfg.seed, cfg.to_dict())
    m.add_input(args.data)
    m.add_input(args.response_file)
    m.outputs = outputs
    m.write(out / "manifest.json")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--threads", type=int, default=0,
                        help="worker threads for independent fits (default: all cores)")
    common.add_argument("--profile", choices=sorted(PROFILES),
                        help="BART draw counts: paper (10000/5000) or desk (1000/1000)")
    common.add_argument("--emit-plot-data", action="store_true",
                        help="also write long-format CSV for boxplots")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", required=True, help="CSV of primary features")
    data.add_argument("--response", help="name of the response column in --data")
    data.add_argument("--response-file", help="single-column CSV holding the response")

    pan = argparse.ArgumentParser(add_help=False)
    pan.add_argument("--config", help="JSON or TOML file with PanConfig fields")
    pan.add_argument("--k", type=int, help="largest subset size for the best-subset sweep")
    pan.add_argument("--scheme", choices=["auto", "unary-first", "binary-first"])

    parser = argparse.ArgumentParser(prog="ibart", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common, data], help="build one descriptor layer")
    p.add_argument("--ops", default="unary",
                   help="'unary', 'binary', 'none' or a comma list such as 'exp,log,square'")
    p.add_argument("--out", required=True, help="output CSV of evaluated descriptors")
    p.add_argument("--dedup-threshold", type=float, default=DEFAULT_DEDUP_THRESHOLD)
    p.add_argument("--cap", type=float, default=1e8)
    p.add_argument("--no-unit-filter", dest="unit_filter", action="store_false")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("select", parents=[common, data, pan], help="full iterative selection")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("bart-select", parents=[common, data],
                       help="one permutation-thresholded BART screen")
    p.add_argument("--expand", choices=["none", "unary", "binary"], default="none",
                   help="screen a generated layer instead of the raw columns")
    p.add_argument("--permutations", type=int, default=50)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--average", type=int, default=10,
                   help="chains averaged for the observed inclusion proportions")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_bart_select)

    p = sub.add_parser("simulate", parents=[common], help="run a simulation suite")
    p.add_argument("--suite", help="JSON suite definition")
    p.add_argument("--family", choices=GENERATORS)
    p.add_argument("--operators", help="comma list of true operators (screening families)")
    p.add_argument("--replicates", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", parents=[common, data, pan],
                       help="repeated train/test RMSE of the selected models")
    p.add_argument("--splits", type=int, default=50)
    p.add_argument("--train-fraction", type=float, default=0.9)
    p.add_argument("--k-values", default="1,2,3,4,5")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NoSignalError, DomainError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception:
        logger.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
