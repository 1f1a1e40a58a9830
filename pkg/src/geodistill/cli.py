"""
Command-line entry point.

    geodistill gen --kind mixed --out data.csv
    geodistill distill --data data.csv --config cfg.json --out run/
    geodistill eval --train run/synthetic.csv --test test.csv
    geodistill compare --data data.csv --geometries product,euclid --seeds 5
    geodistill verify --lemma all

Exit codes: 0 success, 1 usage error, 2 runtime or data error, 3 a lemma
check failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np

from . import theory_checks
from .data import (LabeledSet, MixedSpec, atomic_write, gen_circle, gen_flat, gen_mixed,
                   gen_tree, load_csv, save_csv, train_test_split)
from .distill import GEOMETRIES, DistillConfig, run_distill
from .errors import CSVFormatError, NonFiniteLossError
from .evaluation import compare_geometries, eval_logreg, eval_ncm

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_LEMMA = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _existing(path):
    if not os.path.isfile(path):
        raise UsageError(f"no such file: {path}")
    return path


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="geodistill", description="Dataset distillation in product spaces.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset as CSV")
    g.add_argument("--kind", choices=["tree", "circle", "flat", "mixed"], required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=3000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--classes", type=int, default=3)
    g.add_argument("--dim", type=int, default=8)
    g.add_argument("--noise", type=float, default=None,
                   help="defaults to 0.1 (tree/circle), 0.5 (flat), mixed spec default")
    g.add_argument("--branching", type=int, default=3)
    g.add_argument("--depth", type=int, default=4)
    g.add_argument("--separation", type=float, default=2.0)
    g.add_argument("--test-out", help="also write a stratified test split here")
    g.add_argument("--n-test", type=int, default=1000)

    d = sub.add_parser("distill", help="distill a CSV dataset")
    d.add_argument("--data", required=True)
    d.add_argument("--config")
    d.add_argument("--out", required=True)
    _add_overrides(d)

    e = sub.add_parser("eval", help="score a distilled set on held-out data")
    e.add_argument("--train", required=True)
    e.add_argument("--test", required=True)
    e.add_argument("--classifier", choices=["ncm", "logreg"], default="ncm")
    e.add_argument("--epochs", type=int, default=500)
    e.add_argument("--lr", type=float, default=0.5)
    e.add_argument("--out", default=".", help="directory for eval.json")

    c = sub.add_parser("compare", help="product vs single-geometry comparison")
    c.add_argument("--data", required=True)
    c.add_argument("--test", help="held-out CSV; defaults to a split of --data")
    c.add_argument("--n-test", type=int, default=1000)
    c.add_argument("--geometries", default=",".join(GEOMETRIES))
    c.add_argument("--seeds", type=int, default=5)
    c.add_argument("--config")
    c.add_argument("--out", default=".")
    _add_overrides(c)

    v = sub.add_parser("verify", help="run the geometric lemma checks")
    v.add_argument("--lemma", choices=[*theory_checks.LEMMAS, "all"], default="all")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default=".")
    return p


def _add_overrides(p):
    p.add_argument("--ipc", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--geometry", choices=GEOMETRIES)
    p.add_argument("--objective", choices=["mean", "moments", "charfn"])
    p.add_argument("--random-curv", action="store_true", default=None)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted config override, e.g. ot.epsilon=0.1 (repeatable)")


def effective_config(args) -> DistillConfig:
    if args.config:
        _existing(args.config)
        with open(args.config, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"{args.config}: invalid JSON ({exc})")
        try:
            cfg = DistillConfig.from_dict(raw)
        except (KeyError, TypeError) as exc:
            raise UsageError(f"{args.config}: {exc.args[0] if exc.args else exc}")
    else:
        cfg = DistillConfig()
    kv = {}
    for name, key in [("ipc", "ipc"), ("iters", "iters"), ("seed", "seed"),
                      ("geometry", "geometry"), ("objective", "objective.kind"),
                      ("random_curv", "random_curv")]:
        val = getattr(args, name, None)
        if val is not None:
            kv[key] = val
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, text = item.split("=", 1)
        kv[key] = _parse_value(text)
    if kv:
        try:
            cfg = cfg.override(**kv)
        except KeyError as exc:
            raise UsageError(str(exc.args[0]))
    return cfg


def _out_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def cmd_gen(args):
    kind = args.kind
    if kind == "tree":
        noise = 0.1 if args.noise is None else args.noise
        ds = gen_tree(args.branching, args.depth, args.dim, noise, args.classes, args.n, args.seed)
    elif kind == "circle":
        noise = 0.1 if args.noise is None else args.noise
        ds = gen_circle(args.classes, args.dim, noise, args.n, args.seed)
    elif kind == "flat":
        noise = 0.5 if args.noise is None else args.noise
        ds = gen_flat(args.classes, args.dim, args.separation, noise, args.n, args.seed)
    else:
        spec = MixedSpec() if args.noise is None else MixedSpec(noise=args.noise)
        ds = gen_mixed(spec, args.n, args.seed)
    if args.test_out:
        train, test = train_test_split(ds, args.n_test, args.seed)
        save_csv(train, args.out)
        save_csv(test, args.test_out)
        print(f"wrote {len(train)} training rows to {args.out} and {len(test)} test rows to {args.test_out}")
    else:
        save_csv(ds, args.out)
        print(f"wrote {len(ds)} rows ({ds.dim} features, {ds.class_count} classes) to {args.out}")
    return EXIT_OK


def cmd_distill(args):
    cfg = effective_config(args)
    ds = load_csv(_existing(args.data))
    out = _out_dir(args.out)
    atomic_write(os.path.join(out, "config.echo.json"), json.dumps(cfg.to_dict(), indent=2) + "\n")
    rep = run_distill(ds, cfg)
    save_csv(rep.synthetic, os.path.join(out, "synthetic.csv"))
    rep.write_metrics(os.path.join(out, "metrics.jsonl"))
    first, last = rep.records[0], rep.records[-1]
    print(f"distilled {len(ds)} points into {len(rep.synthetic)} ({cfg.ipc} per class) "
          f"in {rep.seconds:.1f} s")
    print(f"L_total {first['l_total']:.4f} -> {last['l_total']:.4f}; "
          f"c_H {last['c_h']:.3f}, c_S {last['c_s']:.3f}, "
          f"weights E/H/S {last['w_e']:.3f}/{last['w_h']:.3f}/{last['w_s']:.3f}")
    return EXIT_OK


def cmd_eval(args):
    train = load_csv(_existing(args.train))
    test = load_csv(_existing(args.test))
    if args.classifier == "ncm":
        res = eval_ncm(train, test)
    else:
        res = eval_logreg(train, test, epochs=args.epochs, lr=args.lr)
    out = _out_dir(args.out)
    atomic_write(os.path.join(out, "eval.json"), json.dumps(res.to_dict(), indent=2) + "\n")
    print(f"{res.classifier} accuracy {100 * res.accuracy:.2f}% "
          f"(train {res.train_size}, test {res.test_size})")
    return EXIT_OK


def cmd_compare(args):
    cfg = effective_config(args)
    geos = [s.strip() for s in args.geometries.split(",") if s.strip()]
    bad = [g for g in geos if g not in GEOMETRIES]
    if bad or not geos:
        raise UsageError(f"unknown geometry {bad[0] if bad else args.geometries!r}; "
                         f"choose from {','.join(GEOMETRIES)}")
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    ds = load_csv(_existing(args.data))
    if args.test:
        train, test = ds, load_csv(_existing(args.test))
    else:
        train, test = train_test_split(ds, args.n_test, cfg.seed)
    seeds = [cfg.seed + i for i in range(args.seeds)]

    def progress(cell):
        print(f"  {cell.geometry:<8} seed {cell.seed}: {100 * cell.accuracy:.2f}% ({cell.seconds:.1f} s)")

    table = compare_geometries(train, test, cfg, geos, seeds, progress)
    out = _out_dir(args.out)
    table.save_csv(os.path.join(out, "compare.csv"))
    print(table.to_text(), end="")
    return EXIT_OK


def cmd_verify(args):
    names = list(theory_checks.LEMMAS) if args.lemma == "all" else [args.lemma]
    out = _out_dir(args.out)
    ok = True
    for name in names:
        rep = theory_checks.LEMMAS[name](seed=args.seed)
        rep.save(os.path.join(out, f"lemma_{name}.json"))
        print(rep.summary())
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_LEMMA


COMMANDS = {"gen": cmd_gen, "distill": cmd_distill, "eval": cmd_eval,
            "compare": cmd_compare, "verify": cmd_verify}


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, CSVFormatError, NonFiniteLossError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
