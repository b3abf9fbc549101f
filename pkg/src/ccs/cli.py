"""Command-line entry point: ``ccs <subcommand> ...``.

Exit status: 0 success or convergence, 2 clean decoder non-convergence,
1 usage, input or I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import expander, signals
from .decoders import ALGORITHMS, DecodeConfig, decode
from .errors import CCSError
from .harness import SweepConfig, fastest_map, scaling_study, sweep, write_sweep

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2

MEASUREMENT_MAGIC = "ccs-measurements v1"

log = logging.getLogger("ccs")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _emit(args, payload: dict, human: str) -> None:
    if args.json:
        print(json.dumps(payload, default=_json_default))
    else:
        print(human)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (tuple, set)):
        return list(o)
    return str(o)


def save_measurements(y: np.ndarray, path) -> None:
    lines = [f"{MEASUREMENT_MAGIC} {y.size}"] + [f"{v:.17g}" for v in y.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_measurements(path) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    head = lines[0].split() if lines else []
    if head[:2] != MEASUREMENT_MAGIC.split() or len(head) != 3:
        raise CCSError(f"bad measurement header in {path}")
    m = int(head[2])
    if len(lines) - 1 != m:
        raise CCSError(f"expected {m} measurement values in {path}")
    return np.array([float(v) for v in lines[1:]])


# -- subcommands ----------------------------------------------------------


def cmd_gen_matrix(args) -> int:
    A = expander.generate(args.m, args.n, args.d, seed=args.seed)
    expander.save(A, args.out, binary=args.binary)
    digest = hashlib.sha256(Path(args.out).read_bytes()).hexdigest()
    _emit(
        args,
        {"m": A.m, "n": A.n, "d": A.d, "seed": args.seed, "path": str(args.out), "sha256": digest},
        f"m={A.m} n={A.n} d={A.d} sha256={digest}",
    )
    return EXIT_OK


def cmd_gen_signal(args) -> int:
    spec = signals.SignalSpec(args.kind, args.band, args.seed)
    x = signals.sample_signal(args.n, args.k, spec)
    signals.save(x, args.out)
    digest = hashlib.sha256(Path(args.out).read_bytes()).hexdigest()
    _emit(
        args,
        {"n": x.n, "k": x.k, "kind": args.kind, "seed": args.seed, "path": str(args.out), "sha256": digest},
        f"n={x.n} k={x.k} kind={args.kind} sha256={digest}",
    )
    return EXIT_OK


def cmd_decode(args) -> int:
    A = expander.load(args.matrix)
    x_true = None
    k = args.k_budget
    if args.signal is not None:
        sig = signals.load(args.signal)
        if sig.n != A.n:
            raise CCSError(f"signal length {sig.n} does not match matrix n={A.n}")
        x_true = sig.to_dense()
        k = sig.k if k is None else k
    else:
        if args.y is None:
            raise CCSError("decode needs --signal or --y")
    scales = None
    if args.scale_seed is not None:
        scales = signals.scale_columns_dissociated(A, args.scale_seed)
    if x_true is not None:
        y = expander.apply(A, x_true if scales is None else scales * x_true)
    else:
        y = load_measurements(args.y)
        if y.size != A.m:
            raise CCSError(f"measurement length {y.size} does not match matrix m={A.m}")
    cfg = DecodeConfig(
        algorithm=args.algorithm,
        alpha=args.alpha,
        k_budget=k,
        c=args.c,
        max_iters=args.max_iters,
        tol=args.tol,
        value_match_tol=args.value_tol,
    )
    target = None if x_true is None else (x_true if scales is None else scales * x_true)
    z_hat, report = decode(A, y, cfg, x_true=target)
    x_hat = z_hat if scales is None else z_hat / scales
    if x_true is not None and scales is not None:
        report.exact = bool(np.max(np.abs(x_hat - x_true), initial=0.0) <= 1e-9 * max(1.0, np.max(np.abs(x_true), initial=0.0)))
    payload = report.as_dict()
    payload["matrix"] = str(args.matrix)
    payload["scale_seed"] = args.scale_seed
    if args.out is not None:
        Path(args.out).write_text(json.dumps(payload, indent=2, default=_json_default))
    if args.x_out is not None:
        signals.save(signals.SparseSignal.from_dense(x_hat), args.x_out)
    human = (
        f"{report.algorithm}: converged={report.converged} iterations={report.iterations} "
        f"exact={report.exact} stop={report.stop_reason} time={report.wall_time:.4f}s"
    )
    _emit(args, payload, human)
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def cmd_certify(args) -> int:
    A = expander.load(args.matrix)
    rep = expander.certify_expansion(A, args.k, override_budget=args.override_budget)
    d = rep.as_dict()
    _emit(
        args,
        d,
        f"k={rep.k_checked} eps*={rep.eps_star} ({float(rep.eps_star):.4f}) "
        f"lemma1 eps*={rep.lemma1_eps_star} ({float(rep.lemma1_eps_star):.4f})",
    )
    return EXIT_OK


_SWEEP_FLAGS = {
    # flag dest -> SweepConfig field
    "n": "n",
    "d": "d",
    "algorithms": "algorithms",
    "deltas": "delta_grid",
    "rho_start": "rho_start",
    "rho_step": "rho_step",
    "rho_grid": "rho_grid",
    "trials": "trials_per_cell",
    "success_rule": "success_rule",
    "tol": "tol",
    "band": "band",
    "alpha": "alpha",
    "c": "c",
    "seed": "seed",
    "jobs": "jobs",
}


def _sweep_config(args) -> SweepConfig:
    values = {}
    if args.config is not None:
        raw = json.loads(Path(args.config).read_text())
        known = {f.name for f in fields(SweepConfig)}
        unknown = set(raw) - known
        if unknown:
            raise CCSError(f"unknown sweep config keys: {sorted(unknown)}")
        values.update(raw)
    for dest, name in _SWEEP_FLAGS.items():
        v = getattr(args, dest)
        if v is not None:
            values[name] = v
    return SweepConfig(**values)


def cmd_sweep(args) -> int:
    cfg = _sweep_config(args)
    out = Path(args.out)
    if args.fastest_map:
        cells = fastest_map(cfg)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"fastest-{cfg.config_hash()}.json"
        payload = {
            "master_seed": cfg.seed,
            "config_hash": cfg.config_hash(),
            "config": asdict(cfg),
            "cells": [
                {"delta": c.delta, "rho": c.rho, "winner": c.winner, "mean_time_ms": None if c.mean_time is None else 1e3 * c.mean_time}
                for c in cells
            ],
        }
        path.write_text(json.dumps(payload, indent=2, default=_json_default))
        lines = [f"{c.delta:>8.4f} {c.rho:>6.3f} {c.winner or '-'}" for c in cells]
        _emit(args, payload, "\n".join(["   delta    rho fastest"] + lines))
        return EXIT_OK
    result = sweep(cfg)
    paths = write_sweep(result, out, plotdata=args.emit_plotdata)
    summary = result.summary()
    summary["files"] = {k: str(v) for k, v in paths.items()}
    lines = [f"{'algorithm':<15} {'delta':>8} {'rho*':>8}"]
    lines += [f"{f.algorithm:<15} {f.delta:>8.4f} {f.rho_star:>8.4f}" for f in result.transitions]
    lines.append(f"wrote {paths['csv']} and {paths['json']}")
    _emit(args, summary, "\n".join(lines))
    return EXIT_OK


def cmd_scaling(args) -> int:
    rows = scaling_study(args.delta, args.sizes, args.rho, trials=args.trials, d=args.d, seed=args.seed)
    payload = {"delta": args.delta, "rho": args.rho, "seed": args.seed, "rows": [asdict(r) for r in rows]}
    lines = [f"{'n':>10} {'time_s':>10} {'ok':>6} {'ratio':>7}"]
    for r in rows:
        t = "-" if r.mean_time is None else f"{r.mean_time:.4f}"
        ratio = "-" if r.ratio is None else f"{r.ratio:.3f}"
        lines.append(f"{r.n:>10} {t:>10} {r.successes:>3}/{r.trials:<2} {ratio:>7}")
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


# -- parser ---------------------------------------------------------------


def _csv(conv):
    def parse(s):
        return tuple(conv(v) for v in s.split(",") if v.strip())

    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable JSON on stdout")
    common.add_argument("-v", "--verbose", action="store_true", help="progress logging on stderr")
    p = _Parser(prog="ccs", description="Expander-matrix sparse recovery toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-matrix", parents=[common], help="draw a left d-regular binary matrix")
    g.add_argument("-m", type=int, required=True)
    g.add_argument("-n", type=int, required=True)
    g.add_argument("-d", type=int, default=7)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--out", required=True)
    g.add_argument("--binary", action="store_true", help="write the compact binary form")
    g.set_defaults(func=cmd_gen_matrix)

    s = sub.add_parser("gen-signal", parents=[common], help="draw a sparse test signal")
    s.add_argument("-n", type=int, required=True)
    s.add_argument("-k", type=int, required=True)
    s.add_argument("--kind", choices=signals.KINDS, default="gaussian-dissociated")
    s.add_argument("--band", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(func=cmd_gen_signal)

    dc = sub.add_parser("decode", parents=[common], help="recover x from y = Ax")
    dc.add_argument("--matrix", required=True)
    src = dc.add_mutually_exclusive_group(required=True)
    src.add_argument("--signal", help="ground-truth signal; y is synthesised from it")
    src.add_argument("--y", help="measurement file")
    dc.add_argument("--algorithm", choices=ALGORITHMS, default="parallel-l0")
    dc.add_argument("--alpha", type=float, default=2.0)
    dc.add_argument("--k-budget", type=int, default=None)
    dc.add_argument("--c", type=float, default=2.0)
    dc.add_argument("--max-iters", type=int, default=None)
    dc.add_argument("--tol", type=float, default=1e-6)
    dc.add_argument("--value-tol", type=float, default=signals.DEFAULT_VALUE_TOL)
    dc.add_argument("--scale-seed", type=int, default=None,
                    help="scale columns by i.i.d. normals drawn from this seed")
    dc.add_argument("-o", "--out", default=None, help="write the JSON report here")
    dc.add_argument("--x-out", default=None, help="write the recovered signal here")
    dc.set_defaults(func=cmd_decode)

    c = sub.add_parser("certify", parents=[common], help="exhaustive expansion certificate")
    c.add_argument("--matrix", required=True)
    c.add_argument("-k", type=int, required=True)
    c.add_argument("--override-budget", action="store_true")
    c.set_defaults(func=cmd_certify)

    sw = sub.add_parser("sweep", parents=[common], help="phase-transition sweep or fastest-algorithm map")
    sw.add_argument("--config", default=None, help="JSON file of SweepConfig fields")
    sw.add_argument("-n", dest="n", type=int)
    sw.add_argument("-d", dest="d", type=int)
    sw.add_argument("--algorithms", type=_csv(str))
    sw.add_argument("--deltas", type=_csv(float))
    sw.add_argument("--rho-start", type=float)
    sw.add_argument("--rho-step", type=float)
    sw.add_argument("--rho-grid", type=_csv(float))
    sw.add_argument("--trials", type=int)
    sw.add_argument("--success-rule", type=int)
    sw.add_argument("--tol", type=float)
    sw.add_argument("--band", type=float)
    sw.add_argument("--alpha", type=float)
    sw.add_argument("--c", type=float)
    sw.add_argument("--seed", type=int)
    sw.add_argument("--jobs", type=int)
    sw.add_argument("-o", "--out", default=".")
    sw.add_argument("--emit-plotdata", action="store_true")
    sw.add_argument("--fastest-map", action="store_true",
                    help="compare algorithms per (delta, rho) on --rho-grid")
    sw.set_defaults(func=cmd_sweep)

    sc = sub.add_parser("scaling", parents=[common], help="mean recovery time against n")
    sc.add_argument("--delta", type=float, default=0.01)
    sc.add_argument("--rho", type=float, default=0.05)
    sc.add_argument("--sizes", type=_csv(int), default=(2**16, 2**18, 2**20))
    sc.add_argument("--trials", type=int, default=10)
    sc.add_argument("-d", dest="d", type=int, default=7)
    sc.add_argument("--seed", type=int, default=0)
    sc.set_defaults(func=cmd_scaling)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose or args.command == "sweep" else logging.WARNING,
        format="%(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (CCSError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"ccs {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
