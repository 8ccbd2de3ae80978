"""Command line entry point: ``dnoport {run,reference,table,plotdata,evaluate-oos}``.

Exit codes: 0 success, 1 validation or input error, 2 combinatorial guard hit.
Errors are reported on stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import harness, oracle
from .config import ConfigError, load
from .front import load_reference, save_reference
from .instances import InstanceError
from .subsolver import InfeasibleTask, NotPSDError

EXIT_OK, EXIT_VALIDATION, EXIT_GUARD = 0, 1, 2


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    if args.manifest:
        man = harness.rerun(args.manifest, args.out)
    else:
        if not (args.config and args.instance):
            raise ConfigError("run needs --config and --instance, or --manifest")
        rc = load(args.config)
        overrides = {k: v for k, v in (("seed", args.seed), ("eval_cap", args.eval_cap), ("workers", args.workers)) if v is not None}
        if overrides:
            rc.algo = replace(rc.algo, **overrides)
            rc.algo.validate()
        if args.reference:
            rc.reference = args.reference
        if args.label:
            rc.label = args.label
        if args.backend:
            rc.backend = args.backend
        man = harness.execute(rc, args.instance, args.out)
    m = man["metrics"]
    print(
        f"evals={man['budget']['used']} points={m['size']} hv={m['hv']:.6g} gd={m['gd']:.6g} "
        f"wall={man['wall_time']:.2f}s -> {Path(args.out) / harness.MANIFEST}"
    )
    return EXIT_OK


def cmd_reference(args) -> int:
    rc = load(args.config)
    inst = harness.load_instance(args.instance, rc.problem.get("split"))
    cs = rc.constraints(inst.n)
    if args.method == "enumerate":
        front = oracle.enumerate_front(inst, cs, oracle.lambda_grid(args.lambdas), args.guard)
    elif args.method == "epsilon":
        front = oracle.epsilon_constraint_front(inst, cs, args.grids, args.guard)
    elif args.method == "ucpf":
        front = oracle.unconstrained_front(inst, oracle.lambda_grid(args.lambdas))
    elif args.method == "truncate":
        if args.ucpf:
            ucpf = load_reference(args.ucpf)
            if ucpf.meta.get("instance_fingerprint", inst.fingerprint()) != inst.fingerprint():
                raise InstanceError(f"UCPF {args.ucpf} was built for a different instance")
        else:
            ucpf = oracle.unconstrained_front(inst, oracle.lambda_grid(args.lambdas))
        front = oracle.truncate_ucpf(ucpf, inst, cs)
    else:
        seeds = range(args.seed0, args.seed0 + args.runs)
        front = harness.long_run_union(inst, cs, rc.algo, seeds, args.evals)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, side = save_reference(front, out / f"reference-{args.method}.csv")
    print(f"{front.provenance}: {len(front)} points -> {csv_path} (+ {side.name})")
    return EXIT_OK


def cmd_table(args) -> int:
    mans = [harness.read_manifest(p) for p in harness.expand(args.manifests)]
    tab = harness.build_table(mans, args.metric)
    if args.out:
        _emit(harness.table_csv(tab), args.out)
    sys.stdout.write(harness.table_text(tab))
    return EXIT_OK


def cmd_plotdata(args) -> int:
    mans = [harness.read_manifest(p) for p in harness.expand(args.manifests)]
    _emit(harness.plotdata(mans, args.kind), args.out)
    return EXIT_OK


def cmd_oos(args) -> int:
    man = harness.read_manifest(args.manifest)
    _emit(harness.out_of_sample(man, args.pick, args.index, args.benchmark), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dnoport", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the selection search once and write its outputs")
    r.add_argument("--config")
    r.add_argument("--instance")
    r.add_argument("--manifest", help="re-run the configuration recorded in a manifest")
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--eval-cap", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--reference", help="reference front CSV (with JSON sidecar) for metrics")
    r.add_argument("--label")
    r.add_argument("--backend", choices=("python", "cython"))
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("reference", help="build a reference front")
    f.add_argument("--instance", required=True)
    f.add_argument("--config", required=True, help="config holding the constraint keys")
    f.add_argument("--method", choices=("enumerate", "epsilon", "truncate", "ucpf", "long-run"), required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--grids", type=int, default=100)
    f.add_argument("--lambdas", type=int, default=101)
    f.add_argument("--ucpf", help="unconstrained front CSV to truncate (computed when omitted)")
    f.add_argument("--runs", type=int, default=5)
    f.add_argument("--evals", type=int, default=20000)
    f.add_argument("--seed0", type=int, default=1000)
    f.add_argument("--guard", type=int, default=oracle.GUARD)
    f.set_defaults(func=cmd_reference)

    t = sub.add_parser("table", help="aggregate manifests into a Mean/Std/Rank table")
    t.add_argument("manifests", nargs="+")
    t.add_argument("--metric", choices=("hv", "gd"), default="hv")
    t.add_argument("--out", help="also write the table as CSV")
    t.set_defaults(func=cmd_table)

    p = sub.add_parser("plotdata", help="emit tidy CSV for plotting")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--kind", choices=("front", "convergence"), required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_plotdata)

    o = sub.add_parser("evaluate-oos", help="realized profit of a stored portfolio on held-out prices")
    o.add_argument("--manifest", required=True)
    o.add_argument("--pick", choices=harness.PICKS, default="max-return")
    o.add_argument("--index", type=int)
    o.add_argument("--benchmark", help="CSV of date,value for a market index")
    o.add_argument("--out")
    o.set_defaults(func=cmd_oos)
    return ap


def _fail(code: int, exc: Exception) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; 2 is reserved for the guard here
        return EXIT_VALIDATION if exc.code else EXIT_OK
    try:
        return args.func(args)
    except oracle.GuardError as exc:
        return _fail(EXIT_GUARD, exc)
    except (ConfigError, InstanceError, InfeasibleTask, NotPSDError, harness.ExperimentError, ValueError, OSError) as exc:
        return _fail(EXIT_VALIDATION, exc)


if __name__ == "__main__":
    sys.exit(main())
