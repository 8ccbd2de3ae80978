"""Experiment orchestration behind the command line: runs, manifests, tables, plot data."""
from __future__ import annotations

import csv
import glob
import io
import json
import subprocess
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, subsolver
from .config import RunConfig, from_mapping
from .dno import RunResult, run
from .front import (
    ReferenceFront,
    front_csv_text,
    load_reference,
    problem_fingerprint,
    read_front_csv,
)
from .instances import Instance, InstanceError, load_orlibrary, load_price_history
from .metrics import MetricContext, hypervolume, normalize, report

MANIFEST = "manifest.json"


class ExperimentError(ValueError):
    """Inconsistent or missing experiment outputs."""


def version_string() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def load_instance(path, split: str | None = None) -> Instance:
    path = Path(path)
    if not path.is_file():
        raise InstanceError(f"instance file {path} not found")
    if path.suffix.lower() == ".csv":
        return load_price_history(path, split)
    return load_orlibrary(path)


def _read_reference(path, inst, cs) -> ReferenceFront:
    return load_reference(path, expect_fingerprint=problem_fingerprint(inst, cs))


def _weights_csv(result: RunResult, n: int) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["risk", "return"] + [f"w{i}" for i in range(n)])
    for p in result.front_portfolios:
        wr.writerow([repr(p.risk), repr(p.ret)] + [repr(float(x)) for x in p.w])
    return buf.getvalue()


def execute(rc: RunConfig, instance_path, out_dir) -> dict:
    """Run once, write front/trace/portfolio files and the manifest, and return the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    split = rc.problem.get("split")
    inst = load_instance(instance_path, split)
    cs = rc.constraints(inst.n)
    fp = problem_fingerprint(inst, cs)
    ref = _read_reference(rc.reference, inst, cs) if rc.reference else None

    snapshots: list[np.ndarray] = []
    prev = subsolver.backend()
    if rc.backend:
        subsolver.set_backend(rc.backend)
    try:
        result = run(inst, cs, rc.algo, on_generation=lambda rec, arch: snapshots.append(arch.copy()))
        backend = subsolver.backend()
    finally:
        subsolver.set_backend(prev)

    if ref is None:
        ref = ReferenceFront(result.archive, "run", {"fingerprint": fp, "note": "final archive of this run"})
    ctx = MetricContext.from_reference(ref)

    trace_rows = []
    front_rows = []
    for rec, arch in zip(result.trace, snapshots):
        rep = report(arch, ctx)
        trace_rows.append([rec["generation"], rec["evals"], repr(rec["seconds"]), repr(rep.hv), repr(rep.gd)])
        front_rows += [[rec["generation"], repr(float(r)), repr(float(g))] for r, g in arch]
    _write_rows(out / "trace.csv", ["generation", "evals", "seconds", "hv", "gd"], trace_rows)
    _write_rows(out / "trace_fronts.csv", ["generation", "risk", "return"], front_rows)
    (out / "front.csv").write_text(front_csv_text(result.front))
    (out / "portfolios.csv").write_text(_weights_csv(result, inst.n))

    final = report(result.front, ctx)
    cfg_echo = rc.to_dict()
    if rc.reference:
        cfg_echo["reference"] = str(Path(rc.reference).resolve())
    manifest = {
        "version": version_string(),
        "label": rc.label,
        "config": cfg_echo,
        "seed": rc.algo.seed,
        "backend": backend,
        "instance": {
            "path": str(Path(instance_path).resolve()),
            "name": inst.name,
            "fingerprint": inst.fingerprint(),
            "n": inst.n,
        },
        "constraints": cs.echo(),
        "problem_fingerprint": fp,
        "budget": {"used": result.evals_used, "cap": rc.algo.eval_cap, "time_cap": rc.algo.time_cap},
        "subsolver_calls": result.solves,
        "wall_time": result.wall_time,
        "metrics": {**final.as_dict(), "context": ctx.describe()},
        "transcript_hash": result.transcript_hash,
        "files": {
            "front": "front.csv",
            "trace": "trace.csv",
            "trace_fronts": "trace_fronts.csv",
            "portfolios": "portfolios.csv",
        },
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def _write_rows(path, header, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)


def read_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST
    if not path.is_file():
        raise ExperimentError(f"manifest {path} not found")
    data = json.loads(path.read_text())
    data["_dir"] = str(path.parent)
    return data


def config_from_manifest(man: dict) -> RunConfig:
    cfg = dict(man["config"])
    cfg.setdefault("backend", man.get("backend"))
    return from_mapping(cfg)


def rerun(manifest_path, out_dir) -> dict:
    man = read_manifest(manifest_path)
    rc = config_from_manifest(man)
    inst_path = man["instance"]["path"]
    got = load_instance(inst_path, rc.problem.get("split")).fingerprint()
    if got != man["instance"]["fingerprint"]:
        raise ExperimentError(f"instance {inst_path} changed since the manifest was written")
    return execute(rc, inst_path, out_dir)


def expand(patterns) -> list[Path]:
    found: list[Path] = []
    for pat in patterns:
        hits = sorted(glob.glob(str(pat), recursive=True)) or ([pat] if Path(pat).exists() else [])
        for h in hits:
            p = Path(h)
            found.append(p / MANIFEST if p.is_dir() else p)
    if not found:
        raise ExperimentError(f"no manifests match {list(map(str, patterns))}")
    return found


# --- long-run reference -------------------------------------------------------


def long_run_union(inst, cs, algo, seeds, evals) -> ReferenceFront:
    """Nondominated union of several long runs, used where no exact reference is affordable."""
    pts, ws = [], []
    for s in seeds:
        cfg = replace(algo, seed=int(s), eval_cap=int(evals), time_cap=None)
        res = run(inst, cs, cfg)
        pts.append(res.front)
        ws += [p.w for p in res.front_portfolios]
    meta = {
        "fingerprint": problem_fingerprint(inst, cs),
        "instance": inst.name,
        "constraints": cs.echo(),
        "seeds": [int(s) for s in seeds],
        "evals": int(evals),
    }
    return ReferenceFront.from_points(np.vstack(pts), "long-run-union", meta, np.array(ws))


# --- tables -------------------------------------------------------------------


def _stats(xs):
    xs = np.asarray(xs, dtype=float)
    std = float(xs.std(ddof=1)) if len(xs) > 1 else 0.0
    return float(xs.mean()), std


def build_table(manifests, metric: str = "hv") -> dict:
    """Mean/std/rank per instance and method plus Total and Final Rank rows.

    Higher HV ranks first; lower GD ranks first.
    """
    if metric not in ("hv", "gd"):
        raise ValueError("metric must be 'hv' or 'gd'")
    groups: dict = {}
    prints: dict = {}
    for m in manifests:
        name = m["instance"]["name"]
        fp = m["problem_fingerprint"]
        if prints.setdefault(name, fp) != fp:
            raise ExperimentError(f"instance {name!r} appears with different fingerprints ({prints[name]} vs {fp})")
        if not m.get("metrics"):
            raise ExperimentError(f"manifest in {m.get('_dir')} has no metric report")
        groups.setdefault(name, {}).setdefault(m["label"], []).append(m["metrics"][metric])
    methods = sorted({lab for g in groups.values() for lab in g})
    rows = []
    totals = dict.fromkeys(methods, 0)
    for name in sorted(groups):
        stats = {lab: _stats(v) + (len(v),) for lab, v in groups[name].items()}
        sign = -1.0 if metric == "hv" else 1.0
        for lab, (mean, std, cnt) in stats.items():
            rank = 1 + sum(1 for other in stats.values() if sign * other[0] < sign * mean)
            totals[lab] += rank
            rows.append({"instance": name, "method": lab, "n": cnt, "mean": mean, "std": std, "rank": rank})
    final = {lab: 1 + sum(1 for t in totals.values() if t < totals[lab]) for lab in methods}
    return {"metric": metric, "methods": methods, "rows": rows, "total": totals, "final_rank": final}


def table_csv(tab: dict) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["instance", "method", "metric", "n", "mean", "std", "rank"])
    for r in tab["rows"]:
        wr.writerow([r["instance"], r["method"], tab["metric"], r["n"], repr(r["mean"]), repr(r["std"]), r["rank"]])
    for lab in tab["methods"]:
        wr.writerow(["Total", lab, tab["metric"], "", "", "", tab["total"][lab]])
    for lab in tab["methods"]:
        wr.writerow(["Final Rank", lab, tab["metric"], "", "", "", tab["final_rank"][lab]])
    return buf.getvalue()


def table_text(tab: dict) -> str:
    methods = tab["methods"]
    w = max(12, *(len(m) + 2 for m in methods))
    lines = [f"{'Instance':<14}{'':<6}" + "".join(f"{m:>{w}}" for m in methods)]
    by = {(r["instance"], r["method"]): r for r in tab["rows"]}
    for name in sorted({r["instance"] for r in tab["rows"]}):
        for k, stat in enumerate(("Mean", "Std", "Rank")):
            cells = []
            for m in methods:
                r = by.get((name, m))
                if r is None:
                    cells.append("-")
                elif stat == "Rank":
                    cells.append(str(r["rank"]))
                else:
                    cells.append(f"{r[stat.lower()]:.2e}")
            lines.append(f"{name if k == 0 else '':<14}{stat:<6}" + "".join(f"{c:>{w}}" for c in cells))
    lines.append(f"{'Total':<20}" + "".join(f"{tab['total'][m]:>{w}}" for m in methods))
    lines.append(f"{'Final Rank':<20}" + "".join(f"{tab['final_rank'][m]:>{w}}" for m in methods))
    return "\n".join(lines) + "\n"


# --- plot data ----------------------------------------------------------------


def _series(m: dict) -> str:
    return f"{m['label']}/{m['instance']['name']}/seed{m['seed']}"


def plotdata(manifests, kind: str) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    if kind == "front":
        wr.writerow(["series", "risk", "return"])
        for m in manifests:
            for r, g in read_front_csv(Path(m["_dir"]) / m["files"]["front"]):
                wr.writerow([_series(m), repr(float(r)), repr(float(g))])
    elif kind == "convergence":
        wr.writerow(["series", "seconds", "hv", "gd"])
        for m in manifests:
            with (Path(m["_dir"]) / m["files"]["trace"]).open(newline="") as fh:
                for row in csv.DictReader(fh):
                    wr.writerow([_series(m), row["seconds"], row["hv"], row["gd"]])
    else:
        raise ValueError("kind must be 'front' or 'convergence'")
    return buf.getvalue()


def trace_hv_from_fronts(man: dict) -> list[float]:
    """Recompute the per-generation HV of a run from its stored archive snapshots."""
    d = Path(man["_dir"])
    ctx = man["metrics"]["context"]
    ideal, nadir, r = ctx["ideal"], ctx["nadir"], ctx["r"]
    snaps: dict[int, list] = {}
    with (d / man["files"]["trace_fronts"]).open(newline="") as fh:
        for row in csv.DictReader(fh):
            snaps.setdefault(int(row["generation"]), []).append((float(row["risk"]), float(row["return"])))
    fake = MetricContext(ReferenceFront(np.zeros((0, 2)), "run"), tuple(ideal), tuple(nadir), tuple(r))
    return [hypervolume(normalize(snaps[g], fake), fake.r) for g in sorted(snaps)]


# --- out-of-sample ------------------------------------------------------------

PICKS = ("max-return", "min-risk", "index")


def _read_weights(path) -> tuple[np.ndarray, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    body = np.array([[float(x) for x in r] for r in rows[1:]])
    if len(body) == 0:
        raise ExperimentError(f"{path} holds no portfolios")
    return body[:, :2], body[:, 2:]


def _benchmark_profit(path, dates, split) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    series = {r[0].strip(): float(r[1]) for r in rows[1:]}
    before = sorted(d for d in series if split is None or d <= split)
    if not before:
        raise ExperimentError(f"benchmark {path} has no value on or before the split date")
    base = series[before[-1]]
    missing = [d for d in dates if d not in series]
    if missing:
        raise ExperimentError(f"benchmark {path} lacks dates such as {missing[0]}")
    return np.array([(series[d] - base) / base for d in dates])


def out_of_sample(man: dict, pick: str = "max-return", index: int | None = None, benchmark=None) -> str:
    """Realized profit of a stored portfolio over the held-out price rows."""
    if pick not in PICKS:
        raise ValueError(f"pick must be one of {PICKS}")
    split = man["config"].get("split")
    inst = load_instance(man["instance"]["path"], split)
    if inst.holdout is None:
        raise ExperimentError("instance has no held-out rows; set split in the config")
    obj, W = _read_weights(Path(man["_dir"]) / man["files"]["portfolios"])
    if pick == "max-return":
        k = int(np.argmax(obj[:, 1]))
    elif pick == "min-risk":
        k = int(np.argmin(obj[:, 0]))
    else:
        if index is None or not 0 <= index < len(W):
            raise ValueError(f"index must be in 0..{len(W) - 1}")
        k = index
    h = inst.holdout
    profit = ((h.prices - h.base_prices) / h.base_prices) @ W[k]
    cols = {"date": list(h.dates), "portfolio": [repr(float(x)) for x in profit]}
    if benchmark is not None:
        cols["benchmark"] = [repr(float(x)) for x in _benchmark_profit(benchmark, h.dates, split)]
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(list(cols))
    wr.writerows(zip(*cols.values()))
    return buf.getvalue()
