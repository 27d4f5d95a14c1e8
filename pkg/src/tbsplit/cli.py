"""Command-line entry point.

Subcommands: ``gen``, ``simulate``, ``compare``, ``verify``, ``sweep``. Each
reads a JSON config (``--config``) that the flags override, validates it
completely, and only then writes into ``--out-dir``.

Exit codes: 0 ok, 1 usage/config error, 2 inequality violation, 3 path
disagreement between the analytic and simulated curves.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analytic, simcore, verify
from .model import TIME_TOL, ArrivalTrace, BucketParams, SplitSpec, validate_split
from .routing import RoutingPolicy
from .simcore import ServiceOrder
from .workload import GeneratorSpec, generate, read_trace, write_trace

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION, EXIT_DISAGREE = 0, 1, 2, 3


class ConfigError(Exception):
    pass


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# --------------------------------------------------------------------------
# config parsing


def _load_config(args) -> dict:
    if not args.config:
        return {}
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _workload(cfg: dict, seed) -> GeneratorSpec:
    wl = dict(cfg["workload"])
    if seed is not None:
        wl["seed"] = seed
    return GeneratorSpec.from_dict(wl)


def _trace(cfg: dict, args, base: Path) -> tuple[ArrivalTrace, np.ndarray | None]:
    if "trace" in cfg:
        path = Path(cfg["trace"])
        if not path.is_absolute():
            path = base / path
        return read_trace(path)
    if "workload" in cfg:
        return generate(_workload(cfg, args.seed)), None
    raise ConfigError("config needs either 'trace' or 'workload'")


def _aggregate(cfg: dict) -> BucketParams:
    if "aggregate" not in cfg:
        raise ConfigError("config needs 'aggregate': {rate, burst}")
    return BucketParams.from_dict(cfg["aggregate"])


def _policy(spec, args) -> RoutingPolicy:
    if args.policy:
        spec = args.policy
    return RoutingPolicy.parse(spec if spec is not None else "round_robin")


def _split(cfg: dict, args, aggregate: BucketParams, embedded) -> tuple[SplitSpec, object] | None:
    sp = cfg.get("split")
    if sp is None and args.k is None:
        return None
    sp = dict(sp or {})
    policy_spec = sp.get("policy")
    if args.k is not None:
        if args.k < 1:
            raise ConfigError("--k must be >= 1")
        subs = SplitSpec.equal(aggregate, args.k).sub_buckets
    elif "sub_buckets" in sp:
        subs = tuple(BucketParams.from_dict(b) for b in sp["sub_buckets"])
    elif "k" in sp:
        subs = SplitSpec.equal(aggregate, int(sp["k"])).sub_buckets
    else:
        raise ConfigError("split needs 'sub_buckets' or 'k'")
    if "assignment" in sp and not args.policy:
        policy = RoutingPolicy.custom(sp["assignment"])
    elif embedded is not None and policy_spec is None and not args.policy:
        policy = RoutingPolicy.custom(embedded.tolist())
    else:
        policy = _policy(policy_spec, args)
    split = SplitSpec(subs, policy)
    rep = validate_split(aggregate, split)
    if not rep.valid:
        raise ConfigError("invalid split: " + "; ".join(rep.violations))
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return split, policy


def _order(cfg: dict, args) -> ServiceOrder:
    return ServiceOrder.parse(args.order or cfg.get("order"))


def _out_dir(args, cfg) -> Path:
    out = Path(args.out_dir or cfg.get("out_dir") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    cfg = _load_config(args)
    if "workload" not in cfg:
        raise ConfigError("gen needs a 'workload' object")
    spec = _workload(cfg, args.seed)
    trace = generate(spec)
    path = _out_dir(args, cfg) / cfg.get("output", "trace.jsonl")
    write_trace(trace, path)
    print(f"wrote {len(trace)} arrivals to {path}")
    return EXIT_OK


def _job_rows(res: simcore.SimulationResult, index=None):
    idx = np.arange(len(res)) if index is None else index
    return [
        [int(i), a, int(b), _num(d), _num(e)]
        for i, a, b, d, e in zip(idx.tolist(), res.arrivals.tolist(), res.buckets.tolist(),
                                 res.delays.tolist(), res.departures.tolist())
    ]


def _summary(delays: np.ndarray) -> dict:
    n = int(delays.size)
    s_inf = math.fsum(delays.tolist()) if n else 0.0
    return {
        "n": n,
        "S_inf": _num(s_inf),
        "mean_delay": _num(s_inf / n) if n else None,
        "max_delay": _num(delays.max()) if n else None,
    }


def _curve_rows(times, waiting, latency):
    return [[t, int(n), _num(s)] for t, n, s in zip(times.tolist(), waiting(times).tolist(),
                                                    latency(times).tolist())]


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    base = Path(args.config).parent if args.config else Path(".")
    trace, embedded = _trace(cfg, args, base)
    aggregate = _aggregate(cfg)
    split = _split(cfg, args, aggregate, embedded)
    order = _order(cfg, args)
    out = _out_dir(args, cfg)
    header = ["job_index", "arrival", "bucket", "delay", "departure"]

    if split is None:
        res = simcore.simulate_bucket(trace, aggregate, order)
        _write_csv(out / "jobs.csv", header, _job_rows(res))
        _write_csv(out / "curve.csv", ["time", "N", "S"],
                   _curve_rows(res.event_times, res.waiting_curve, res.latency_curve))
        summary = _summary(res.delays)
    else:
        spec, policy = split
        sim = simcore.simulate_split_system(trace, spec, policy, order)
        for l, res in enumerate(sim.per_bucket):
            _write_csv(out / f"jobs_bucket{l}.csv", header,
                       _job_rows(res, np.flatnonzero(sim.assignment == l)))
        _write_csv(out / "jobs_combined.csv", header, _job_rows(sim.combined))
        _write_csv(out / "curve.csv", ["time", "N", "S"],
                   _curve_rows(sim.combined.event_times, sim.waiting_curve, sim.latency_curve))
        summary = _summary(sim.combined.delays)
        summary["buckets"] = [_summary(r.delays) for r in sim.per_bucket]
    summary["order"] = str(order)
    _dump_json(summary, out / "summary.json")
    print(json.dumps({k: summary[k] for k in ("n", "S_inf", "mean_delay", "max_delay")}))
    return EXIT_OK


def exit_code_for(report: verify.ComparisonReport) -> int:
    if report.path_disagreement:
        return EXIT_DISAGREE
    if not report.holds:
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    base = Path(args.config).parent if args.config else Path(".")
    trace, embedded = _trace(cfg, args, base)
    aggregate = _aggregate(cfg)
    split = _split(cfg, args, aggregate, embedded)
    if split is None:
        raise ConfigError("compare needs a 'split' (or --k)")
    spec, policy = split
    order = _order(cfg, args)
    tol = args.tolerance if args.tolerance is not None else cfg.get("tolerance", TIME_TOL)
    out = _out_dir(args, cfg)

    rep = verify.check_theorem_latency(trace, aggregate, spec, policy, order, tol,
                                       inject_disagreement=args.inject_disagreement)
    grid = rep.event_times
    _write_csv(out / "curves.csv", ["time", "S_one", "S_split"],
               [[t, a, b] for t, a, b in zip(grid.tolist(), rep.one_values.tolist(),
                                              rep.split_values.tolist())])
    body = rep.to_dict()
    body.update(k=spec.k, policy=policy.to_dict(), order=str(order), n=len(trace))
    _dump_json(body, out / "report.json")
    code = exit_code_for(rep)
    print(f"strict_gap={body['strict_gap']} min_slack={body['min_slack']} "
          f"path_error={body['path_error']} exit={code}")
    return code


def _campaign_config(cfg: dict, args) -> verify.CampaignConfig:
    d = dict(cfg)
    d.pop("out_dir", None)
    if args.trials is not None:
        d["trials"] = args.trials
    if args.seed is not None:
        d["seed"] = args.seed
    if args.tolerance is not None:
        d["tolerance"] = args.tolerance
    if args.k is not None:
        d["k_min"] = d["k_max"] = args.k
    if args.policy:
        d["policies"] = [args.policy]
    if args.order:
        d["orders"] = [args.order]
    if args.workers is not None:
        d["workers"] = args.workers
    try:
        return verify.CampaignConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    config = _campaign_config(cfg, args)
    out = _out_dir(args, cfg)
    report = verify.randomized_campaign(config)
    _dump_json(report, out / "campaign.json")
    bad = sum(report["violation_counts"].values())
    print(f"trials={report['trials']} violations={bad} "
          f"path_disagreements={report['path_disagreements']} min_slack={report['min_slack']}")
    if report["path_disagreements"]:
        return EXIT_DISAGREE
    return EXIT_VIOLATION if bad else EXIT_OK


SWEEP_HEADER = ["k", "policy", "load", "gap", "S_one", "S_split", "holds", "path_error"]


def sweep_rows(cfg: dict, seed: int = 0, tolerance: float = TIME_TOL):
    aggregate = _aggregate(cfg)
    ks = [int(k) for k in cfg.get("k_values", [1, 2, 4])]
    policies = list(cfg.get("policies", ["all_to_one", "round_robin", "jsq"]))
    loads = [float(x) for x in cfg.get("loads", [0.5, 1.0])]
    wl = dict(cfg.get("workload", {"kind": "onoff"}))
    wl.setdefault("n", 60)
    order = ServiceOrder.parse(cfg.get("order"))
    for k in ks:
        if k < 1:
            raise ConfigError("k values must be >= 1")
    # validate every cell before computing any
    cells = []
    for load in loads:
        if load <= 0:
            raise ConfigError("loads must be > 0")
        spec = dict(wl, seed=seed)
        if spec["kind"] == "onoff":
            m = int(spec.get("burst_size") or max(1, round(aggregate.burst)))
            spec.update(burst_size=m, burst_gap=spec.get("burst_gap", m / (aggregate.rate * load)))
        elif spec["kind"] == "poisson":
            spec["rate"] = aggregate.rate * load
        else:
            spec["interval"] = 1.0 / (aggregate.rate * load)
        trace = generate(GeneratorSpec.from_dict(spec))
        for k in ks:
            for name in policies:
                cells.append((k, RoutingPolicy.parse(name), load, trace))
    rows = []
    for k, policy, load, trace in cells:
        split = SplitSpec.equal(aggregate, k, policy)
        rep = verify.check_theorem_latency(trace, aggregate, split, policy, order, tolerance)
        rows.append([k, policy.kind, load, _num(rep.strict_gap), _num(rep.one_total),
                     _num(rep.split_total), rep.holds, _num(rep.path_error)])
    return rows


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if args.k is not None:
        cfg["k_values"] = [args.k]
    if args.policy:
        cfg["policies"] = [args.policy]
    if args.order:
        cfg["order"] = args.order
    tol = args.tolerance if args.tolerance is not None else cfg.get("tolerance", TIME_TOL)
    rows = sweep_rows(cfg, args.seed if args.seed is not None else cfg.get("seed", 0), tol)
    out = _out_dir(args, cfg)
    _write_csv(out / "sweep.csv", SWEEP_HEADER, rows)
    print(f"wrote {len(rows)} cells to {out / 'sweep.csv'}")
    if any(r[7] is None or r[7] > tol for r in rows):
        return EXIT_DISAGREE
    return EXIT_OK if all(r[6] for r in rows) else EXIT_VIOLATION


COMMANDS = {
    "gen": cmd_gen,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tbsplit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--seed", type=int)
        s.add_argument("--out-dir")
        s.add_argument("--trials", type=int)
        s.add_argument("--k", type=int)
        s.add_argument("--policy")
        s.add_argument("--order", help="fcfs | lcfs | random[:seed]")
        s.add_argument("--tolerance", type=float)
        if name == "verify":
            s.add_argument("--workers", type=int, help="parallel worker processes")
        else:
            s.set_defaults(workers=None)
        if name == "compare":
            # test hook: offsets the simulated split curve
            s.add_argument("--inject-disagreement", type=float, default=0.0, help=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError, KeyError, TypeError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) else exc
        print(f"tbsplit {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
