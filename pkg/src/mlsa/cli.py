"""Configuration-driven command line: validate, predict, run, plot.

Exit codes: 0 success, 1 domain failure (rejected parameters, missing
artifacts), 2 usage or parse errors.  All artifacts embed the configuration
hash; ``plot`` refuses inputs with mixed hashes.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys

import numpy as np
import scipy.special

from . import harness
from ._svg import loglog_plot
from .asymptotics import predictions_csv, rates
from .config import (ConfigError, build_cost_model, build_family, build_projection,
                     load_config, load_config_document)
from .driver import BallMonitor, default_theta0
from .params import SLOW, InvalidParameters, fill_param_defaults, validate


def _print_report(report) -> None:
    if report.accepted:
        print("accepted")
    else:
        print("rejected")
        for v in report.violations:
            print(f"  violation {v.name}: {v.message}")


def cmd_validate(args) -> int:
    try:
        doc = load_config_document(args.config)
    except ConfigError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    report = validate(fill_param_defaults(doc["params"]))
    _print_report(report)
    return 0 if report.accepted else 1


def _load_or_report(path):
    """Load a full config; returns (config, exit_code) with config None on failure."""
    try:
        return load_config(path), 0
    except ConfigError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return None, 2
    except InvalidParameters as exc:
        _print_report(exc.report)
        return None, 1


def cmd_predict(args) -> int:
    cfg, rc = _load_or_report(args.config)
    if cfg is None:
        return rc
    ns = sorted(n for n in cfg.replication.checkpoints if cfg.params.regime != "critical" or n >= 2)
    table = predictions_csv(cfg.params, ns)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "predictions.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# config_hash={cfg.config_hash()}\n")
            fh.write(table)
        print(f"wrote {path}")
    else:
        print(table, end="")
    return 0


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def _records_csv(records, d: int, cfg_hash: str, seed: int) -> str:
    buf = io.StringIO()
    buf.write(f"# config_hash={cfg_hash} master_seed={seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replica", "n"] + [f"theta_{i}" for i in range(d)]
               + [f"theta_bar_{i}" for i in range(d)] + ["cost"])
    for idx, rec in enumerate(records):
        for cp in rec.checkpoints:
            w.writerow([idx, cp.n] + [repr(float(v)) for v in cp.theta]
                       + [repr(float(v)) for v in cp.theta_bar] + [repr(float(cp.cost))])
    return buf.getvalue()


def cmd_run(args) -> int:
    cfg, rc = _load_or_report(args.config)
    if cfg is None:
        return rc
    spec = cfg.replication
    if args.seed is not None:
        spec = harness.ReplicationSpec(spec.replicas, spec.n_final, spec.checkpoints,
                                       int(args.seed), spec.divergence_radius)
    out_dir = args.out or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    family = build_family(cfg)
    cost_model = build_cost_model(cfg)
    projection = build_projection(cfg)
    theta0 = default_theta0(family)
    radius = spec.divergence_radius
    if radius is None:
        radius = 10.0 * float(np.linalg.norm(theta0 - family.theta_star))
    # L2 monitor defaults: ball of the initial offset size, from n_final/8 on
    eps_l2 = float(np.linalg.norm(theta0 - family.theta_star))
    n0_l2 = max(1, spec.n_final // 8)
    ball = BallMonitor(center=family.theta_star, eps=eps_l2, n0=n0_l2)
    workers = args.workers or min(os.cpu_count() or 1, spec.replicas)
    records = harness.run_replicas(spec, cfg.params, family, cost_model, projection,
                                   theta0, workers=workers, ball=ball)
    cfg_hash = cfg.config_hash()
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg_hash,
        "master_seed": spec.master_seed,
        "complete": False,
        "files": {},
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    files = manifest["files"]  # filled incrementally so partial runs list what completed
    try:
        path = os.path.join(out_dir, "records.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(_records_csv(records, family.d, cfg_hash, spec.master_seed))
        files["records.csv"] = _sha256(path)

        checkpoint = max(spec.checkpoints)
        if family.has_ground_truth():
            report = harness.clt_report(records, cfg.params, family, checkpoint,
                                        divergence_radius=radius,
                                        inputs={"config_hash": cfg_hash,
                                                "master_seed": spec.master_seed})
            payload = report.to_json()
        else:
            payload = json.dumps({"config_hash": cfg_hash,
                                  "skipped": "family has no ground truth"})
        path = os.path.join(out_dir, "clt_report.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(payload)
        files["clt_report.json"] = _sha256(path)

        rows = harness.cost_curve(records, cfg.params)
        buf = io.StringIO()
        buf.write(f"# config_hash={cfg_hash} master_seed={spec.master_seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "mean_cost", "predicted_cost", "ratio"])
        for r in rows:
            w.writerow([r["n"], repr(r["mean_cost"]), repr(r["predicted_cost"]), repr(r["ratio"])])
        path = os.path.join(out_dir, "cost_table.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
        files["cost_table.csv"] = _sha256(path)

        lo = [c for c in spec.checkpoints if n0_l2 <= c <= spec.n_final // 2]
        hi = [c for c in spec.checkpoints if c > spec.n_final // 2]
        windows = []
        if lo:
            windows.append((min(lo), max(lo)))
        if hi:
            windows.append((min(hi), max(hi)))
        mon = harness.l2_monitor(records, cfg.params, family.theta_star, eps_l2, n0_l2, windows)
        path = os.path.join(out_dir, "l2_monitor.json")
        doc = json.loads(mon.to_json())
        doc["config_hash"] = cfg_hash
        doc["master_seed"] = spec.master_seed
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(doc, sort_keys=True))
        files["l2_monitor.json"] = _sha256(path)

        manifest["files"] = files
        manifest["complete"] = True
    finally:
        with open(manifest_path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(manifest, sort_keys=True))
    print(f"wrote {len(manifest['files'])} artifacts to {out_dir}")
    return 0


def _read_hash_comment(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
    if not first.startswith("# config_hash="):
        raise ValueError(f"{path} lacks a config hash")
    return first.removeprefix("# config_hash=").split()[0]


def cmd_plot(args) -> int:
    run_dir = args.run_dir
    manifest_path = os.path.join(run_dir, "manifest.json")
    needed = ["records.csv", "cost_table.csv"]
    missing = [n for n in [os.path.basename(manifest_path)] + needed
               if not os.path.exists(os.path.join(run_dir, n))]
    if missing:
        print(f"missing artifacts: {', '.join(sorted(missing))}", file=sys.stderr)
        return 1
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    cfg_hash = manifest["config_hash"]
    for name in needed:
        h = _read_hash_comment(os.path.join(run_dir, name))
        if h != cfg_hash:
            print(f"mixed config hashes: {name} has {h[:12]}.., manifest {cfg_hash[:12]}..",
                  file=sys.stderr)
            return 1
    from .config import config_from_dict
    cfg = config_from_dict(manifest["config"])
    family = build_family(cfg)
    theta_star = family.theta_star

    by_n: dict[int, list] = {}
    costs: dict[int, list] = {}
    last_bars: dict[int, list] = {}
    with open(os.path.join(run_dir, "records.csv"), "r", encoding="utf-8") as fh:
        fh.readline()
        reader = csv.DictReader(fh)
        d = family.d
        for row in reader:
            n = int(row["n"])
            bar = np.array([float(row[f"theta_bar_{i}"]) for i in range(d)])
            by_n.setdefault(n, []).append(float(np.linalg.norm(bar - theta_star)))
            costs.setdefault(n, []).append(float(row["cost"]))
            if n == cfg.replication.n_final:
                last_bars.setdefault(n, []).append(bar)
    ns = sorted(by_n)
    mean_err = np.array([np.mean(by_n[n]) for n in ns])
    mean_cost = np.array([np.mean(costs[n]) for n in ns])
    keep = mean_err > 0
    mean_err, mean_cost = mean_err[keep], mean_cost[keep]

    if cfg.params.regime == SLOW:
        r = rates(cfg.params).r
        anchor_c, anchor_e = mean_cost[-1], mean_err[-1]
        guide = anchor_e * (mean_cost / anchor_c) ** (-r)
        label = f"slope -{r:.3g}"
    else:
        shape = np.log(mean_cost) / math.log(cfg.params.M) / np.sqrt(mean_cost)
        c = float(mean_err @ shape / (shape @ shape))  # least squares on c alone
        guide = c * shape
        label = "c log(x)/sqrt(x)"
    svg = loglog_plot(mean_cost, mean_err, mean_cost, guide,
                      title="error vs cost", xlabel="cost_n", ylabel="|theta_bar - theta*|",
                      guide_label=label)
    svg_path = os.path.join(run_dir, "error_vs_cost.svg")
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write(svg)

    qq_path = os.path.join(run_dir, "qq_data.csv")
    with open(qq_path, "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={cfg_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["component", "theoretical_quantile", "standardized_value"])
        bars = np.stack(last_bars[cfg.replication.n_final])
        for j in range(bars.shape[1]):
            col = np.sort(bars[:, j])
            col = (col - col.mean()) / (col.std(ddof=1) or 1.0)
            q = scipy.special.ndtri((np.arange(1, len(col) + 1) - 0.5) / len(col))
            for a, b in zip(q, col):
                w.writerow([j, repr(float(a)), repr(float(b))])
    print(f"wrote {svg_path} and {qq_path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mlsa",
                                     description="multilevel averaged stochastic approximation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a configuration against the regime inequalities")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("predict", help="print the asymptotic prediction table")
    p.add_argument("config")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("run", help="run the replicated experiment and write artifacts")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--workers", type=int, default=None, help="parallel replica workers")
    p.add_argument("--out", default=None, help="override the output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot", help="render SVG plots from a completed run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_plot)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
