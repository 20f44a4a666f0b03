"""Command line entry point: ``gibbsperc <command> [--config F] [--seed S] [--out D] [--threads T]``."""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from .experiments import (ExperimentConfig, empty_region_decay, report, report_decay,
                          sweep_canonical, sweep_mu, write_csv, e_inf_estimate)
from .geometry import dump_snapshot
from .groundstate import TABLE_COLUMNS, build_table
from .integrals import K_MAX_HIT_OR_MISS, zk_cluster_integral, zk_upper_bound
from .lattice import SpinLattice, exact_enumeration, run_ising, ENUMERATION_MAX_SITES
from .mcmc import basic_observables, cluster_observables, init_chain, run

COMMANDS = ("sample", "sweep-mu", "sweep-canonical", "groundstate", "cluster-integrals",
            "ising", "empty-decay")


def _meta(cfg, command):
    return {"command": command, "version": __version__, "seed": cfg.seed, "config": cfg.echo()}


def _stamp(series, cfg, command):
    """Add run metadata to a series header, keeping the chain's own seed record."""
    series.header.update({k: v for k, v in _meta(cfg, command).items() if k != "seed"})


def cmd_sample(cfg, out: Path, threads: int):
    beta, x = cfg.grid()[0]
    state = init_chain(cfg.box, cfg.potential, beta, cfg.ensemble_at(beta, x),
                       seed=(cfg.seed, (0, 0)), init=cfg.init_mode, cutoff=cfg.R)
    series = run(state, cfg.sweeps, cfg.burn_in, cfg.thin,
                 observables=(basic_observables, cluster_observables(cfg.R, cfg.k_max)))
    _stamp(series, cfg, "sample")
    series.to_jsonl(out / "sample.jsonl")
    dump_snapshot(state.config, out / "final.snapshot")
    return [out / "sample.jsonl", out / "final.snapshot"]


def _sweep(fn, name):
    def cmd(cfg, out: Path, threads: int):
        result = fn(cfg, threads)
        paths = [report(result, out, cfg.fmt)]
        for i, s in enumerate(result.streams):
            p = out / f"{name}_stream_{i:03d}.jsonl"
            s.to_jsonl(p)
            paths.append(p)
        return paths
    return cmd


def cmd_groundstate(cfg, out: Path, threads: int):
    tab = build_table(cfg.potential, cfg.K, cfg.restarts, cfg.seed, cfg.e_inf_override)
    meta = _meta(cfg, "groundstate")
    meta.update({"e_inf_hat": tab.e_inf_hat, "e_inf_source": tab.e_inf_source,
                 "nu_star_hat": tab.nu_star_hat, "nu_star_k": tab.nu_star_k,
                 "warnings": tab.warnings})
    if cfg.fmt == "json":
        path = out / "groundstate.json"
        path.write_text(json.dumps({"meta": meta, "rows": list(tab.rows())}, sort_keys=True, indent=1) + "\n")
        return [path]
    return [write_csv(out / "groundstate.csv", TABLE_COLUMNS, list(tab.rows()), meta)]


def cmd_cluster_integrals(cfg, out: Path, threads: int):
    e_inf, source = e_inf_estimate(cfg)
    rows = []
    for b_idx, beta in enumerate(cfg.betas):
        for k in range(1, min(cfg.k_max, K_MAX_HIT_OR_MISS) + 1):
            est = zk_cluster_integral(cfg.potential, k, beta, cfg.R, cfg.samples,
                                      seed=(cfg.seed, b_idx, k))
            bound = zk_upper_bound(k, beta, e_inf, cfg.R, cfg.box.dimension)
            rows.append({"k": k, "beta": beta, "value": est.value, "std_err": est.std_err,
                         "samples": est.samples, "method": est.method, "zk_upper": bound,
                         "e_inf": e_inf, "e_inf_source": source,
                         "bound_ok": est.value <= bound + 3 * est.std_err})
    cols = ["k", "beta", "value", "std_err", "samples", "method", "zk_upper", "e_inf",
            "e_inf_source", "bound_ok"]
    meta = _meta(cfg, "cluster-integrals")
    if cfg.fmt == "json":
        path = out / "cluster_integrals.json"
        path.write_text(json.dumps({"meta": meta, "rows": rows}, sort_keys=True, indent=1) + "\n")
        return [path]
    return [write_csv(out / "cluster_integrals.csv", cols, rows, meta)]


def cmd_ising(cfg, out: Path, threads: int):
    rows, paths = [], []
    for i, beta in enumerate(cfg.betas):
        lat = SpinLattice.new(cfg.lattice_n, cfg.J, cfg.h, beta)
        series = run_ising(lat, cfg.sweeps, cfg.burn_in, cfg.thin, seed=(cfg.seed, (i,)))
        _stamp(series, cfg, "ising")
        p = out / f"ising_{i:03d}.jsonl"
        series.to_jsonl(p)
        paths.append(p)
        row = {"beta": beta, "n": cfg.lattice_n, "J": cfg.J, "h": cfg.h}
        for name in ("m", "energy", "occupied_fraction", "wrapped"):
            row[name] = float(series[name].mean()) if len(series) else math.nan
        if cfg.lattice_n ** 2 <= ENUMERATION_MAX_SITES:
            ex = exact_enumeration(cfg.lattice_n, cfg.J, cfg.h, beta)
            row.update({"m_exact": ex.magnetization, "energy_exact": ex.energy,
                        "wrapped_exact": ex.wrapping})
        rows.append(row)
    cols = ["beta", "n", "J", "h", "m", "energy", "occupied_fraction", "wrapped",
            "m_exact", "energy_exact", "wrapped_exact"]
    paths.append(write_csv(out / "ising.csv", cols, rows, _meta(cfg, "ising")))
    return paths


def cmd_empty_decay(cfg, out: Path, threads: int):
    tables = empty_region_decay(cfg, threads)
    return [report_decay(tables, _meta(cfg, "empty-decay"), out, cfg.fmt)]


HANDLERS = {
    "sample": cmd_sample,
    "sweep-mu": _sweep(sweep_mu, "sweep_mu"),
    "sweep-canonical": _sweep(sweep_canonical, "sweep_canonical"),
    "groundstate": cmd_groundstate,
    "cluster-integrals": cmd_cluster_integrals,
    "ising": cmd_ising,
    "empty-decay": cmd_empty_decay,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gibbsperc", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="INI file; missing keys take defaults")
        p.add_argument("--seed", type=int, help="overrides [mcmc] seed")
        p.add_argument("--out", type=Path, help="output directory (overrides [output] dir)")
        p.add_argument("--threads", type=int, default=1, help="worker processes for chains")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_string("")
        if args.seed is not None:
            cfg.seed = args.seed
        out = args.out if args.out is not None else Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = HANDLERS[args.command](cfg, out, max(1, args.threads))
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0
