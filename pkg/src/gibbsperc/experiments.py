"""Parameter sweeps, bound audits and the empty-region decay diagnostic.

Everything here is driven by an :class:`ExperimentConfig` read from an INI file
with sections ``[potential] [box] [grid] [mcmc] [constants] [output]``.  Chain
``c`` at grid point ``g`` is seeded with ``SeedSequence(seed, spawn_key=(g, c))``,
so results do not depend on how many worker processes run them.

The wrapping fraction ``theta = wrapped_mass / density`` is a finite-box
stand-in for the probability of an infinite cluster.  Where it changes from
near 0 to near 1 locates a finite-size crossover only; how close that is to an
infinite-volume percolation threshold is not established.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import PeriodicBox
from .groundstate import build_table
from .integrals import bound_report
from .mcmc import (Ensemble, PlacementError, basic_observables, cluster_observables,
                   init_chain, run)
from .potential import PairPotential, tail_min, triple_norm
from .stats import batch_count, batch_means, mean_and_error

SECTIONS = ("potential", "box", "grid", "mcmc", "constants", "output")

DEFAULTS = {
    "potential": {"shape": "square_well", "r_hc": "1.0", "r0": "", "r1": "1.5", "depth": "1.0",
                  "inner_width": "0.1", "J": "1.0", "h": "0.2"},
    "box": {"d": "2", "L": "10.0", "n": "3"},
    "grid": {"ensemble": "grand_canonical", "beta": "1.0", "mu": "", "z": "", "N": "",
             "R": "1.5", "chains": "1", "k_max": "6"},
    "mcmc": {"sweeps": "2000", "burn_in": "500", "thin": "1", "init": "auto", "seed": "0",
             "samples": "100000", "restarts": "4", "K": "10"},
    "constants": {"alpha_d": "50.0", "e_inf_override": "", "stability_b": "0.0",
                  "delta": "0.1", "eps": "0.2", "ell": "1.0", "n_max": "6"},
    "output": {"dir": "out", "format": "csv", "streams": "false"},
}


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _opt_float(text: str):
    return float(text) if text.strip() else None


@dataclass
class ExperimentConfig:
    potential: PairPotential
    box: PeriodicBox
    ensemble: str
    betas: list
    mus: list
    zs: list
    Ns: list
    R: float
    chains: int
    k_max: int
    sweeps: int
    burn_in: int
    thin: int
    init: str
    seed: int
    samples: int
    restarts: int
    K: int
    alpha_d: float
    e_inf_override: float | None
    stability_b: float
    delta: float
    eps: float
    ell: float
    n_max: int
    J: float
    h: float
    lattice_n: int
    out_dir: str
    fmt: str
    streams: bool

    def __post_init__(self):
        if self.R < self.potential.r1:
            raise ValueError(f"connectivity radius R = {self.R} must be >= potential range {self.potential.r1}")
        self.box.require_radius(self.R, "connectivity radius")
        if not self.betas:
            raise ValueError("beta grid is empty")
        if self.ensemble not in ("grand_canonical", "canonical"):
            raise ValueError(f"unknown ensemble {self.ensemble!r}")
        if self.mus and self.zs:
            raise ValueError("give either mu or z, not both")
        if self.ensemble == "grand_canonical" and not (self.mus or self.zs):
            raise ValueError("grand-canonical grid needs mu or z values")
        if self.ensemble == "canonical" and not self.Ns:
            raise ValueError("canonical grid needs N values")
        if self.chains < 1 or self.k_max < 1 or self.thin < 1:
            raise ValueError("chains, k_max and thin must be >= 1")
        if self.fmt not in ("csv", "json"):
            raise ValueError("output format must be csv or json")

    # -- loading -----------------------------------------------------------------
    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser) -> "ExperimentConfig":
        unknown = [s for s in cp.sections() if s not in SECTIONS]
        if unknown:
            raise ValueError(f"unknown config sections {unknown}")
        val = {s: dict(DEFAULTS[s]) for s in SECTIONS}
        for s in cp.sections():
            for k, v in cp.items(s):
                key = next((d for d in DEFAULTS[s] if d.lower() == k.lower()), None)
                if key is None:
                    raise ValueError(f"unknown key {k!r} in [{s}]")
                val[s][key] = v
        p, b, g, m, c, o = (val[s] for s in SECTIONS)
        # an unspecified grid falls back to one point
        if g["ensemble"] == "grand_canonical" and not (g["mu"].strip() or g["z"].strip()):
            g["mu"] = "-2.0"
        if g["ensemble"] == "canonical" and not g["N"].strip():
            g["N"] = "20"
        d = int(b["d"])
        shape = p["shape"]
        r_hc, r1, depth = float(p["r_hc"]), float(p["r1"]), float(p["depth"])
        r0 = _opt_float(p["r0"])
        if shape == "square_well":
            pot = PairPotential.square_well(d, r_hc, r1, depth, r0)
        elif shape == "smooth_well":
            pot = PairPotential.smooth_well(d, r_hc, r1, depth, float(p["inner_width"]), r0)
        elif shape == "hard_core":
            pot = PairPotential.hard_core(d, r_hc)
        elif shape == "ideal":
            pot = PairPotential.ideal(d)
        else:
            raise ValueError(f"unknown shape {shape!r}")
        return cls(
            potential=pot, box=PeriodicBox(d, float(b["L"])), ensemble=g["ensemble"],
            betas=_floats(g["beta"]), mus=_floats(g["mu"]), zs=_floats(g["z"]),
            Ns=[int(x) for x in _floats(g["N"])], R=float(g["R"]), chains=int(g["chains"]),
            k_max=int(g["k_max"]), sweeps=int(m["sweeps"]), burn_in=int(m["burn_in"]),
            thin=int(m["thin"]), init=m["init"], seed=int(m["seed"]), samples=int(m["samples"]),
            restarts=int(m["restarts"]), K=int(m["K"]), alpha_d=float(c["alpha_d"]),
            e_inf_override=_opt_float(c["e_inf_override"]), stability_b=float(c["stability_b"]),
            delta=float(c["delta"]), eps=float(c["eps"]), ell=float(c["ell"]),
            n_max=int(c["n_max"]), J=float(p["J"]), h=float(p["h"]), lattice_n=int(b["n"]),
            out_dir=o["dir"], fmt=o["format"],
            streams=o["streams"].strip().lower() in ("1", "true", "yes", "on"),
        )

    @classmethod
    def from_string(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp.read_string(text)
        return cls.from_parser(cp)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_string(Path(path).read_text())

    def echo(self) -> dict:
        """Parsed configuration as plain JSON-able values."""
        out = {}
        for k, v in asdict(self).items():
            if k == "box":
                v = {"d": self.box.dimension, "L": self.box.side}
            elif k == "potential":
                v = self.potential.to_dict()
            out[k] = v
        return out

    def grid(self) -> list[tuple[float, float]]:
        """Grid points ``(beta, x)`` with ``x`` = mu, z or N; beta varies slowest."""
        xs = self.Ns if self.ensemble == "canonical" else (self.mus or self.zs)
        return [(b, x) for b in self.betas for x in xs]

    @property
    def init_mode(self) -> str:
        """``auto`` starts grand-canonical chains empty and canonical ones by random insertion."""
        if self.init != "auto":
            return self.init
        return "random_sequential" if self.ensemble == "canonical" else "empty"

    def ensemble_at(self, beta: float, x) -> Ensemble:
        if self.ensemble == "canonical":
            return Ensemble.canonical(int(x))
        if self.mus:
            return Ensemble.grand_canonical(mu=x, beta=beta)
        return Ensemble.grand_canonical(z=x)


# -- e_inf provenance ------------------------------------------------------------------

def e_inf_estimate(cfg: ExperimentConfig) -> tuple[float, str]:
    """``(e_inf, source)``: the override if set, 0 for shapes without a tail,
    otherwise ``min_k E_k/k`` from a ground-state table."""
    if cfg.e_inf_override is not None:
        return cfg.e_inf_override, "override"
    if not cfg.potential.is_admissible:
        return 0.0, "exact"
    tab = build_table(cfg.potential, cfg.K, cfg.restarts, cfg.seed)
    return tab.e_inf_hat, "min_k"


# -- per-chain work -------------------------------------------------------------------

_SERIES = ("density", "wrapped_mass", "finite_mass", "rho", "rho_free")


def _chain_task(args):
    cfg, g, c, beta, x = args
    try:
        state = init_chain(cfg.box, cfg.potential, beta, cfg.ensemble_at(beta, x),
                           seed=(cfg.seed, (g, c)), init=cfg.init_mode, cutoff=cfg.R)
    except PlacementError as exc:
        return {"error": str(exc)}
    series = run(state, cfg.sweeps, cfg.burn_in, cfg.thin,
                 observables=(basic_observables, cluster_observables(cfg.R, cfg.k_max)))
    nb = min(batch_count(series["density"]), batch_count(series["wrapped_mass"])) if len(series) else 0
    out = {"n_batches": nb, "acceptance": series.header["acceptance"],
           "ess": series.header["ess"], "N_mean": float(np.mean(series["N"])) if len(series) else math.nan}
    for name in _SERIES:
        out[name] = batch_means(series[name], nb) if nb else np.zeros((0,))
    if cfg.streams:
        out["stream"] = series
    return out


def _run_tasks(tasks, threads: int):
    if threads <= 1 or len(tasks) <= 1:
        return [_chain_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(_chain_task, tasks))


def _ratio(num, den):
    """Ratio of means with a linearized standard error from paired batch values."""
    num, den = np.asarray(num, float), np.asarray(den, float)
    mden = den.mean() if len(den) else 0.0
    if mden <= 0:
        return 0.0, 0.0
    r = num.mean() / mden
    if len(den) < 2:
        return float(r), 0.0
    resid = num - r * den
    return float(r), float(resid.std(ddof=1) / math.sqrt(len(den)) / mden)


def _aggregate(cfg: ExperimentConfig, beta, x, chains: list) -> dict:
    point = {"beta": beta, "x": x}
    errors = [ch["error"] for ch in chains if "error" in ch]
    if errors:
        point["error"] = errors[0]
        return point
    pooled = {name: np.concatenate([np.asarray(ch[name]).reshape(len(ch[name]), -1) for ch in chains])
              for name in _SERIES}
    point["n_batches"] = int(len(pooled["density"]))
    for name in ("density", "wrapped_mass", "finite_mass"):
        mean, se = mean_and_error(pooled[name][:, 0])
        point[name], point[name + "_se"] = float(mean), float(se)
    for name in ("rho", "rho_free"):
        mean, se = mean_and_error(pooled[name])
        point[name] = [float(v) for v in np.atleast_1d(mean)]
        point[name + "_se"] = [float(v) for v in np.atleast_1d(se)]
    point["theta"], point["theta_se"] = _ratio(pooled["wrapped_mass"][:, 0], pooled["density"][:, 0])
    point["N_mean"] = float(np.mean([ch["N_mean"] for ch in chains]))
    point["ess_min"] = float(min(min(ch["ess"].values()) for ch in chains))
    for m in ("move", "birth", "death"):
        rates = [ch["acceptance"][m] for ch in chains if ch["acceptance"][m] is not None]
        point["accept_" + m] = float(np.mean(rates)) if rates else None
    return point


def _decay_audit(cfg, point, e_inf, source):
    beta, mu = point["beta"], point["mu"]
    tn = triple_norm(cfg.potential)
    m = tail_min(cfg.potential)[0] if cfg.potential.is_admissible else 0.0
    rep = bound_report(beta, mu, e_inf, cfg.R, cfg.box.dimension, tn, cfg.k_max, m=m,
                       delta=cfg.delta, eps=cfg.eps, alpha_d=cfg.alpha_d, ell=cfg.ell)
    ks = np.arange(1, cfg.k_max + 1)
    krho = ks * np.asarray(point["rho"])
    kse = ks * np.asarray(point["rho_se"])
    over = krho > np.asarray(rep.decay_rhs) + 3 * kse
    point["decay_rhs"] = rep.decay_rhs
    point["decay_violations"] = [int(k) for k in ks[over]]
    point["e_inf"] = e_inf
    point["e_inf_source"] = source
    point["audit_applies"] = bool(mu < e_inf)
    point["mayer_radius_lb"] = rep.mayer_radius_lb
    point["mu_plus_rhs"] = rep.mu_plus_rhs


@dataclass
class SweepResult:
    kind: str
    k_max: int
    points: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    streams: list = field(default_factory=list, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "k_max": self.k_max, "meta": self.meta, "points": self.points}

    @classmethod
    def from_dict(cls, d: dict) -> "SweepResult":
        return cls(d["kind"], d["k_max"], d["points"], d["meta"])


def _meta(cfg: ExperimentConfig, command: str) -> dict:
    return {"command": command, "version": __version__, "seed": cfg.seed, "config": cfg.echo()}


def _sweep(cfg: ExperimentConfig, kind: str, threads: int) -> SweepResult:
    grid = cfg.grid()
    tasks = [(cfg, g, c, beta, x) for g, (beta, x) in enumerate(grid) for c in range(cfg.chains)]
    outs = _run_tasks(tasks, threads)
    result = SweepResult(kind, cfg.k_max, meta=_meta(cfg, kind))
    e_inf = source = None
    if kind == "sweep_mu" and cfg.potential.shape != "ideal" and grid:
        e_inf, source = e_inf_estimate(cfg)
    for g, (beta, x) in enumerate(grid):
        chains = outs[g * cfg.chains:(g + 1) * cfg.chains]
        point = _aggregate(cfg, beta, x, chains)
        x = point.pop("x")
        if kind == "sweep_canonical":
            point["N"] = int(x)
        elif cfg.mus:
            point["mu"], point["z"] = x, math.exp(beta * x)
        else:
            point["z"], point["mu"] = x, (math.log(x) / beta if beta > 0 else None)
        if e_inf is not None and "error" not in point and point["mu"] is not None:
            _decay_audit(cfg, point, e_inf, source)
        result.points.append(point)
        result.streams.extend(ch.get("stream") for ch in chains if "stream" in ch)
    return result


def sweep_mu(cfg: ExperimentConfig, threads: int = 1) -> SweepResult:
    """Grand-canonical grid over ``(beta, mu)`` (or ``(beta, z)``) with decay-bound audit."""
    if cfg.ensemble != "grand_canonical":
        raise ValueError("sweep_mu needs a grand-canonical grid")
    return _sweep(cfg, "sweep_mu", threads)


def sweep_canonical(cfg: ExperimentConfig, threads: int = 1) -> SweepResult:
    """Canonical grid over ``(beta, N)``; infeasible placements are reported per point."""
    if cfg.ensemble != "canonical":
        raise ValueError("sweep_canonical needs a canonical grid")
    return _sweep(cfg, "sweep_canonical", threads)


def theta_monotone(points, n_se: float = 3.0) -> bool:
    """True if no consecutive drop of ``theta`` exceeds ``n_se`` combined standard errors."""
    for a, b in zip(points[:-1], points[1:]):
        if b["theta"] < a["theta"] - n_se * math.hypot(a["theta_se"], b["theta_se"]):
            return False
    return True


# -- empty-region decay -------------------------------------------------------------

def region_family(n_max: int, d: int) -> list[tuple[str, int, np.ndarray]]:
    """``(name, size, offsets)`` for straight segments along every axis and, from
    size 3 on, L-shapes in the first two axes (arm lengths ``ceil(n/2)`` and the rest)."""
    fam = []
    for n in range(1, n_max + 1):
        for axis in range(d):
            off = np.zeros((n, d), dtype=np.int64)
            off[:, axis] = np.arange(n)
            fam.append((f"segment{axis}", n, off))
        if n >= 3 and d >= 2:
            a = (n + 1) // 2
            off = np.zeros((n, d), dtype=np.int64)
            off[:a, 0] = np.arange(a)
            off[a:, 0] = a - 1
            off[a:, 1] = np.arange(1, n - a + 1)
            fam.append(("L", n, off))
    return fam


def _empty_cells(points, m: int, ell: float, d: int) -> np.ndarray:
    occ = np.zeros((m,) * d, dtype=bool)
    if len(points):
        idx = np.minimum((np.asarray(points) / ell).astype(np.int64), m - 1)
        occ[tuple(idx.T)] = True
    return ~occ


def region_empty_fractions(points, m: int, ell: float, d: int, family) -> np.ndarray:
    """Fraction of the ``m^d`` translates of each region with every cell empty."""
    empty = _empty_cells(points, m, ell, d)
    out = np.empty(len(family))
    for i, (_, _, off) in enumerate(family):
        acc = np.ones_like(empty)
        for o in off:
            acc &= np.roll(empty, shift=tuple(-o), axis=tuple(range(d)))
        out[i] = acc.mean()
    return out


def _fit_rate(sizes, p):
    """Least-squares slope of ``log p`` against size; returns ``(alpha, log A)``."""
    slope, icpt = np.polyfit(np.asarray(sizes, float), np.log(p), 1)
    return -float(slope), float(icpt)


@dataclass
class DecayTable:
    beta: float
    x: float
    rows: list
    alpha_hat: float
    alpha_se: float
    log_A: float
    alpha_d: float
    ell: float
    n_samples: int

    def to_dict(self):
        return asdict(self)


def empty_region_decay(cfg: ExperimentConfig, threads: int = 1) -> list[DecayTable]:
    """Empirical ``P(region empty)`` over segments and L-shapes of sizes ``1..n_max``
    and the fitted exponential rate, one table per grid point.

    The standard error of the rate is a jackknife over batches; sizes with no
    empty observation are marked censored and left out of the fit.
    """
    if cfg.n_max < 3:
        raise ValueError("n_max must be >= 3 for a meaningful fit")
    m = cfg.box.side / cfg.ell
    if abs(m - round(m)) > 1e-9 * m:
        raise ValueError(f"cell side {cfg.ell} does not partition box side {cfg.box.side}")
    m = int(round(m))
    d = cfg.box.dimension
    family = region_family(cfg.n_max, d)
    sizes = np.array([n for _, n, _ in family])

    def observe(state):
        return {"empty": region_empty_fractions(state.config.points, m, cfg.ell, d, family)}

    tables = []
    for g, (beta, x) in enumerate(cfg.grid()):
        state = init_chain(cfg.box, cfg.potential, beta, cfg.ensemble_at(beta, x),
                           seed=(cfg.seed, (g, 0)), init=cfg.init_mode, cutoff=cfg.R)
        series = run(state, cfg.sweeps, cfg.burn_in, cfg.thin, observables=(basic_observables, observe))
        frac = series["empty"]
        p_hat = frac.mean(axis=0)
        ok = p_hat > 0
        nb = batch_count(frac.sum(axis=1))
        batches = batch_means(frac, nb)
        if ok.sum() >= 2 and len(np.unique(sizes[ok])) >= 2:
            alpha, log_a = _fit_rate(sizes[ok], p_hat[ok])
            jk = []
            for b in range(len(batches)):
                rest = np.delete(batches, b, axis=0).mean(axis=0)[ok]
                if np.all(rest > 0):
                    jk.append(_fit_rate(sizes[ok], rest)[0])
            jk = np.asarray(jk)
            se = float(math.sqrt((len(jk) - 1) / len(jk) * np.sum((jk - jk.mean()) ** 2))) if len(jk) > 1 else math.nan
        else:
            alpha, log_a, se = math.nan, math.nan, math.nan
        rows = [{"shape": name, "size": int(n), "p_hat": float(p), "censored": bool(p <= 0)}
                for (name, n, _), p in zip(family, p_hat)]
        tables.append(DecayTable(beta, x, rows, alpha, se, log_a, cfg.alpha_d, cfg.ell, len(frac)))
    return tables


# -- reports --------------------------------------------------------------------------

def sweep_columns(kind: str, k_max: int) -> list[str]:
    """Documented CSV schema of a sweep report."""
    head = ["beta", "N"] if kind == "sweep_canonical" else ["beta", "mu", "z"]
    cols = head + ["N_mean", "density", "density_se", "theta", "theta_se", "wrapped_mass",
                   "wrapped_mass_se", "finite_mass", "finite_mass_se", "n_batches", "ess_min",
                   "accept_move", "accept_birth", "accept_death"]
    for name in ("rho", "rho_se", "rho_free", "rho_free_se"):
        cols += [f"{name}_{k}" for k in range(1, k_max + 1)]
    if kind == "sweep_mu":
        cols += [f"decay_rhs_{k}" for k in range(1, k_max + 1)]
        cols += ["decay_violations", "e_inf", "e_inf_source", "audit_applies",
                 "mayer_radius_lb", "mu_plus_rhs"]
    return cols + ["error"]


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return " ".join(str(x) for x in v)
    return str(v)


def _flat_row(point: dict) -> dict:
    row = {}
    for k, v in point.items():
        if isinstance(v, list) and k != "decay_violations":
            for i, x in enumerate(v, start=1):
                row[f"{k}_{i}"] = x
        else:
            row[k] = v
    return row


def _comment_header(meta: dict) -> str:
    return (f"# version: {meta.get('version')}\n# seed: {json.dumps(meta.get('seed'))}\n"
            f"# config: {json.dumps(meta.get('config'), sort_keys=True)}\n")


def write_csv(path, columns, rows, meta) -> Path:
    path = Path(path)
    buf = io.StringIO()
    buf.write(_comment_header(meta))
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({c: _cell(r.get(c)) for c in columns})
    path.write_text(buf.getvalue())
    return path


def read_csv(path) -> tuple[list, list]:
    """``(columns, rows)`` of a report CSV, skipping the comment header."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    return list(reader.fieldnames or []), list(reader)


def report(result, out_dir, fmt: str = "csv", name: str | None = None) -> Path:
    """Write a :class:`SweepResult` (or decay tables) deterministically."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(result, SweepResult):
        name = name or result.kind
        if fmt == "json":
            path = out_dir / f"{name}.json"
            path.write_text(json.dumps(result.to_dict(), sort_keys=True, indent=1) + "\n")
            return path
        if fmt != "csv":
            raise ValueError(f"unknown format {fmt!r}")
        return write_csv(out_dir / f"{name}.csv", sweep_columns(result.kind, result.k_max),
                         [_flat_row(p) for p in result.points], result.meta)
    raise TypeError(f"cannot report {type(result).__name__}")


def load_result(path) -> SweepResult:
    return SweepResult.from_dict(json.loads(Path(path).read_text()))


DECAY_COLUMNS = ["beta", "x", "shape", "size", "p_hat", "censored", "alpha_hat", "alpha_se",
                 "log_A", "alpha_d", "ell", "n_samples"]


def report_decay(tables: list, meta: dict, out_dir, fmt: str = "csv") -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = out_dir / "empty_decay.json"
        path.write_text(json.dumps({"meta": meta, "tables": [t.to_dict() for t in tables]},
                                   sort_keys=True, indent=1) + "\n")
        return path
    rows = []
    for t in tables:
        for r in t.rows:
            rows.append({**{k: getattr(t, k) for k in DECAY_COLUMNS if hasattr(t, k)}, **r})
    return write_csv(out_dir / "empty_decay.csv", DECAY_COLUMNS, rows, meta)
