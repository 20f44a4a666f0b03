"""Metropolis samplers for canonical and grand-canonical Gibbs point processes.

Both target densities are taken with respect to Lebesgue measure on the
periodic box ``[0, L)^d``:

* canonical ``(beta, N)``: proportional to ``exp(-beta U(x_1..x_N))``;
* grand-canonical ``(beta, z = exp(beta mu))``: proportional to
  ``z^N exp(-beta U) / N!``.

The grand-canonical chain picks birth, death or displacement with probability
1/3 each.  Births draw a uniform position, deaths a uniform particle, so the
Metropolis-Hastings ratios are ``z |L| / (N + 1) exp(-beta dU)`` and its
reciprocal.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .cluster import cluster_reports, rho_vector
from .geometry import BoxConfiguration, PeriodicBox
from .potential import Delete, Insert, PairPotential, interaction_delta, local_energy, total_energy
from .stats import effective_sample_size

MOVES = ("move", "birth", "death")


@dataclass(frozen=True)
class Ensemble:
    """``canonical`` with fixed ``n``, or ``grand_canonical`` with activity ``exp(log_z)``."""

    kind: str
    n: int | None = None
    log_z: float | None = None

    @classmethod
    def canonical(cls, n: int) -> "Ensemble":
        if n < 0:
            raise ValueError("particle number must be non-negative")
        return cls("canonical", n=int(n))

    @classmethod
    def grand_canonical(cls, z: float | None = None, mu: float | None = None,
                        beta: float | None = None) -> "Ensemble":
        """Give either the activity ``z`` or the pair ``(mu, beta)``; ``z = exp(beta mu)``."""
        if (z is None) == (mu is None):
            raise ValueError("give exactly one of z or mu")
        if z is not None:
            if not z > 0:
                raise ValueError("activity must be positive")
            return cls("grand_canonical", log_z=math.log(z))
        if beta is None:
            raise ValueError("mu needs beta to define the activity")
        return cls("grand_canonical", log_z=beta * mu)

    @property
    def z(self) -> float:
        return math.exp(self.log_z)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "log_z": self.log_z}


@dataclass
class ChainState:
    """Mutable state of one chain.  Not safe to share between threads."""

    config: BoxConfiguration
    potential: PairPotential
    beta: float
    ensemble: Ensemble
    rng: np.random.Generator
    seed: dict
    step_size: float
    energy: float = 0.0
    sweep_count: int = 0
    sweep_steps: int | None = None
    proposed: dict = field(default_factory=lambda: dict.fromkeys(MOVES, 0))
    accepted: dict = field(default_factory=lambda: dict.fromkeys(MOVES, 0))
    _buf: list = field(default_factory=list, repr=False)
    _pos: int = field(default=0, repr=False)

    def uniform(self) -> float:
        """Next U[0, 1) variate; drawn from ``rng`` in blocks for speed."""
        if self._pos >= len(self._buf):
            self._buf = self.rng.random(4096).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    @property
    def box(self) -> PeriodicBox:
        return self.config.box

    @property
    def n(self) -> int:
        return len(self.config)

    def acceptance(self, move: str) -> float:
        p = self.proposed[move]
        return self.accepted[move] / p if p else float("nan")

    def params(self) -> dict:
        return {
            "potential": self.potential.to_dict(),
            "beta": self.beta,
            "ensemble": self.ensemble.to_dict(),
            "box": {"d": self.box.dimension, "L": self.box.side},
            "step_size": self.step_size,
        }


def make_rng(seed) -> tuple[np.random.Generator, dict]:
    """Generator plus a JSON-able record of how it was seeded.

    ``seed`` is an int, a ``SeedSequence`` or an ``(entropy, spawn_key)`` pair.
    """
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    elif isinstance(seed, (tuple, list)):
        ss = np.random.SeedSequence(seed[0], spawn_key=tuple(seed[1]))
    else:
        ss = np.random.SeedSequence(int(seed))
    record = {"entropy": int(ss.entropy), "spawn_key": list(ss.spawn_key)}
    return np.random.Generator(np.random.PCG64(ss)), record


class PlacementError(RuntimeError):
    """Random sequential insertion could not place the requested particles."""


def _random_sequential(config, potential, n, rng, max_tries):
    d, L = config.box.dimension, config.box.side
    tries = 0
    while len(config) < n:
        if tries >= max_tries:
            raise PlacementError(
                f"placed {len(config)} of {n} particles in {max_tries} attempts; "
                f"density {n / config.box.volume:.4g} may be beyond random packing")
        tries += 1
        x = rng.random(d) * L
        if interaction_delta(potential, config, Insert(x)) < math.inf:
            config.insert_point(x, check=False)


def _lattice(config, potential, n, rng):
    d, L = config.box.dimension, config.box.side
    m = max(1, math.ceil(n ** (1.0 / d) - 1e-12))
    spacing = L / m
    if n > 1 and spacing < potential.r_hc:
        raise PlacementError(f"lattice spacing {spacing:.4g} is below the hard core")
    grid = np.stack(np.meshgrid(*[np.arange(m)] * d, indexing="ij"), -1).reshape(-1, d)
    order = rng.permutation(len(grid))[:n]
    offset = rng.random(d) * spacing
    for g in grid[np.sort(order)]:
        config.insert_point((g + 0.5) * spacing + offset - 0.5 * spacing, check=False)


def init_chain(box: PeriodicBox, potential: PairPotential, beta: float, ensemble: Ensemble,
               seed, init: str = "random_sequential", cutoff: float | None = None,
               step_size: float | None = None, max_tries: int = 100_000) -> ChainState:
    """Build a finite-energy starting state, deterministic in ``seed``.

    ``init`` is ``random_sequential`` (uniform insertion respecting the hard
    core), ``lattice`` (a simple cubic arrangement) or ``empty``.  For the grand
    canonical ensemble ``random_sequential`` and ``lattice`` need
    ``ensemble.n`` to be unset and fall back to ``empty``.
    """
    if potential.dimension != box.dimension:
        raise ValueError("potential and box dimensions differ")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    rng, record = make_rng(seed)
    cut = max(potential.r1, cutoff or 0.0) or box.side / 2
    box.require_radius(potential.r1, "potential range")
    config = BoxConfiguration(box, cut)
    n = ensemble.n if ensemble.kind == "canonical" else 0
    if init == "random_sequential":
        _random_sequential(config, potential, n, rng, max_tries)
    elif init == "lattice":
        _lattice(config, potential, n, rng)
    elif init == "empty":
        if n:
            raise ValueError("canonical ensemble with N > 0 cannot start empty")
    else:
        raise ValueError(f"unknown init {init!r}")
    if step_size is None:
        step_size = 0.5 * potential.r_hc if potential.r_hc > 0 else box.side / 10
    energy = total_energy(potential, config.points, box)
    return ChainState(config, potential, float(beta), ensemble, rng, record,
                      float(step_size), energy)


def state_from_config(config: BoxConfiguration, potential: PairPotential, beta: float,
                      ensemble: Ensemble, seed, step_size: float | None = None) -> ChainState:
    """Wrap an existing configuration (e.g. a loaded snapshot) as a chain state."""
    if config.cutoff < potential.r1:
        config = BoxConfiguration(config.box, potential.r1, config.points)
    energy = total_energy(potential, config.points, config.box)
    if energy == math.inf:
        raise ValueError("configuration violates the hard core")
    if ensemble.kind == "canonical" and ensemble.n != len(config):
        raise ValueError("configuration size does not match the canonical N")
    rng, record = make_rng(seed)
    if step_size is None:
        step_size = 0.5 * potential.r_hc if potential.r_hc > 0 else config.box.side / 10
    return ChainState(config, potential, float(beta), ensemble, rng, record,
                      float(step_size), energy)


# -- acceptance rules ----------------------------------------------------------

def _boltzmann_log(beta: float, du: float) -> float:
    """``-beta * dU`` with hard-core overlaps forbidden even at ``beta == 0``."""
    if du == math.inf:
        return -math.inf
    return -beta * du


def birth_log_ratio(state: ChainState, x) -> tuple[float, float]:
    """``(log acceptance ratio, dU)`` for inserting a particle at ``x``."""
    du = interaction_delta(state.potential, state.config, Insert(x))
    log_zv = state.ensemble.log_z + math.log(state.box.volume)
    return log_zv - math.log(state.n + 1) + _boltzmann_log(state.beta, du), du


def death_log_ratio(state: ChainState, i: int) -> tuple[float, float]:
    """``(log acceptance ratio, dU)`` for deleting particle ``i``."""
    du = interaction_delta(state.potential, state.config, Delete(i))
    log_zv = state.ensemble.log_z + math.log(state.box.volume)
    return math.log(state.n) - log_zv + _boltzmann_log(state.beta, du), du


def acceptance_probability(log_ratio: float) -> float:
    return math.exp(min(0.0, log_ratio))


def _accept(state: ChainState, log_ratio: float) -> bool:
    if log_ratio >= 0.0:
        return True
    if log_ratio == -math.inf:
        return False
    return state.uniform() < math.exp(log_ratio)


def _move(state: ChainState):
    n = state.n
    state.proposed["move"] += 1
    if n == 0:
        return
    u = state.uniform
    i = min(int(u() * n), n - 1)
    cfg = state.config
    L, step = state.box.side, state.step_size
    x = [(c + step * (2.0 * u() - 1.0)) % L for c in cfg.points[i].tolist()]
    x = np.array([c if c < L else 0.0 for c in x])
    du = local_energy(state.potential, cfg, x, exclude=i)
    if du == math.inf:
        return
    du -= local_energy(state.potential, cfg, cfg.points[i], exclude=i)
    if _accept(state, -state.beta * du):
        cfg._move(i, x)
        state.energy += du
        state.accepted["move"] += 1


def canonical_step(state: ChainState) -> ChainState:
    """One displacement proposal with Metropolis acceptance ``min(1, exp(-beta dU))``."""
    if state.ensemble.kind != "canonical":
        raise ValueError("canonical_step needs a canonical chain")
    _move(state)
    return state


def gc_step(state: ChainState) -> ChainState:
    """One birth, death or displacement proposal, each chosen with probability 1/3."""
    if state.ensemble.kind != "grand_canonical":
        raise ValueError("gc_step needs a grand-canonical chain")
    u = state.uniform
    kind = int(3.0 * u())
    if kind == 0:
        _move(state)
        return state
    pot, cfg = state.potential, state.config
    log_zv = state.ensemble.log_z + math.log(state.box.volume)
    if kind == 1:
        state.proposed["birth"] += 1
        L = state.box.side
        x = np.array([min(u() * L, math.nextafter(L, 0.0)) for _ in range(state.box.dimension)])
        du = local_energy(pot, cfg, x)
        if du == math.inf:
            return state
        if _accept(state, log_zv - math.log(state.n + 1) - state.beta * du):
            cfg._insert(x)
            state.energy += du
            state.accepted["birth"] += 1
    else:
        state.proposed["death"] += 1
        n = state.n
        if n == 0:
            return state
        i = min(int(u() * n), n - 1)
        du = -local_energy(pot, cfg, cfg.points[i], exclude=i)
        if _accept(state, math.log(n) - log_zv - state.beta * du):
            cfg.remove_point(i)
            state.energy += du
            state.accepted["death"] += 1
    return state


def sweep(state: ChainState) -> ChainState:
    """``state.sweep_steps`` elementary steps, or ``max(N, 1)`` while that is unset.

    With a fluctuating N the second rule makes the sampling times depend on the
    state, which biases grand-canonical averages; :func:`run` therefore freezes
    the length after burn-in.
    """
    step = canonical_step if state.ensemble.kind == "canonical" else gc_step
    steps = state.sweep_steps if state.sweep_steps is not None else max(state.n, 1)
    for _ in range(steps):
        step(state)
    state.sweep_count += 1
    return state


# -- invariant checks -------------------------------------------------------------

class EnergyDriftError(RuntimeError):
    pass


def resync_energy(state: ChainState, rtol: float = 1e-8) -> float:
    """Recompute the total energy, fail if the running sum drifted, then resynchronize."""
    exact = total_energy(state.potential, state.config.points, state.box)
    drift = abs(state.energy - exact)
    if not drift <= rtol * max(1.0, abs(exact)):
        raise EnergyDriftError(f"running energy {state.energy} vs recomputed {exact}")
    state.energy = exact
    return drift


def min_pair_distance(config: BoxConfiguration, upto: float) -> float:
    """Smallest minimal-image pair distance below ``upto`` (``inf`` if none)."""
    pts = config.points
    if len(pts) < 2 or upto <= 0:
        return math.inf
    pairs = cKDTree(pts, boxsize=config.box.side).query_pairs(upto, output_type="ndarray")
    if len(pairs) == 0:
        return math.inf
    diff = config.box.displacement(pts[pairs[:, 0]], pts[pairs[:, 1]])
    return float(np.sqrt(np.einsum("ij,ij->i", diff, diff)).min())


def check_hard_core(state: ChainState):
    r_hc = state.potential.r_hc
    if r_hc > 0 and min_pair_distance(state.config, r_hc) < r_hc:
        raise AssertionError("sampled state contains a hard-core overlap")


# -- observables ------------------------------------------------------------------

def basic_observables(state: ChainState) -> dict:
    return {"N": state.n, "energy": state.energy}


def cluster_observables(R: float, k_max: int):
    """Observable giving free and periodic ``rho_k`` vectors and the wrapped mass at ``R``."""

    def observe(state: ChainState) -> dict:
        free, per = cluster_reports(state.config, R)
        if not (per.mass_balance() and free.mass_balance()):
            raise AssertionError("cluster mass balance violated")
        return {
            "rho": rho_vector(per, k_max),
            "rho_free": rho_vector(free, k_max),
            "wrapped_mass": per.wrapped_mass,
            "finite_mass": sum(k * c for k, c in per.counts.items()) / per.volume,
            "density": per.density,
        }

    observe.params = {"R": R, "k_max": k_max}
    return observe


# -- runs -------------------------------------------------------------------------

@dataclass
class MeasurementSeries:
    """Recorded observables, one row per measurement, plus a parameter header."""

    header: dict
    sweeps: np.ndarray
    data: dict

    def __len__(self):
        return len(self.sweeps)

    def __getitem__(self, name):
        return self.data[name]

    def ess(self) -> dict:
        return {k: effective_sample_size(v) for k, v in self.data.items()}

    def records(self):
        names = list(self.data)
        for row, s in enumerate(self.sweeps):
            rec = {"sweep": int(s)}
            for name in names:
                val = self.data[name][row]
                rec[name] = val.tolist() if isinstance(val, np.ndarray) else _scalar(val)
            yield rec

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            fh.write(json.dumps({"header": self.header}, sort_keys=True) + "\n")
            for rec in self.records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "MeasurementSeries":
        lines = Path(path).read_text().splitlines()
        header = json.loads(lines[0])["header"]
        recs = [json.loads(line) for line in lines[1:] if line]
        sweeps = np.array([r.pop("sweep") for r in recs], dtype=np.int64)
        names = list(recs[0]) if recs else []
        data = {n: np.array([r[n] for r in recs]) for n in names}
        return cls(header, sweeps, data)


def _scalar(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def tune_step(state: ChainState, window_proposed: int, window_accepted: int,
              low: float = 0.3, high: float = 0.5):
    if window_proposed == 0:
        return
    rate = window_accepted / window_proposed
    if rate > high:
        state.step_size *= 1.25
    elif rate < low:
        state.step_size *= 0.8
    state.step_size = float(np.clip(state.step_size, 1e-4, state.box.side / 2))


def run(state: ChainState, sweeps: int, burn_in: int = 0, thin: int = 1,
        observables=(basic_observables,), tune: bool = True, tune_every: int = 10,
        resync_every: int = 10_000, check: bool = True) -> MeasurementSeries:
    """Advance ``burn_in`` sweeps (tuning the step size), then ``sweeps`` more,
    recording ``observables`` every ``thin`` sweeps.

    Each observable maps a state to a dict of named values.  The step size is
    frozen after burn-in, and so is the sweep length: ``max(N, 1)`` with N the
    mean particle number over the second half of burn-in.  The running energy is checked against a full
    recomputation every ``resync_every`` sweeps.
    """
    if thin < 1:
        raise ValueError("thin must be >= 1")
    header = {"seed": state.seed, "params": state.params(), "sweeps": sweeps,
              "burn_in": burn_in, "thin": thin,
              "observables": [getattr(o, "params", o.__name__) for o in observables]}
    last_p, last_a = state.proposed["move"], state.accepted["move"]
    burn_n = []
    for s in range(burn_in):
        burn_n.append(state.n)
        sweep(state)
        if tune and (s + 1) % tune_every == 0:
            tune_step(state, state.proposed["move"] - last_p, state.accepted["move"] - last_a)
            last_p, last_a = state.proposed["move"], state.accepted["move"]
        if (s + 1) % resync_every == 0:
            resync_energy(state)
    header["step_size"] = state.step_size
    if state.sweep_steps is None:
        tail = burn_n[len(burn_n) // 2:]
        state.sweep_steps = max(int(round(float(np.mean(tail)))) if tail else state.n, 1)
    header["sweep_steps"] = state.sweep_steps
    rows: dict[str, list] = {}
    stamps = []
    for s in range(sweeps):
        sweep(state)
        if (s + 1) % resync_every == 0:
            resync_energy(state)
        if (s + 1) % thin == 0:
            if check:
                check_hard_core(state)
            stamps.append(state.sweep_count)
            for obs in observables:
                for k, v in obs(state).items():
                    rows.setdefault(k, []).append(v)
    if sweeps:
        resync_energy(state)
    data = {k: np.array(v) for k, v in rows.items()}
    series = MeasurementSeries(header, np.array(stamps, dtype=np.int64), data)
    series.header["acceptance"] = {m: (state.accepted[m] / state.proposed[m] if state.proposed[m] else None)
                                   for m in MOVES}
    series.header["ess"] = {k: float(v) for k, v in series.ess().items()}
    return series
