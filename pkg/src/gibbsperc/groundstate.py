"""Numerical ground-state energies ``E_k = inf U(x_1..x_k)`` and derived constants.

The search is heuristic and carries no optimality proof.

* Square wells have a piecewise-constant energy surface, so gradients carry no
  information.  Candidates come from greedy growth of fragments of a few
  Bravais lattices (spacings inside the well), then particle-relocation probes
  that place a particle at the best of many random spots inside the wells of
  the others, accepting any move that does not raise the energy.
* Smooth wells start from the same lattice fragments or random placements in a
  box of side ``r1 * k**(1/d)`` and run a coordinate pattern search whose step
  halves until it drops below ``1e-6 * r1``.

Restart ``r`` draws from the stream ``SeedSequence(seed, spawn_key=(k, r))``,
so a run with more restarts sees the same candidates plus new ones and never
returns a worse value.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .potential import PairPotential, pair_distances, pair_sq_distances, total_energy


@dataclass(frozen=True)
class GroundStateRecord:
    k: int
    energy: float
    coords: np.ndarray
    min_pair_dist: float
    diameter: float
    restarts_used: int

    @classmethod
    def from_coords(cls, v: PairPotential, coords, restarts_used: int = 0) -> "GroundStateRecord":
        coords = np.asarray(coords, dtype=float).reshape(-1, v.dimension)
        coords = coords - coords.mean(axis=0)
        r = pair_distances(coords)
        return cls(len(coords), total_energy(v, coords), coords,
                   float(r.min()) if r.size else math.inf,
                   float(r.max()) if r.size else 0.0, restarts_used)


# -- lattice fragments ---------------------------------------------------------------

def _lattice_bases(v: PairPotential) -> list[np.ndarray]:
    """Candidate Bravais bases with nearest-neighbour spacing inside the well."""
    d = v.dimension
    lo = max(v.r_hc, v.r0)
    width = v.r1 - lo
    spacings = [lo + f * width for f in (0.02, 0.1, 0.25, 0.5)]
    bases = []
    for a in spacings:
        bases.append(a * np.eye(d))
        if d == 2:
            for deg in (60, 70, 75, 80, 85):
                t = math.radians(deg)
                bases.append(a * np.array([[1.0, 0.0], [math.cos(t), math.sin(t)]]))
        elif d == 3:
            bases.append(a / math.sqrt(2) * np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]], float))
    return bases


def _lattice_sites(basis: np.ndarray, k: int) -> np.ndarray:
    d = len(basis)
    m = int(math.ceil(k ** (1.0 / d))) + 2
    ints = np.array(list(itertools.product(range(-m, m + 1), repeat=d)), dtype=float)
    sites = ints @ basis
    order = np.argsort(np.einsum("ij,ij->i", sites, sites), kind="stable")
    return sites[order]


def _grow_fragment(v: PairPotential, sites: np.ndarray, k: int, rng) -> np.ndarray:
    """Greedy growth on a site set: always add the site with the lowest interaction
    with the current fragment; ties go to the site nearest the centroid, then at random."""
    chosen = [0]
    free = np.ones(len(sites), dtype=bool)
    free[0] = False
    inter = np.zeros(len(sites))
    inter += _pair_energy(v, sites, sites[0])
    for _ in range(k - 1):
        cand = np.flatnonzero(free)
        centroid = sites[chosen].mean(axis=0)
        dist = np.linalg.norm(sites[cand] - centroid, axis=1)
        noise = rng.random(len(cand))
        order = np.lexsort((noise, np.round(dist, 9), inter[cand]))
        pick = cand[order[0]]
        chosen.append(pick)
        free[pick] = False
        inter += _pair_energy(v, sites, sites[pick])
    return sites[chosen].copy()


def _pair_energy(v, pts, x):
    r2 = np.einsum("ij,ij->i", pts - x, pts - x)
    out = np.zeros(len(pts))
    mask = r2 < v.r1 * v.r1
    out[mask] = v(np.sqrt(r2[mask]))
    # coincident site is the particle itself; treat as no interaction
    out[r2 == 0] = 0.0
    return out


def lattice_candidates(v: PairPotential, k: int, rng) -> list[np.ndarray]:
    return [_grow_fragment(v, _lattice_sites(b, k), k, rng) for b in _lattice_bases(v)]


# -- local search ------------------------------------------------------------------

def _local_energies(v, coords):
    k = len(coords)
    diff = coords[:, None, :] - coords[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(r, np.inf)
    e = np.where(r < v.r1, v(np.minimum(r, v.r1)), 0.0)
    np.fill_diagonal(e, 0.0)
    return e.sum(axis=1) if k else np.zeros(0)


def relocation_probes(v: PairPotential, coords, rng, rounds: int = 30, samples: int = 64):
    """Move single particles to the best of ``samples`` random spots in the wells of
    the others, accepting moves that do not raise the total energy."""
    x = np.array(coords, dtype=float)
    k, d = x.shape
    if k < 2:
        return x, total_energy(v, x)
    lo = max(v.r_hc, v.r0)
    energy = total_energy(v, x)
    for _ in range(rounds):
        local = _local_energies(v, x)
        # weakest-bound particles first, random tie-break
        for i in np.lexsort((rng.random(k), -local)):
            others = np.delete(x, i, axis=0)
            anchors = others[rng.integers(len(others), size=samples)]
            direction = rng.normal(size=(samples, d))
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            radius = rng.uniform(lo, v.r1, size=(samples, 1))
            trial = anchors + radius * direction
            diff = trial[:, None, :] - others[None, :, :]
            r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
            vals = np.where(r < v.r1, v(np.minimum(r, v.r1)), 0.0).sum(axis=1)
            best = int(np.argmin(vals))
            if vals[best] <= local[i] and np.isfinite(vals[best]):
                x[i] = trial[best]
                energy = total_energy(v, x)
                local = _local_energies(v, x)
    return x, energy


def pattern_search(v: PairPotential, coords, step: float | None = None, tol: float | None = None):
    """Coordinate pattern search: try ``+-step`` on every coordinate, halve the step
    when a full pass brings no improvement, stop once ``step < tol``."""
    x = np.array(coords, dtype=float)
    step = 0.25 * v.r1 if step is None else step
    tol = 1e-6 * v.r1 if tol is None else tol
    energy = total_energy(v, x)
    while step >= tol:
        improved = False
        for i, j in itertools.product(range(len(x)), range(x.shape[1])):
            for sign in (1.0, -1.0):
                x[i, j] += sign * step
                e = total_energy(v, x)
                if e < energy:
                    energy = e
                    improved = True
                    break
                x[i, j] -= sign * step
        if not improved:
            step *= 0.5
    return x, energy


def _random_start(v: PairPotential, k: int, rng, max_tries: int = 10_000):
    side = v.r1 * k ** (1.0 / v.dimension)
    pts = []
    tries = 0
    while len(pts) < k:
        x = rng.random(v.dimension) * side
        tries += 1
        if all(np.linalg.norm(x - p) >= v.r_hc for p in pts) or tries > max_tries:
            pts.append(x)
    return np.array(pts)


def minimize_energy(v: PairPotential, k: int, restarts: int = 4, seed: int = 0,
                    seeds=()) -> GroundStateRecord:
    """Best-of-restarts estimate of ``E_k``.

    Restart 0 starts from the best greedy lattice fragment; later restarts from
    random placements.  ``seeds`` adds caller-supplied starting configurations
    (e.g. grown from smaller minimizers).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if restarts < 1:
        raise ValueError("need at least one restart")
    if k == 1:
        return GroundStateRecord.from_coords(v, np.zeros((1, v.dimension)), 0)
    smooth = v.shape == "smooth_well"
    best_x, best_e = None, math.inf

    def polish(x, rng):
        if smooth:
            return pattern_search(v, x)
        return relocation_probes(v, x, rng)

    for r in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k, r)))
        if r == 0:
            starts = lattice_candidates(v, k, rng) + [np.asarray(s, float) for s in seeds]
            energies = [total_energy(v, s) for s in starts]
            start = starts[int(np.argmin(energies))]
        else:
            start = _random_start(v, k, rng)
        x, e = polish(start, rng)
        if e < best_e:
            best_x, best_e = x, e
    return GroundStateRecord.from_coords(v, best_x, restarts)


# -- tables -----------------------------------------------------------------------

def _far_union(a: np.ndarray, b: np.ndarray, gap: float) -> np.ndarray:
    """Place two clusters so that no pair across them interacts."""
    shift = np.zeros(a.shape[1])
    shift[0] = (a[:, 0].max() if len(a) else 0.0) - (b[:, 0].min() if len(b) else 0.0) + gap
    return np.vstack([a, b + shift])


def _grown(v: PairPotential, x: np.ndarray, rng, samples: int = 256) -> np.ndarray:
    """Add one particle at the best of ``samples`` spots in the wells of ``x``."""
    lo = max(v.r_hc, v.r0)
    d = v.dimension
    anchors = x[rng.integers(len(x), size=samples)]
    direction = rng.normal(size=(samples, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    trial = anchors + rng.uniform(lo, v.r1, size=(samples, 1)) * direction
    diff = trial[:, None, :] - x[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    vals = np.where(r < v.r1, v(np.minimum(r, v.r1)), 0.0).sum(axis=1)
    return np.vstack([x, trial[int(np.argmin(vals))]])


@dataclass
class GroundStateTable:
    """``E_k`` estimates for ``k <= K`` with the bulk and surcharge estimates.

    ``e_inf_hat`` is ``min_k E_k / k`` over the computed range (an upper bound on
    the true infimum over all k) unless an override is given;
    ``e_inf_source`` says which.  ``nu_star_hat = min_k (E_k - k e_inf_hat)``.
    """

    records: list
    e_inf_hat: float
    e_inf_source: str
    nu_star_hat: float
    nu_star_k: int
    warnings: list = field(default_factory=list)

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.records])

    @property
    def K(self) -> int:
        return len(self.records)

    def rows(self):
        for r in self.records:
            yield {"k": r.k, "E_k": r.energy, "E_k_over_k": r.energy / r.k,
                   "min_pair_dist": r.min_pair_dist, "diameter": r.diameter}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS, lineterminator="\n")
            w.writeheader()
            for row in self.rows():
                w.writerow({k: repr(float(val)) if isinstance(val, float) else val
                            for k, val in row.items()})


TABLE_COLUMNS = ["k", "E_k", "E_k_over_k", "min_pair_dist", "diameter"]


def surcharge(energies, e_inf: float) -> tuple[float, int]:
    """``(min_k (E_k - k e_inf), argmin k)`` with ``energies[k-1] = E_k``."""
    e = np.asarray(energies, dtype=float)
    ks = np.arange(1, len(e) + 1)
    s = e - ks * e_inf
    i = int(np.argmin(s))
    return float(s[i]), i + 1


def table_from_energies(records, e_inf_override: float | None = None) -> GroundStateTable:
    energies = np.array([r.energy for r in records])
    ks = np.arange(1, len(records) + 1)
    warnings = []
    if e_inf_override is None:
        e_inf, source = float(np.min(energies / ks)), "min_k"
    else:
        e_inf, source = float(e_inf_override), "override"
        if np.any(energies / ks < e_inf - 1e-12):
            warnings.append("override exceeds some computed E_k/k; it cannot be the infimum")
    nu, nu_k = surcharge(energies, e_inf)
    if nu_k == len(records) and len(records) > 1:
        warnings.append(f"surcharge minimum sits at k = K = {nu_k}; increase K for a stable value")
    return GroundStateTable(list(records), e_inf, source, nu, nu_k, warnings)


def build_table(v: PairPotential, K: int, restarts: int = 4, seed: int = 0,
                e_inf_override: float | None = None) -> GroundStateTable:
    """Records for ``k = 1..K``; each ``k`` is also seeded from the ``k-1`` minimizer
    plus one particle and from far-apart unions of smaller minimizers."""
    if K < 1:
        raise ValueError("K must be >= 1")
    records: list[GroundStateRecord] = []
    for k in range(1, K + 1):
        extra = []
        if k >= 2:
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k, 10_000)))
            extra.append(_grown(v, records[-1].coords, rng))
            for j in range(1, k // 2 + 1):
                extra.append(_far_union(records[j - 1].coords, records[k - j - 1].coords, 2 * v.r1))
        records.append(minimize_energy(v, k, restarts, seed, seeds=extra))
    return table_from_energies(records, e_inf_override)


def assumption_diagnostics(record: GroundStateRecord, r_min_claim: float, C_claim: float) -> dict:
    """Check a minimizer against a claimed minimal spacing and diameter constant."""
    d = record.coords.shape[1]
    bound = C_claim * record.k ** (1.0 / d)
    return {
        "k": record.k,
        "min_pair_dist": record.min_pair_dist,
        "r_min_claim": r_min_claim,
        "spacing_ok": bool(record.min_pair_dist >= r_min_claim),
        "diameter": record.diameter,
        "diameter_bound": bound,
        "diameter_ok": bool(record.diameter <= bound),
    }
