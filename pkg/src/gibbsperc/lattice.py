"""Nearest-neighbour lattice gas on the periodic ``n x n`` grid, in Ising form.

Conventions
-----------
Spins ``sigma = 2 n - 1``.  The Ising Hamiltonian is the standard

    H(sigma) = -J_I sum_{bonds <xy>} sigma_x sigma_y - h sum_x sigma_x,

each nearest-neighbour bond counted once.  A lattice gas with pair attraction
``J`` per occupied bond and chemical potential ``mu``,
``-J sum_bonds n_x n_y - mu sum_x n_x``, is the same model up to a constant with

    J_I = J / 4,    h = (mu + d J) / 2.

:class:`SpinLattice` always stores ``J_I`` in ``J``; use
:meth:`SpinLattice.from_lattice_gas` to start from ``(J, mu)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cluster import WrapUnionFind
from .mcmc import MeasurementSeries, make_rng
from .stats import effective_sample_size

D = 2
ENUMERATION_MAX_SITES = 16


def mu_to_h(mu: float, J: float, d: int = D) -> float:
    """Ising field of the lattice gas at chemical potential ``mu``."""
    return (mu + d * J) / 2.0


def h_to_mu(h: float, J: float, d: int = D) -> float:
    return 2.0 * h - d * J


def gas_to_ising_coupling(J: float) -> float:
    return J / 4.0


@dataclass
class SpinLattice:
    n: int
    J: float
    h: float
    beta: float
    spins: np.ndarray

    @classmethod
    def new(cls, n: int, J: float, h: float, beta: float, init="plus", rng=None) -> "SpinLattice":
        if n < 1:
            raise ValueError("side must be positive")
        if init == "plus":
            s = np.ones((n, n), dtype=np.int8)
        elif init == "minus":
            s = -np.ones((n, n), dtype=np.int8)
        elif init == "random":
            rng = np.random.default_rng() if rng is None else rng
            s = np.where(rng.random((n, n)) < 0.5, 1, -1).astype(np.int8)
        else:
            raise ValueError(f"unknown init {init!r}")
        return cls(n, float(J), float(h), float(beta), s)

    @classmethod
    def from_lattice_gas(cls, n: int, J: float, mu: float, beta: float, **kw) -> "SpinLattice":
        return cls.new(n, gas_to_ising_coupling(J), mu_to_h(mu, J), beta, **kw)

    def energy(self) -> float:
        s = self.spins.astype(np.int64)
        bonds = np.sum(s * np.roll(s, 1, axis=0)) + np.sum(s * np.roll(s, 1, axis=1))
        return float(-self.J * bonds - self.h * s.sum())

    def magnetization(self) -> float:
        return float(self.spins.mean())

    def occupation(self) -> np.ndarray:
        return (self.spins > 0).astype(np.int8)

    def local_field(self, i: int, j: int) -> float:
        s, n = self.spins, self.n
        nb = int(s[(i + 1) % n, j]) + int(s[(i - 1) % n, j]) + int(s[i, (j + 1) % n]) + int(s[i, (j - 1) % n])
        return self.J * nb + self.h

    def flip_delta(self, i: int, j: int) -> float:
        """Energy change of flipping ``(i, j)``: ``2 sigma (J sum_nb sigma + h)``."""
        return 2.0 * int(self.spins[i, j]) * self.local_field(i, j)


def flip_probability(beta: float, delta: float) -> float:
    """Heat-bath probability ``1 / (1 + e^{beta dE})`` of flipping a spin."""
    x = beta * delta
    if x > 700:
        return 0.0
    return 1.0 / (1.0 + math.exp(x))


def glauber_sweep(lat: SpinLattice, rng: np.random.Generator) -> SpinLattice:
    """``n^2`` heat-bath updates at uniformly random sites (in place)."""
    n = lat.n
    m = n * n
    sites = rng.integers(m, size=m).tolist()
    us = rng.random(m).tolist()
    s = lat.spins
    J, h, beta = lat.J, lat.h, lat.beta
    for site, u in zip(sites, us):
        i, j = divmod(site, n)
        nb = int(s[(i + 1) % n, j]) + int(s[(i - 1) % n, j]) + int(s[i, (j + 1) % n]) + int(s[i, (j - 1) % n])
        sigma = int(s[i, j])
        if u < flip_probability(beta, 2.0 * sigma * (J * nb + h)):
            s[i, j] = -sigma
    return lat


def site_percolation(field) -> tuple[bool, np.ndarray]:
    """Occupied nearest-neighbour clusters on the torus.

    ``field`` is a :class:`SpinLattice` or an ``n x n`` array whose positive
    entries count as occupied (works for 0/1 occupations and +-1 spins).
    Returns ``(wrapped, sizes)`` with sizes sorted in decreasing order.
    """
    occ = field.spins > 0 if isinstance(field, SpinLattice) else np.asarray(field) > 0
    n = occ.shape[0]
    if occ.shape != (n, n):
        raise ValueError("field must be a square array")
    flat = occ.ravel()
    uf = WrapUnionFind(n * n, D)
    step0, step1 = uf.pack([[1, 0]])[0], uf.pack([[0, 1]])[0]
    for i in range(n):
        for j in range(n):
            if not occ[i, j]:
                continue
            a = i * n + j
            # the neighbour below/right sits one lattice step away; crossing the seam
            # lands on the next periodic copy
            if occ[(i + 1) % n, j]:
                uf.union(a, ((i + 1) % n) * n + j, 0 if i + 1 < n else step0)
            if occ[i, (j + 1) % n]:
                uf.union(a, i * n + (j + 1) % n, 0 if j + 1 < n else step1)
    labels, wrapped = uf.components()
    sites = np.flatnonzero(flat)
    if len(sites) == 0:
        return False, np.zeros(0, dtype=np.int64)
    used = np.unique(labels[sites])
    sizes = np.bincount(labels[sites])[used]
    return bool(wrapped[used].any()), np.sort(sizes)[::-1]


@dataclass(frozen=True)
class ExactExpectations:
    magnetization: float
    energy: float
    occupied_fraction: float
    wrapping: float


def exact_enumeration(n: int, J: float, h: float, beta: float) -> ExactExpectations:
    """Exact Gibbs averages per site by summing over all ``2^(n^2)`` states."""
    m = n * n
    if m > ENUMERATION_MAX_SITES:
        raise ValueError(f"n = {n} too large to enumerate (limit {ENUMERATION_MAX_SITES} sites)")
    codes = np.arange(2**m, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(m)) & 1
    spins = (2 * bits - 1).reshape(-1, n, n)
    bonds = (spins * np.roll(spins, 1, axis=1)).sum(axis=(1, 2)) + (spins * np.roll(spins, 1, axis=2)).sum(axis=(1, 2))
    mag = spins.sum(axis=(1, 2))
    energy = -J * bonds - h * mag
    logw = -beta * energy
    w = np.exp(logw - logw.max())
    w /= w.sum()
    wraps = np.array([site_percolation(s)[0] for s in spins], dtype=float)
    return ExactExpectations(float(w @ mag) / m, float(w @ energy) / m,
                             float(w @ ((mag + m) / 2)) / m, float(w @ wraps))


def ising_observables(lat: SpinLattice) -> dict:
    m = lat.n * lat.n
    mag = lat.magnetization()
    return {"m": mag, "energy": lat.energy() / m, "occupied_fraction": (mag + 1) / 2,
            "wrapped": int(site_percolation(lat)[0])}


def run_ising(lat: SpinLattice, sweeps: int, burn_in: int = 0, thin: int = 1, seed=0) -> MeasurementSeries:
    """Glauber chain; records per-site ``m``, ``energy``, occupied fraction and wrapping."""
    if sweeps < 0 or burn_in < 0 or thin < 1:
        raise ValueError("need sweeps >= 0, burn_in >= 0, thin >= 1")
    rng, seed_rec = make_rng(seed)
    for _ in range(burn_in):
        glauber_sweep(lat, rng)
    rows, idx = [], []
    for t in range(1, sweeps + 1):
        glauber_sweep(lat, rng)
        if t % thin == 0:
            rows.append(ising_observables(lat))
            idx.append(burn_in + t)
    names = ["m", "energy", "occupied_fraction", "wrapped"]
    data = {k: np.array([r[k] for r in rows], dtype=float if k != "wrapped" else np.int64) for k in names}
    header = {"model": "ising", "n": lat.n, "J": lat.J, "h": lat.h, "beta": lat.beta,
              "seed": seed_rec, "sweeps": sweeps, "burn_in": burn_in, "thin": thin,
              "ess": {k: (effective_sample_size(v) if len(v) else 0.0) for k, v in data.items()}}
    return MeasurementSeries(header, np.array(idx, dtype=np.int64), data)
