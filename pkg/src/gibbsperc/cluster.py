"""Boolean-model connectivity at radius R: components, k-cluster densities, wrapping.

Two points are adjacent when ``0 < |x - y| <= R``.  With periodic boundaries a
component *wraps* when it is connected to one of its own periodic images, which
is the finite-box counterpart of a cluster with infinitely many particles in the
periodic continuation.  Wrapping components count toward ``wrapped_mass`` and
toward no ``rho_k``.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


class WrapUnionFind:
    """Union-find whose nodes carry an integer lattice offset relative to their root.

    Offsets are vectors in ``Z^d`` packed into one Python int,
    ``sum_k a_k * base**k``.  Packing is linear, so offsets add as ints, and it
    is injective while every component stays below ``base / 2`` in magnitude.
    """

    def __init__(self, n: int, dimension: int):
        self.parent = list(range(n))
        self.offset = [0] * n
        self.size = [1] * n
        self.wraps = [False] * n
        self.base = 4 * n + 5
        self.dimension = dimension

    def pack(self, shifts) -> list[int]:
        """Packed codes of the rows of an integer array of shift vectors."""
        weights = [self.base**k for k in range(self.dimension)]
        return [sum(int(s) * w for s, w in zip(row, weights)) for row in np.asarray(shifts).tolist()]

    def find(self, i: int) -> tuple[int, int]:
        """Root of ``i`` and the packed offset ``a_i - a_root``."""
        parent, offset = self.parent, self.offset
        path = []
        while parent[i] != i:
            path.append(i)
            i = parent[i]
        root = i
        acc = 0
        for j in reversed(path):
            acc += offset[j]
            offset[j] = acc
            parent[j] = root
        return root, (offset[path[0]] if path else 0)

    def union(self, i: int, j: int, shift: int):
        """Join ``i`` and ``j`` under the constraint ``a_j - a_i = shift``.

        A contradicting constraint inside one component marks it as wrapping.
        """
        ri, oi = self.find(i)
        rj, oj = self.find(j)
        if ri == rj:
            if oj - oi != shift:
                self.wraps[ri] = True
            return
        # a_rj - a_ri = oi + shift - oj
        rel = oi + shift - oj
        if self.size[ri] < self.size[rj]:
            ri, rj, rel = rj, ri, -rel
        self.parent[rj] = ri
        self.offset[rj] = rel
        self.size[ri] += self.size[rj]
        self.wraps[ri] = self.wraps[ri] or self.wraps[rj]

    def components(self):
        """``(labels, wrapped)``: labels in order of first appearance, wrap flag per label."""
        n = len(self.parent)
        roots = [self.find(i)[0] for i in range(n)]
        relabel: dict[int, int] = {}
        labels = np.empty(n, dtype=np.int64)
        for i, r in enumerate(roots):
            labels[i] = relabel.setdefault(r, len(relabel))
        wrapped = np.zeros(len(relabel), dtype=bool)
        for r, lab in relabel.items():
            wrapped[lab] = self.wraps[r]
        return labels, wrapped


@dataclass(frozen=True)
class ClusterReport:
    """Cluster decomposition of one configuration at connectivity radius ``R``.

    ``counts[k]`` is the number of non-wrapping components with ``k`` particles;
    ``rho[k] = counts[k] / volume``.
    """

    R: float
    boundary: str
    labels: np.ndarray
    sizes: np.ndarray
    counts: dict
    volume: float
    n_points: int
    wrapped: np.ndarray | None = None

    @property
    def rho(self) -> dict:
        return {k: c / self.volume for k, c in sorted(self.counts.items())}

    @property
    def wrapped_count(self) -> int:
        if self.wrapped is None:
            return 0
        return int(self.sizes[self.wrapped].sum())

    @property
    def wrapped_mass(self) -> float:
        return self.wrapped_count / self.volume

    @property
    def density(self) -> float:
        return self.n_points / self.volume

    def mass_balance(self) -> bool:
        """``sum_k k * counts[k] + wrapped_count == N`` in integer arithmetic."""
        return sum(k * c for k, c in self.counts.items()) + self.wrapped_count == self.n_points


def _report(R, boundary, labels, wrapped, volume):
    n = len(labels)
    sizes = np.bincount(labels, minlength=0) if n else np.zeros(0, dtype=np.int64)
    finite = sizes if wrapped is None else sizes[~wrapped]
    counts = dict(sorted(Counter(int(s) for s in finite).items()))
    return ClusterReport(float(R), boundary, labels, sizes, counts, volume, n, wrapped)


def _coords(config):
    return np.asarray(config.points, dtype=float)


# below this size an O(N^2) distance matrix beats building a k-d tree
_BRUTE_FORCE_MAX = 160


def periodic_edges(config, R: float):
    """Minimal-image edges ``(i, j)``, ``i < j``, with ``|x_i - x_j| <= R`` and their
    lattice shifts ``s`` such that ``x_j - x_i - s * L`` lies in ``[-L/2, L/2)^d``."""
    box = config.box
    box.require_radius(R, "connectivity radius")
    pts = _coords(config)
    n = len(pts)
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64), np.zeros((0, box.dimension), dtype=np.int64)
    L = box.side
    if n <= _BRUTE_FORCE_MAX:
        i, j = np.triu_indices(n, 1)
        diff = pts[j] - pts[i]
        shifts = np.floor(diff / L + 0.5)
        diff -= L * shifts
        keep = np.einsum("ij,ij->i", diff, diff) <= R * R
        pairs = np.stack([i[keep], j[keep]], axis=1)
        return pairs, shifts[keep].astype(np.int64)
    pairs = cKDTree(pts, boxsize=L).query_pairs(R, output_type="ndarray")
    pairs.sort(axis=1)
    diff = pts[pairs[:, 1]] - pts[pairs[:, 0]]
    return pairs, np.floor(diff / L + 0.5).astype(np.int64)


def _union_all(n, dimension, pairs, shifts=None):
    uf = WrapUnionFind(n, dimension)
    if shifts is None:
        for i, j in pairs.tolist():
            uf.union(i, j, 0)
    else:
        # a_j - a_i = -s for an edge whose image crossing is s
        for (i, j), c in zip(pairs.tolist(), uf.pack(shifts)):
            uf.union(i, j, -c)
    return uf.components()


def cluster_reports(config, R: float) -> tuple[ClusterReport, ClusterReport]:
    """``(free, periodic)`` reports from a single edge search (needs ``R <= L/2``).

    A Euclidean edge of length ``<= R <= L/2`` is exactly a minimal-image edge
    with zero shift, so the free graph is a subgraph of the periodic one.
    """
    box = config.box
    n = len(config)
    pairs, shifts = periodic_edges(config, R)
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return (_report(R, "free", empty, None, box.volume),
                _report(R, "periodic", empty, np.zeros(0, dtype=bool), box.volume))
    labels, wrapped = _union_all(n, box.dimension, pairs, shifts)
    periodic = _report(R, "periodic", labels, wrapped, box.volume)
    direct = ~shifts.any(axis=1)
    flabels, _ = _union_all(n, box.dimension, pairs[direct])
    free = _report(R, "free", flabels, None, box.volume)
    return free, periodic


def free_clusters(config, R: float) -> ClusterReport:
    """Components under the Euclidean metric of the box (no wrap-around edges)."""
    box = config.box
    n = len(config)
    if R <= box.side / 2:
        return cluster_reports(config, R)[0]
    pts = _coords(config)
    pairs = cKDTree(pts).query_pairs(R, output_type="ndarray") if n else np.zeros((0, 2), int)
    labels, _ = _union_all(n, box.dimension, pairs)
    return _report(R, "free", labels, None, box.volume)


def periodic_clusters(config, R: float) -> ClusterReport:
    """Components of the torus graph, with wrap detection by offset union-find."""
    return cluster_reports(config, R)[1]


def rho_vector(report: ClusterReport, k_max: int) -> np.ndarray:
    """Dense ``(rho_1, ..., rho_kmax)``; sizes above ``k_max`` are dropped."""
    out = np.zeros(k_max)
    for k, c in report.counts.items():
        if k <= k_max:
            out[k - 1] = c / report.volume
    return out
