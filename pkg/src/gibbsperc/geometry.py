"""Periodic box, minimal-image metric and a cell-list point container."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class PeriodicBox:
    """The torus ``[0, L)^d``."""

    dimension: int
    side: float

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        if not self.side > 0:
            raise ValueError("box side must be positive")

    @property
    def volume(self) -> float:
        return self.side**self.dimension

    def wrap(self, x) -> np.ndarray:
        """Canonical representative of ``x`` in ``[0, L)^d``."""
        y = np.mod(np.asarray(x, dtype=float), self.side)
        # np.mod can round a tiny negative coordinate up to exactly L
        y[y >= self.side] = 0.0
        return y

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return x.shape == (self.dimension,) and bool(np.all((x >= 0) & (x < self.side)))

    def check_inside(self, x):
        if not self.contains(x):
            raise ValueError(f"point {x!r} is not in [0, {self.side})^{self.dimension}")

    def displacement(self, x, y) -> np.ndarray:
        """Minimal-image representative of ``y - x`` in ``[-L/2, L/2)^d``."""
        diff = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        return diff - self.side * np.floor(diff / self.side + 0.5)

    def require_radius(self, r: float, what: str = "radius"):
        if r > self.side / 2:
            raise ValueError(f"{what} {r} exceeds half the box side {self.side / 2}")


def min_image_dist(box: PeriodicBox, x, y) -> float:
    d = box.displacement(x, y)
    return float(math.sqrt(np.dot(d, d)))


class BoxConfiguration:
    """Finite point configuration in a periodic box with a uniform cell index.

    Cells have side ``>= cutoff``, so all points within ``cutoff`` of a query
    lie in the query's cell or one of its ``3^d`` neighbours.  Removal swaps the
    last point into the freed slot: coordinates of other points never change,
    but the last point's index does.
    """

    def __init__(self, box: PeriodicBox, cutoff: float, points=None):
        if not cutoff > 0:
            raise ValueError("cutoff must be positive")
        self.box = box
        self.cutoff = float(cutoff)
        self.ncell = max(1, int(math.floor(box.side / cutoff)))
        self.cell_side = box.side / self.ncell
        self._pts = np.empty((16, box.dimension))
        self._n = 0
        self._cells: dict[int, list[int]] = {}
        self._cell_of: list[int] = []
        self._adj_cache: dict[int, tuple] = {}
        if points is not None:
            for p in np.asarray(points, dtype=float).reshape(-1, box.dimension):
                self.insert_point(p)

    # -- container protocol ------------------------------------------------------
    def __len__(self):
        return self._n

    @property
    def points(self) -> np.ndarray:
        """View of the live coordinates, shape ``(N, d)``."""
        return self._pts[: self._n]

    def copy(self) -> "BoxConfiguration":
        return BoxConfiguration(self.box, self.cutoff, self.points.copy())

    def check_index(self, i: int):
        if not 0 <= i < self._n:
            raise IndexError(f"particle index {i} out of range for {self._n} particles")

    # -- cell bookkeeping --------------------------------------------------------
    def cell_id(self, x) -> int:
        m, inv = self.ncell, 1.0 / self.cell_side
        cid, stride = 0, 1
        for xi in x:
            c = int(xi * inv)
            cid += (c if c < m else m - 1) * stride
            stride *= m
        return cid

    def _adjacent(self, cid: int) -> tuple:
        adj = self._adj_cache.get(cid)
        if adj is None:
            m = self.ncell
            strides = [m**k for k in range(self.box.dimension)]
            base = [(cid // s) % m for s in strides]
            ids = set()
            for off in itertools.product((-1, 0, 1), repeat=self.box.dimension):
                ids.add(sum(((b + o) % m) * s for b, o, s in zip(base, off, strides)))
            adj = tuple(sorted(ids))
            self._adj_cache[cid] = adj
        return adj

    def cell_members(self, cid: int) -> list[int]:
        return list(self._cells.get(cid, ()))

    # -- mutation ----------------------------------------------------------------
    def _canonical(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.box.dimension,) or not np.all(np.isfinite(x)):
            raise ValueError(f"expected a finite {self.box.dimension}-vector, got {x!r}")
        return self.box.wrap(x)

    def insert_point(self, x, check: bool = True) -> int:
        """Append a point (wrapped into the box) and return its index.

        ``check`` rejects exact coincidence with an existing point; samplers that
        have already evaluated the hard core may skip it.
        """
        x = self._canonical(x)
        if check and self._n:
            _, r = self.distances_near(x, 0.0)
            if r.size and np.any(r == 0.0):
                raise ValueError(f"point {x} coincides with an existing point")
        return self._insert(x)

    def _insert(self, x) -> int:
        # x must already be canonical
        if self._n == len(self._pts):
            self._pts = np.concatenate([self._pts, np.empty_like(self._pts)])
        i = self._n
        self._pts[i] = x
        cid = self.cell_id(x)
        self._cells.setdefault(cid, []).append(i)
        self._cell_of.append(cid)
        self._n += 1
        return i

    def remove_point(self, i: int):
        self.check_index(i)
        last = self._n - 1
        cid = self._cell_of[i]
        members = self._cells[cid]
        members.remove(i)
        if not members:
            del self._cells[cid]
        if i != last:
            lcid = self._cell_of[last]
            lmembers = self._cells[lcid]
            lmembers[lmembers.index(last)] = i
            self._pts[i] = self._pts[last]
            self._cell_of[i] = lcid
        self._cell_of.pop()
        self._n -= 1

    def move_point(self, i: int, x):
        self.check_index(i)
        self._move(i, self._canonical(x))

    def _move(self, i: int, x):
        old = self._cell_of[i]
        new = self.cell_id(x)
        self._pts[i] = x
        if new != old:
            members = self._cells[old]
            members.remove(i)
            if not members:
                del self._cells[old]
            self._cells.setdefault(new, []).append(i)
            self._cell_of[i] = new

    # -- queries -----------------------------------------------------------------
    def candidates(self, x) -> np.ndarray:
        """Indices of all points in the cells adjacent to ``x`` (superset of the neighbours)."""
        cells = self._cells
        idx = [j for c in self._adjacent(self.cell_id(x)) for j in cells.get(c, ())]
        return np.array(idx, dtype=np.int64)

    def distances_near(self, x, r: float, periodic: bool = True):
        """Indices and distances of all points within ``r`` of ``x``, including distance 0."""
        if r > self.cutoff:
            raise ValueError(f"query radius {r} exceeds cell cutoff {self.cutoff}")
        idx = self.candidates(x)
        if idx.size == 0:
            return idx, np.empty(0)
        r2 = self.sq_distances(idx, x, periodic)
        keep = r2 <= r * r
        return idx[keep], np.sqrt(r2[keep])

    def sq_distances(self, idx, x, periodic: bool = True) -> np.ndarray:
        """Squared distances from ``x`` to the points ``idx``."""
        diff = self._pts[idx] - x
        if periodic:
            L = self.box.side
            diff -= L * np.floor(diff * (1.0 / L) + 0.5)
        return np.einsum("ij,ij->i", diff, diff)

    def neighbors_within(self, x, r: float, metric: str = "periodic") -> list[tuple[int, float]]:
        """Points at distance in ``(0, r]`` of ``x`` under the ``free`` or ``periodic`` metric."""
        if metric not in ("free", "periodic"):
            raise ValueError(f"unknown metric {metric!r}")
        if metric == "periodic":
            self.box.require_radius(r, "query radius")
        x = np.asarray(x, dtype=float)
        idx, dist = self.distances_near(x, r, periodic=metric == "periodic")
        return [(int(i), float(s)) for i, s in zip(idx, dist) if s > 0]

    def check_cells(self) -> bool:
        """Every point is registered exactly once, in the cell that contains it."""
        seen = sorted(j for m in self._cells.values() for j in m)
        if seen != list(range(self._n)):
            return False
        return all(self.cell_id(self._pts[i]) == self._cell_of[i] and i in self._cells[self._cell_of[i]]
                   for i in range(self._n))


# -- point snapshots ---------------------------------------------------------------

def dump_snapshot(config: BoxConfiguration, path):
    """Write ``# d=<d> L=<L> n=<N>`` followed by one line of coordinates per point."""
    box = config.box
    lines = [f"# d={box.dimension} L={box.side!r} n={len(config)}"]
    lines += [" ".join(repr(float(c)) for c in p) for p in config.points]
    Path(path).write_text("\n".join(lines) + "\n")


def load_snapshot(path, cutoff: float) -> BoxConfiguration:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise ValueError(f"{path}: missing snapshot header")
    header = dict(tok.split("=", 1) for tok in text[0][1:].split())
    d, L, n = int(header["d"]), float(header["L"]), int(header["n"])
    rows = [list(map(float, line.split())) for line in text[1:] if line.strip()]
    if len(rows) != n:
        raise ValueError(f"{path}: header says n={n} but found {len(rows)} points")
    pts = np.array(rows, dtype=float).reshape(n, d)
    return BoxConfiguration(PeriodicBox(d, L), cutoff, pts)
