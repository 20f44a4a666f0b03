"""Finite-range radial pair potentials with a hard core and an attractive tail.

Shapes
------
square_well
    ``+inf`` below ``r_hc``, ``0`` on ``[r_hc, r0)``, ``-depth`` on ``[r0, r1)``,
    ``0`` from ``r1`` on.  With ``r0 == r_hc`` the core radius itself carries the
    well value (left-closed well), so the potential is right-continuous there.
smooth_well
    Same support, but the well is a C^1 bump: a two-piece quadratic ramp from 0
    down to ``-depth`` over ``[r0, r0 + w)``, a flat bottom, and the mirrored ramp
    back to 0 over ``[r1 - w, r1)``, where ``w = inner_width``.
hard_core
    Pure excluded volume, no tail.  Outside the admissible class; kept as a
    reference shape for norms and packing.
ideal
    ``v == 0`` (ideal gas).  Outside the admissible class; used as an exactly
    solvable baseline for the samplers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

SHAPES = ("square_well", "smooth_well", "hard_core", "ideal")


def ball_volume(radius: float, d: int) -> float:
    """Volume of the d-dimensional Euclidean ball of the given radius."""
    if radius <= 0:
        return 0.0
    return float(math.pi ** (d / 2) / special.gamma(d / 2 + 1) * radius**d)


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d (``d * |B(0,1)|``)."""
    return d * ball_volume(1.0, d)


def _smoothstep(t):
    # C^1 piecewise quadratic, 0 -> 1 on [0, 1] with zero slope at both ends
    t = np.clip(t, 0.0, 1.0)
    return np.where(t < 0.5, 2.0 * t * t, 1.0 - 2.0 * (1.0 - t) ** 2)


@dataclass(frozen=True)
class PairPotential:
    """Radial pair potential ``v(r)``; immutable and safe to share.

    Use the constructors :meth:`square_well`, :meth:`smooth_well`,
    :meth:`hard_core` and :meth:`ideal` rather than the raw initializer.
    """

    dimension: int
    shape: str
    r_hc: float
    r0: float
    r1: float
    depth: float = 0.0
    inner_width: float = 0.0
    _knots: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}; expected one of {SHAPES}")
        if not (0 <= self.r_hc <= self.r0 <= self.r1) or not math.isfinite(self.r1):
            raise ValueError("need 0 <= r_hc <= r0 <= r1 < inf")
        if self.shape in ("square_well", "smooth_well"):
            if self.r_hc <= 0:
                raise ValueError("well shapes require a hard core r_hc > 0")
            if not self.r0 < self.r1:
                raise ValueError("attractive tail requires r0 < r1")
            if not self.depth > 0:
                raise ValueError("attractive tail requires depth > 0")
        if self.shape == "smooth_well":
            w = self.inner_width
            if not (0 < w and 2 * w <= self.r1 - self.r0):
                raise ValueError("smooth_well needs 0 < inner_width <= (r1 - r0) / 2")
        if self.shape == "hard_core" and not (self.r_hc > 0 and self.r0 == self.r1 == self.r_hc):
            raise ValueError("hard_core needs r_hc = r0 = r1 > 0")
        if self.shape == "ideal" and self.r1 != 0:
            raise ValueError("ideal potential has r_hc = r0 = r1 = 0")
        if self.shape == "smooth_well":
            w = self.inner_width
            knots = (self.r_hc, self.r0, self.r0 + w / 2, self.r0 + w,
                     self.r1 - w, self.r1 - w / 2, self.r1)
        else:
            knots = (self.r_hc, self.r0, self.r1)
        object.__setattr__(self, "_knots", tuple(sorted(set(knots))))

    @classmethod
    def square_well(cls, d=2, r_hc=1.0, r1=1.5, depth=1.0, r0=None):
        return cls(d, "square_well", r_hc, r_hc if r0 is None else r0, r1, depth)

    @classmethod
    def smooth_well(cls, d=2, r_hc=1.0, r1=1.5, depth=1.0, inner_width=0.1, r0=None):
        return cls(d, "smooth_well", r_hc, r_hc if r0 is None else r0, r1, depth, inner_width)

    @classmethod
    def hard_core(cls, d=2, r_hc=1.0):
        return cls(d, "hard_core", r_hc, r_hc, r_hc)

    @classmethod
    def ideal(cls, d=2):
        return cls(d, "ideal", 0.0, 0.0, 0.0)

    @property
    def is_admissible(self) -> bool:
        """True when the shape has a hard core, compact support and an attractive tail."""
        return self.shape in ("square_well", "smooth_well")

    @property
    def range(self) -> float:
        return self.r1

    @property
    def knots(self) -> tuple:
        """Radii where the functional form changes (quadrature break points)."""
        return self._knots

    def __call__(self, r):
        """Vectorized evaluation; returns an array of the broadcast shape of ``r``."""
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape)
        if self.shape == "square_well":
            out[(r >= self.r0) & (r < self.r1)] = -self.depth
        elif self.shape == "smooth_well":
            w = self.inner_width
            down = self.depth * _smoothstep((r - self.r0) / w)
            up = self.depth * _smoothstep((self.r1 - r) / w)
            inside = (r >= self.r0) & (r < self.r1)
            out[inside] = -np.minimum(down, up)[inside]
        out[r < self.r_hc] = np.inf
        return out

    def energy_sq(self, r2) -> float:
        """Sum of ``v`` over pairs given by their squared distances."""
        if self.shape == "ideal" or len(r2) == 0:
            return 0.0
        if np.any(r2 < self.r_hc * self.r_hc):
            return math.inf
        if self.shape == "square_well":
            hits = np.count_nonzero((r2 >= self.r0 * self.r0) & (r2 < self.r1 * self.r1))
            return -self.depth * hits
        if self.shape == "hard_core":
            return 0.0
        r2 = r2[r2 < self.r1 * self.r1]
        return float(np.sum(self(np.sqrt(r2)))) if len(r2) else 0.0

    def to_dict(self) -> dict:
        return {"dimension": self.dimension, "shape": self.shape, "r_hc": self.r_hc,
                "r0": self.r0, "r1": self.r1, "depth": self.depth,
                "inner_width": self.inner_width}


def evaluate(v: PairPotential, r: float) -> float:
    """``v(r)`` for a single non-negative distance."""
    if r < 0:
        raise ValueError(f"distance must be non-negative, got {r}")
    return float(v(r))


def pair_sq_distances(points, box=None):
    """Condensed vector of squared pair distances (minimal image if ``box`` given)."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n < 2:
        return np.empty(0)
    i, j = np.triu_indices(n, 1)
    diff = pts[j] - pts[i]
    if box is not None:
        diff -= box.side * np.floor(diff / box.side + 0.5)
    return np.einsum("ij,ij->i", diff, diff)


def pair_distances(points, box=None):
    return np.sqrt(pair_sq_distances(points, box))


def total_energy(v: PairPotential, points, box=None) -> float:
    """Sum of ``v(|x_i - x_j|)`` over unordered pairs.

    ``box`` selects the periodic minimal-image metric of a
    :class:`~gibbsperc.geometry.PeriodicBox`; ``None`` means Euclidean.
    """
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return 0.0
    if pts.ndim != 2 or pts.shape[1] != v.dimension:
        raise ValueError(f"points of shape {pts.shape} do not match dimension {v.dimension}")
    if v.shape == "ideal" or len(pts) < 2:
        return 0.0
    return float(v.energy_sq(pair_sq_distances(pts, box)))


# -- local energy changes -------------------------------------------------------

@dataclass(frozen=True)
class Insert:
    x: tuple


@dataclass(frozen=True)
class Delete:
    index: int


@dataclass(frozen=True)
class Move:
    index: int
    x: tuple


def local_energy(v: PairPotential, config, x, exclude: int = -1) -> float:
    """Interaction of a (virtual) particle at ``x`` with every particle of ``config``
    except ``exclude``, using only cell-list neighbours within the range ``r1``."""
    if v.shape == "ideal" or len(config) == 0:
        return 0.0
    idx = config.candidates(x)
    if exclude >= 0:
        idx = idx[idx != exclude]
    if idx.size == 0:
        return 0.0
    return v.energy_sq(config.sq_distances(idx, x))


def interaction_delta(v: PairPotential, config, change) -> float:
    """``U(after) - U(before)`` for one :class:`Insert`, :class:`Delete` or :class:`Move`.

    The current state is assumed to have finite energy, so no ``inf - inf`` arises.
    """
    if config.cutoff < v.r1:
        raise ValueError("cell list cutoff is smaller than the potential range")
    if isinstance(change, Insert):
        config.box.check_inside(change.x)
        return local_energy(v, config, change.x)
    if isinstance(change, Delete):
        config.check_index(change.index)
        return -local_energy(v, config, config.points[change.index], exclude=change.index)
    if isinstance(change, Move):
        config.check_index(change.index)
        config.box.check_inside(change.x)
        new = local_energy(v, config, change.x, exclude=change.index)
        if new == math.inf:
            return math.inf
        return new - local_energy(v, config, config.points[change.index], exclude=change.index)
    raise TypeError(f"unknown change {change!r}")


# -- norms ------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialNorms:
    triple_norm: float
    tail_min: float
    stability_b: float


def triple_norm(v: PairPotential, quad_points: int = 50) -> float:
    """``|B(0, r_hc)| + int_{|x| > r_hc} |v(|x|)| dx`` by radial quadrature.

    The radial integral is split at the shape knots so each piece is smooth;
    ``quad_points`` caps the subdivisions per piece.
    """
    d = v.dimension
    core = ball_volume(v.r_hc, d)
    if v.shape in ("hard_core", "ideal"):
        return core
    area = sphere_area(d)
    total = 0.0
    knots = [k for k in v.knots if k >= v.r_hc]
    for a, b in zip(knots[:-1], knots[1:]):
        if b <= a:
            continue
        val, _ = integrate.quad(lambda r: abs(float(v(r))) * r ** (d - 1), a, b,
                                limit=quad_points, epsabs=0.0, epsrel=1e-12)
        total += val
    result = core + area * total
    if not math.isfinite(result):
        raise ValueError("potential is not integrable outside the hard core")
    return result


def tail_min(v: PairPotential) -> tuple[float, float]:
    """Return ``(M, r_witness)`` with ``-M = inf_{r > r0} v(r)`` and ``v(r_witness) = -M``.

    For both well shapes the minimum is attained on a flat interval; the witness
    is its midpoint.
    """
    if not v.is_admissible:
        raise ValueError(f"shape {v.shape!r} has no attractive tail")
    return v.depth, 0.5 * (v.r0 + v.r1)


def norms(v: PairPotential, stability_b: float = 0.0, quad_points: int = 50) -> PotentialNorms:
    if stability_b < 0:
        raise ValueError("stability_b must be non-negative")
    return PotentialNorms(triple_norm(v, quad_points), tail_min(v)[0], stability_b)
