"""Cluster partition functions and the explicit threshold bounds built from them.

``Z_k(beta) = (1/k!) * int e^{-beta U(0, x_2..x_k)} 1{connected at R} dx_2..dx_k``

is the weight of a rooted connected k-cluster.  ``k = 2`` is a radial integral;
``k = 3..5`` are estimated by plain hit-or-miss over a cube, which is unbiased
and easy to audit but whose variance grows too fast to go further.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from .potential import PairPotential, ball_volume, sphere_area

K_MAX_HIT_OR_MISS = 5


@dataclass(frozen=True)
class ClusterIntegralEstimate:
    k: int
    beta: float
    value: float
    std_err: float
    samples: int
    method: str


def _radial_weight(v: PairPotential, beta: float, R: float) -> float:
    """``int_{|x| <= R} e^{-beta v(|x|)} dx`` (zero weight inside the hard core)."""
    d = v.dimension
    knots = sorted({k for k in (0.0, *v.knots, R) if k <= R})
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        if b <= a:
            continue
        f = lambda r: math.exp(-beta * float(v(r))) * r ** (d - 1) if r >= v.r_hc else 0.0
        val, _ = integrate.quad(f, a, b, limit=200, epsabs=0.0, epsrel=1e-13)
        total += val
    return sphere_area(d) * total


def _connected(adj: np.ndarray) -> np.ndarray:
    """Row-wise connectivity of a stack of ``(k, k)`` boolean adjacency matrices."""
    k = adj.shape[-1]
    reach = adj | np.eye(k, dtype=bool)
    for _ in range(max(1, (k - 1).bit_length())):
        reach = np.matmul(reach.astype(np.int32), reach.astype(np.int32)) > 0
    return reach[:, 0, :].all(axis=1)


def _integrand(v: PairPotential, beta: float, R: float, x: np.ndarray) -> np.ndarray:
    """``e^{-beta U} * 1{connected}`` for configurations ``(n, k, d)`` with ``x[:, 0] = 0``."""
    diff = x[:, :, None, :] - x[:, None, :, :]
    r2 = np.einsum("nijk,nijk->nij", diff, diff)
    k = x.shape[1]
    iu = np.triu_indices(k, 1)
    pair_r = np.sqrt(r2[:, iu[0], iu[1]])
    u = v(pair_r).sum(axis=1) if v.shape != "ideal" else np.zeros(len(x))
    with np.errstate(over="ignore"):
        w = np.where(np.isfinite(u), np.exp(-beta * np.where(np.isfinite(u), u, 0.0)), 0.0)
    adj = r2 <= R * R
    ok = _connected(adj)
    return np.where(ok, w, 0.0)


def _hit_or_miss(v, k, beta, R, samples, seed, chunk=50_000):
    rng = np.random.default_rng(seed)
    d = v.dimension
    half = (k - 1) * R
    vol = (2 * half) ** (d * (k - 1))
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        x = np.zeros((n, k, d))
        x[:, 1:, :] = rng.uniform(-half, half, size=(n, k - 1, d))
        f = _integrand(v, beta, R, x)
        total += f.sum()
        total_sq += np.dot(f, f)
        done += n
    mean = float(total) / samples
    var = max(float(total_sq) / samples - mean * mean, 0.0)
    scale = vol / math.factorial(k)
    err = scale * math.sqrt(var / (samples - 1)) if samples > 1 else math.inf
    return mean * scale, err


def zk_cluster_integral(v: PairPotential, k: int, beta: float, R: float,
                        samples: int = 1_000_000, seed: int = 0,
                        method: str = "auto") -> ClusterIntegralEstimate:
    """Estimate ``Z_k(beta)`` at connectivity radius ``R``.

    ``method="auto"`` uses the exact value for ``k <= 2`` and hit-or-miss above;
    ``method="hit_or_miss"`` forces sampling (useful to cross-check ``k = 2``).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > K_MAX_HIT_OR_MISS:
        raise ValueError(f"k = {k} > {K_MAX_HIT_OR_MISS}: hit-or-miss variance is unusable there")
    if R < v.r1:
        raise ValueError(f"connectivity radius R = {R} is below the potential range {v.r1}")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if method not in ("auto", "closed_form", "hit_or_miss"):
        raise ValueError(f"unknown method {method!r}")
    if k == 1:
        return ClusterIntegralEstimate(1, beta, 1.0, 0.0, 0, "closed_form")
    if k == 2 and method != "hit_or_miss":
        return ClusterIntegralEstimate(2, beta, 0.5 * _radial_weight(v, beta, R), 0.0, 0, "closed_form")
    if method == "closed_form":
        raise ValueError("no closed form for k >= 3")
    if samples < 2:
        raise ValueError("need at least two samples")
    value, err = _hit_or_miss(v, k, beta, R, samples, seed)
    return ClusterIntegralEstimate(k, beta, value, err, samples, "hit_or_miss")


# -- explicit bounds -------------------------------------------------------------------

def zk_upper_bound(k: int, beta: float, e_inf: float, R: float, d: int) -> float:
    """``e^{-beta k e_inf} e^k |B(0,R)|^(k-1)``."""
    return math.exp(-beta * k * e_inf + k) * ball_volume(R, d) ** (k - 1)


def mayer_radius_lb(beta: float, e_inf: float, triple_norm: float) -> float:
    """Lower bound ``e^{beta e_inf} / (beta |||v|||)`` on the Mayer-series radius."""
    if beta <= 0 or triple_norm <= 0:
        raise ValueError("need beta > 0 and triple_norm > 0")
    return math.exp(beta * e_inf) / (beta * triple_norm)


def decay_bound_rhs(k: int, beta: float, mu: float, e_inf: float, R: float, d: int) -> float:
    """``k e^k |B(0,R)|^(k-1) exp(-beta k (e_inf - mu))``, the bound on ``k rho_k``."""
    return k * math.exp(k - beta * k * (e_inf - mu)) * ball_volume(R, d) ** (k - 1)


def mu_plus_rhs(m: float, delta: float, eps: float, beta: float, alpha_d: float, d: int) -> float:
    """Chemical potential above which the percolation argument applies:
    ``-m + delta - log|B(0,eps)| / beta + alpha_d / beta``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if alpha_d <= 0:
        raise ValueError("alpha_d must be positive")
    return -m + delta + (alpha_d - math.log(ball_volume(eps, d))) / beta


def adjacency_distance(ell: float, d: int) -> float:
    """Largest distance between points of two touching cubes of side ``ell``
    (cubes sharing at least a corner), ``sqrt(d + 3) * ell``."""
    if ell <= 0:
        raise ValueError("ell must be positive")
    return math.sqrt(d + 3) * ell


@dataclass
class BoundReport:
    """All explicit bounds for one parameter point, inputs echoed."""

    beta: float
    mu: float
    e_inf: float
    R: float
    d: int
    triple_norm: float
    m: float
    delta: float
    eps: float
    alpha_d: float
    ell: float
    k_max: int
    zk_upper: list = field(default_factory=list)
    decay_rhs: list = field(default_factory=list)
    mayer_radius_lb: float = math.nan
    mu_plus_rhs: float = math.nan
    adjacency_distance: float = math.nan

    def to_dict(self) -> dict:
        """Flat mapping: list entries become ``name_k`` keys."""
        out = {}
        for key, val in asdict(self).items():
            if isinstance(val, list):
                for k, x in enumerate(val, start=1):
                    out[f"{key}_{k}"] = x
            else:
                out[key] = val
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def bound_report(beta, mu, e_inf, R, d, triple_norm, k_max=6, m=1.0, delta=0.1,
                 eps=0.2, alpha_d=50.0, ell=1.0) -> BoundReport:
    rep = BoundReport(beta, mu, e_inf, R, d, triple_norm, m, delta, eps, alpha_d, ell, k_max)
    ks = range(1, k_max + 1)
    rep.zk_upper = [zk_upper_bound(k, beta, e_inf, R, d) for k in ks]
    rep.decay_rhs = [decay_bound_rhs(k, beta, mu, e_inf, R, d) for k in ks]
    rep.mayer_radius_lb = mayer_radius_lb(beta, e_inf, triple_norm) if beta > 0 else math.inf
    rep.mu_plus_rhs = mu_plus_rhs(m, delta, eps, beta, alpha_d, d) if beta > 0 else math.inf
    rep.adjacency_distance = adjacency_distance(ell, d)
    return rep
