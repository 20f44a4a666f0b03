"""Cluster integrals against their explicit upper bound, and the threshold formulas.

Run: python3 demos/bounds.py
"""
import math

from gibbsperc.integrals import bound_report, zk_cluster_integral, zk_upper_bound
from gibbsperc.potential import PairPotential, triple_norm

v = PairPotential.square_well()
R, e_inf = 1.5, -3.0

print(f"{'beta':>5} {'k':>2} {'Z_k':>12} {'se':>9} {'upper':>12}")
for beta in (0.5, 1.0, 2.0):
    for k in range(1, 5):
        est = zk_cluster_integral(v, k, beta, R, samples=200_000, seed=k)
        up = zk_upper_bound(k, beta, e_inf, R, 2)
        print(f"{beta:>5} {k:>2} {est.value:>12.4f} {est.std_err:>9.4f} {up:>12.4g}")

# The Mayer radius lower bound decays like exp(beta e_inf): its log rate tends to e_inf.
for beta in (1.0, 4.0, 16.0, 64.0):
    rep = bound_report(beta, e_inf - 0.5, e_inf, R, 2, triple_norm(v), k_max=3)
    print(f"beta {beta:>4}: log(R_May lb)/beta = {math.log(rep.mayer_radius_lb) / beta:+.4f}, "
          f"decay rhs k=1..3 = {[f'{x:.3g}' for x in rep.decay_rhs]}, mu_+ rhs = {rep.mu_plus_rhs:.3f}")
