"""Ground-state energies of the 2-d square well and the surcharge they imply.

Run: python3 demos/ground_states.py
"""
from gibbsperc.groundstate import assumption_diagnostics, build_table
from gibbsperc.potential import PairPotential

v = PairPotential.square_well()  # core 1, well [1, 1.5), depth 1

# Without an override the bulk estimate is min_k E_k/k over the computed range,
# which only bounds the true value from above.
tab = build_table(v, 10, restarts=4, seed=2026)
print(f"e_inf (min over k <= 10) = {tab.e_inf_hat:g}, nu* = {tab.nu_star_hat:g}")
for w in tab.warnings:
    print("  warning:", w)

# A triangular-lattice bulk value of -3 per particle gives a positive surcharge.
tab = build_table(v, 10, restarts=4, seed=2026, e_inf_override=-3.0)
print(f"e_inf (override) = {tab.e_inf_hat:g}, nu* = {tab.nu_star_hat:g} at k = {tab.nu_star_k}")
for w in tab.warnings:
    print("  warning:", w)

print(f"{'k':>3} {'E_k':>6} {'E_k/k':>7} {'min dist':>9} {'diam':>6}")
for r in tab.rows():
    print(f"{r['k']:>3} {r['E_k']:>6g} {r['E_k_over_k']:>7.3f} {r['min_pair_dist']:>9.3f} {r['diameter']:>6.3f}")

diag = assumption_diagnostics(tab.records[-1], r_min_claim=1.0, C_claim=1.5)
print("k = 10 spacing ok:", diag["spacing_ok"], " diameter ok:", diag["diameter_ok"],
      f"({diag['diameter']:.3f} <= {diag['diameter_bound']:.3f})")
