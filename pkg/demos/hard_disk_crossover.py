"""Finite-size percolation crossover of hard disks (beta = 0) at fixed particle number.

The wrapping fraction theta is the share of particles in clusters that connect
to their own periodic image; it rises from 0 to 1 as the density grows.

Run: python3 demos/hard_disk_crossover.py
"""
from gibbsperc.experiments import ExperimentConfig, sweep_canonical

cfg = ExperimentConfig.from_string("""
[potential]
shape = hard_core
r_hc = 1.0
[box]
L = 10.0
[grid]
ensemble = canonical
beta = 0.0
N = 5, 20, 40, 50, 60
R = 1.5
chains = 2
[mcmc]
sweeps = 1000
burn_in = 200
seed = 7
""")

for p in sweep_canonical(cfg).points:
    rho = p["N"] / cfg.box.volume
    print(f"N = {p['N']:>3}  rho = {rho:.2f}  theta = {p['theta']:.3f} +- {p['theta_se']:.3f}  "
          f"move acceptance {p['accept_move']:.2f}")
