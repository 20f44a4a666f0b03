"""Gibbs point processes with hard-core attractive pair potentials: sampling,
cluster statistics, ground-state energies and percolation diagnostics."""

__version__ = "0.1.0"
