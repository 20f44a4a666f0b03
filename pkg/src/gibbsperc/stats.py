"""Autocorrelation times, effective sample sizes and batch-means error bars."""
from __future__ import annotations

import math

import numpy as np


def autocorr(x) -> np.ndarray:
    """Normalized autocorrelation function of a 1-d series (FFT based)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    x = x - x.mean()
    var = np.dot(x, x)
    if n < 2 or var == 0:
        return np.ones(1)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acf = np.fft.irfft(f * np.conjugate(f), size)[:n]
    return acf / acf[0]


def integrated_time(x, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's automatic window ``M >= c * tau``."""
    rho = autocorr(x)
    if len(rho) < 2:
        return 1.0
    taus = 2.0 * np.cumsum(rho) - 1.0
    window = np.arange(len(taus)) < c * taus
    m = int(np.argmin(window)) if not window.all() else len(taus) - 1
    return max(float(taus[m]), 1.0)


def effective_sample_size(x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim > 1:
        cols = [effective_sample_size(x[:, j]) for j in range(x.shape[1]) if np.ptp(x[:, j]) > 0]
        return min(cols) if cols else float(len(x))
    if len(x) == 0:
        return 0.0
    return len(x) / integrated_time(x)


def batch_count(x, max_batches: int = 32, min_batches: int = 8) -> int:
    """Number of batches so each batch spans at least ~10 autocorrelation times."""
    n = len(x)
    if n < min_batches:
        return max(n, 1)
    tau = integrated_time(x)
    nb = int(n // max(1, math.ceil(10 * tau)))
    return int(min(max_batches, max(min_batches, nb)))


def batch_means(x, n_batches: int | None = None) -> np.ndarray:
    """Means of contiguous, equal-length batches (trailing remainder dropped)."""
    x = np.asarray(x, dtype=float)
    if n_batches is None:
        n_batches = batch_count(x if x.ndim == 1 else x.reshape(len(x), -1).sum(axis=1))
    size = len(x) // n_batches
    if size == 0:
        return x.copy()
    return x[: size * n_batches].reshape(n_batches, size, *x.shape[1:]).mean(axis=1)


def mean_and_error(batches) -> tuple:
    """Grand mean and standard error from independent batch means (axis 0)."""
    b = np.asarray(batches, dtype=float)
    if len(b) == 0:
        return np.nan, np.nan
    if len(b) == 1:
        return b[0], np.zeros_like(b[0]) if b.ndim > 1 else 0.0
    return b.mean(axis=0), b.std(axis=0, ddof=1) / math.sqrt(len(b))
