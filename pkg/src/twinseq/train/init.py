"""Weight initializers."""

from __future__ import annotations

import numpy as np


def glorot_init(fan_in: int, fan_out: int, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
    """Uniform Glorot/Xavier matrix of shape ``(fan_in, fan_out)``.

    Entries are drawn i.i.d. from U(-a, a) with ``a = sqrt(6 / (fan_in + fan_out))``.
    """
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fans must be positive, got fan_in={fan_in}, fan_out={fan_out}")
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out)).astype(dtype)


def orthogonal_init(n: int, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
    """Random n x n orthogonal matrix (QR of a Gaussian, signs fixed by diag(R))."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    # without the sign fix the distribution is not Haar
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return (q * signs).astype(dtype)
