"""Classical proximal gradient (ISTA) for ``0.5 ||Ax - c||^2 + lam ||x||_1``."""
from __future__ import annotations

import numpy as np


def soft_threshold(u, t):
    return np.sign(u) * np.maximum(np.abs(u) - t, 0.0)


def ista(A, c, lam: float, L: float, x0, iterations: int, radius: float = np.inf) -> np.ndarray:
    """Iterates ``x_1 = x0, x_{k+1} = clip(soft(x_k - grad/L, lam/L))``; shape ``(iterations, n)``.

    Clipping to ``[-radius, radius]`` is exact for the separable box constraint.
    """
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    x = np.array(x0, dtype=float)
    out = np.empty((max(iterations, 0), x.size))
    for k in range(iterations):
        if k:
            g = A.T @ (A @ x - c)
            x = np.clip(soft_threshold(x - g / L, lam / L), -radius, radius)
        out[k] = x
    return out
