"""Exact sampling of spatially correlated Gaussian fields.

Draws come from a lower-triangular factorization of the exponential
covariance matrix, with escalating diagonal jitter when the matrix is
numerically indefinite, and a small cache of factors keyed by the rounded
parameter triple.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .errors import FactorizationError
from .variogram import exponential_covariance

JITTER_CAP = 1e-6


def cholesky_with_jitter(sigma) -> np.ndarray:
    """Lower Cholesky factor, adding diagonal jitter (up to 1e-6) if needed."""
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        pass
    jitter = max(1e-10 * np.trace(sigma) / sigma.shape[0], 1e-12)
    while jitter <= JITTER_CAP:
        try:
            return np.linalg.cholesky(sigma + jitter * np.eye(sigma.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise FactorizationError(
        f"covariance factorization failed with jitter up to {JITTER_CAP}")


class FactorCache:
    """LRU cache of Cholesky factors keyed by (nugget, psill, range) at 1e-6."""

    def __init__(self, dist, maxsize: int = 8):
        self.dist = np.asarray(dist, dtype=float)
        self.maxsize = maxsize
        self._store: OrderedDict = OrderedDict()

    @staticmethod
    def _key(nugget, psill, range_km):
        return (round(float(nugget), 6), round(float(psill), 6),
                round(float(range_km), 6))

    def factor(self, nugget, psill, range_km) -> np.ndarray:
        key = self._key(nugget, psill, range_km)
        if key in self._store:
            self._store.move_to_end(key)
            return self._store[key]
        L = cholesky_with_jitter(exponential_covariance(self.dist, *key))
        self._store[key] = L
        if len(self._store) > self.maxsize:
            self._store.popitem(last=False)
        return L


def gaussian_field_sample(grid, nugget, psill, range_km, seed,
                          n_draws: int = 1, cache: FactorCache | None = None) -> np.ndarray:
    """Draw centered Gaussian fields on a grid, (n_cells x n_draws).

    The covariance is psill*exp(-h/range) with the nugget on zero distances.
    Identical seeds give identical draws.
    """
    if nugget < 0 or psill < 0 or range_km <= 0 or nugget + psill <= 0:
        raise ValueError("invalid covariance parameters")
    if cache is None:
        cache = FactorCache(grid.distance_matrix(), maxsize=1)
    L = cache.factor(nugget, psill, range_km)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((L.shape[0], n_draws))
    return L @ z
