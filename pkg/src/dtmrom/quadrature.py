"""Gaussian rules on the reference segment [0, 1] and triangle {X1, X2 >= 0, X1 + X2 <= 1}."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .errors import ConfigurationError

MAX_DEGREE = 10


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray  # (n_q, D)
    weights: np.ndarray  # (n_q,)
    degree: int

    @property
    def n_q(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _legendre01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_rule(dim: int, degree: int) -> QuadRule:
    """Rule exact for polynomials of total degree ``degree``.

    The triangle rule is a collapsed (Duffy) product of Gauss-Jacobi and
    Gauss-Legendre rules, so all weights are positive.
    """
    if degree < 0 or degree > MAX_DEGREE:
        raise ConfigurationError(f"quadrature degree {degree} unsupported (0..{MAX_DEGREE})")
    n = max(1, (degree + 2) // 2)
    if dim == 1:
        x, w = _legendre01(n)
        pts = x[:, None]
    elif dim == 2:
        xj, wj = roots_jacobi(n, 1.0, 0.0)
        u = 0.5 * (xj + 1.0)
        wu = 0.25 * wj
        v, wv = _legendre01(n)
        uu, vv = np.meshgrid(u, v, indexing="ij")
        pts = np.column_stack([uu.ravel(), ((1.0 - uu) * vv).ravel()])
        w = np.outer(wu, wv).ravel()
    else:
        raise ConfigurationError(f"dimension {dim} unsupported")
    pts.setflags(write=False)
    w = np.ascontiguousarray(w)
    w.setflags(write=False)
    return QuadRule(pts, w, degree)
