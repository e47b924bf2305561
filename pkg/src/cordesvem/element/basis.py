"""Scaled monomials ((x - xK) / hK)^alpha on a cell."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def dim_p(k: int) -> int:
    """Dimension of P_k in two variables (0 for k < 0)."""
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


@lru_cache(maxsize=None)
def monomial_exponents(k: int) -> tuple[tuple[int, int], ...]:
    """Exponents ordered by total degree, then by decreasing power of x."""
    return tuple((a, d - a) for d in range(k + 1) for a in range(d, -1, -1))


@lru_cache(maxsize=None)
def _derivative_table(k: int, i: int, j: int):
    """Exponents after differentiation and the falling-factorial factors."""
    exps = np.array(monomial_exponents(k), dtype=np.int64).reshape(-1, 2)
    ax, ay = exps[:, 0], exps[:, 1]
    coef = np.ones(len(ax))
    for r in range(i):
        coef *= ax - r
    for r in range(j):
        coef *= ay - r
    return np.maximum(ax - i, 0), np.maximum(ay - j, 0), coef


class ScaledMonomials:
    """Basis of P_k made of ((x - center) / h)^alpha."""

    def __init__(self, center, h: float, k: int):
        self.center = np.asarray(center, dtype=float)
        self.h = float(h)
        self.k = int(k)
        exps = np.array(monomial_exponents(self.k), dtype=np.int64).reshape(-1, 2)
        self.ax, self.ay = exps[:, 0], exps[:, 1]

    def __len__(self):
        return len(self.ax)

    def derivative(self, x, i: int = 0, j: int = 0) -> np.ndarray:
        """``d^(i+j) / dx^i dy^j`` of every basis function at points ``x``, shape (nq, nb)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xi = (x[:, 0] - self.center[0]) / self.h
        eta = (x[:, 1] - self.center[1]) / self.h
        px, py, coef = _derivative_table(self.k, i, j)
        return (coef / self.h ** (i + j)) * xi[:, None] ** px * eta[:, None] ** py

    def values(self, x) -> np.ndarray:
        return self.derivative(x)

    def gradients(self, x) -> np.ndarray:
        """Shape (nq, nb, 2)."""
        return np.stack([self.derivative(x, 1, 0), self.derivative(x, 0, 1)], axis=-1)

    def hessians(self, x) -> np.ndarray:
        """Shape (nq, nb, 2, 2)."""
        dxx = self.derivative(x, 2, 0)
        dxy = self.derivative(x, 1, 1)
        dyy = self.derivative(x, 0, 2)
        return np.stack([np.stack([dxx, dxy], -1), np.stack([dxy, dyy], -1)], -2)

    def grad_laplacian(self, x) -> np.ndarray:
        """Gradient of the Laplacian, i.e. the divergence of the Hessian, shape (nq, nb, 2)."""
        gx = self.derivative(x, 3, 0) + self.derivative(x, 1, 2)
        gy = self.derivative(x, 2, 1) + self.derivative(x, 0, 3)
        return np.stack([gx, gy], axis=-1)

    def coefficients_of(self, poly: dict[tuple[int, int], float]) -> np.ndarray:
        """Scaled-monomial coefficients of ``sum c * x^a y^b`` (global monomials).

        Exact re-expansion of (center + h * xi)^a (center + h * eta)^b.
        """
        from math import comb

        index = {e: n for n, e in enumerate(monomial_exponents(self.k))}
        out = np.zeros(len(self))
        cx, cy = self.center
        for (a, b), c in poly.items():
            if a + b > self.k:
                raise ValueError(f"monomial x^{a} y^{b} exceeds degree {self.k}")
            for i in range(a + 1):
                for j in range(b + 1):
                    out[index[(i, j)]] += (c * comb(a, i) * cx ** (a - i) * self.h**i
                                           * comb(b, j) * cy ** (b - j) * self.h**j)
        return out

    def evaluate(self, coeffs, x, i: int = 0, j: int = 0) -> np.ndarray:
        return self.derivative(x, i, j) @ np.asarray(coeffs)
