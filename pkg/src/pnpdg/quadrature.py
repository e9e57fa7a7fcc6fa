"""Quadrature rules on the reference triangle and the unit edge.

The reference triangle has vertices (0,0), (1,0), (0,1); triangle weights
sum to its area 1/2.  Edge rules live on the parameter interval [0,1] with
weights summing to 1, so physical edge integrals are ``h_e * sum(w * f)``.

Triangle rules up to degree 6 are symmetric Gauss rules with positive
weights (Dunavant's tables, whose 12-digit coefficients are exact well
below 1e-13 up to that degree); higher degrees fall back to a collapsed
tensor-product (Duffy) rule, which is also what the independent dense
oracle uses.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Points (reference coordinates), weights and stated exactness degree."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __post_init__(self):
        if np.any(self.weights <= 0.0):
            raise ValueError("quadrature weights must be positive")

    @property
    def npoints(self):
        return len(self.weights)


def _orbit3(a):
    """Symmetric 3-point orbit with barycentric (1-2a, a, a)."""
    return [(1.0 - 2.0 * a, a, a), (a, 1.0 - 2.0 * a, a), (a, a, 1.0 - 2.0 * a)]


def _orbit6(a, b):
    c = 1.0 - a - b
    return [(c, a, b), (c, b, a), (a, c, b), (a, b, c), (b, c, a), (b, a, c)]


# (weight, orbit points); weights normalized to sum to 1 per rule.
_TRI_RULES = {
    1: [(1.0, [(1 / 3, 1 / 3, 1 / 3)])],
    2: [(1 / 3, _orbit3(1 / 6))],
    4: [
        (0.223381589678011, _orbit3(0.445948490915965)),
        (0.109951743655322, _orbit3(0.091576213509771)),
    ],
    5: [
        (0.225, [(1 / 3, 1 / 3, 1 / 3)]),
        (0.132394152788506, _orbit3(0.470142064105115)),
        (0.125939180544827, _orbit3(0.101286507323456)),
    ],
    6: [
        (0.116786275726379, _orbit3(0.249286745170910)),
        (0.050844906370207, _orbit3(0.063089014491502)),
        (0.082851075618374, _orbit6(0.310352451033785, 0.053145049844816)),
    ],
}


def _tabulated_triangle_rule(degree):
    avail = sorted(_TRI_RULES)
    use = next(d for d in avail if d >= degree)
    pts, wts = [], []
    for w, orbit in _TRI_RULES[use]:
        for lam in orbit:
            # bary (l0, l1, l2) -> reference (x, y) = (l1, l2)
            pts.append((lam[1], lam[2]))
            wts.append(w)
    points = np.array(pts)
    weights = 0.5 * np.array(wts)
    return QuadratureRule(points, weights, use)


def duffy_rule(n):
    """Collapsed n x n Gauss-Legendre rule; exact to total degree 2n - 3."""
    xg, wg = np.polynomial.legendre.leggauss(n)
    a = 0.5 * (xg + 1.0)
    wa = 0.5 * wg
    A, B = np.meshgrid(a, a, indexing="ij")
    WA, WB = np.meshgrid(wa, wa, indexing="ij")
    x = A
    y = B * (1.0 - A)
    w = WA * WB * (1.0 - A)
    points = np.column_stack([x.ravel(), y.ravel()])
    return QuadratureRule(points, w.ravel(), 2 * n - 3)


def triangle_rule(degree):
    """Rule on the reference triangle exact for polynomials up to `degree`."""
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if degree <= max(_TRI_RULES):
        return _tabulated_triangle_rule(max(degree, 1))
    n = (degree + 3 + 1) // 2  # 2n - 3 >= degree
    return duffy_rule(n)


def edge_rule(degree):
    """Gauss rule on [0,1] exact for 1D polynomials up to `degree`."""
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    n = max(1, (degree + 2) // 2)  # 2n - 1 >= degree
    xg, wg = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(0.5 * (xg + 1.0), 0.5 * wg, 2 * n - 1)
