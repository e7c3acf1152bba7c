"""Closed-form monomial integrals over the reference simplices and their facets.

Used as an independent oracle for the operator verifier; nothing here touches
quadrature.  Integrals over the unit simplex use the Dirichlet formula
``int x^k = prod(k_i!) / (|k| + d)!``.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from itertools import product
from math import comb, factorial, sqrt


def _unit_simplex(k):
    num = 1
    for ki in k:
        num *= factorial(ki)
    return Fraction(num, factorial(sum(k) + len(k)))


@lru_cache(maxsize=None)
def reference_volume_integral(alpha) -> Fraction:
    """Exact integral of xi^alpha over the reference triangle or tetrahedron.

    The reference simplex is the image of the unit simplex under
    ``xi = 2 x - 1``.
    """
    d = len(alpha)
    total = Fraction(0)
    for k in product(*(range(a + 1) for a in alpha)):
        c = 1
        for a, ki in zip(alpha, k):
            c *= comb(a, ki) * 2 ** ki * (-1) ** (a - ki)
        total += c * _unit_simplex(k)
    return total * 2 ** d


@lru_cache(maxsize=None)
def _line_integral(n) -> Fraction:
    return Fraction(2, n + 1) if n % 2 == 0 else Fraction(0)


def _sign(n):
    return -1 if n % 2 else 1


@lru_cache(maxsize=None)
def _tri_facet(zeta, alpha):
    a1, a2 = alpha
    if zeta == 1:  # xi2 = -1
        return _sign(a2) * _line_integral(a1), 1.0
    if zeta == 3:  # xi1 = -1
        return _sign(a1) * _line_integral(a2), 1.0
    # hypotenuse xi1 = -t, xi2 = t, arc length sqrt(2) dt
    return _sign(a1) * _line_integral(a1 + a2), sqrt(2.0)


@lru_cache(maxsize=None)
def _tet_facet(zeta, alpha):
    a1, a2, a3 = alpha
    if zeta == 1:  # xi2 = -1
        return _sign(a2) * reference_volume_integral((a1, a3)), 1.0
    if zeta == 3:  # xi1 = -1
        return _sign(a1) * reference_volume_integral((a2, a3)), 1.0
    if zeta == 4:  # xi3 = -1
        return _sign(a3) * reference_volume_integral((a1, a2)), 1.0
    # oblique face, projected onto (xi2, xi3); xi1 = -1 - xi2 - xi3
    total = Fraction(0)
    for i in range(a1 + 1):
        for j in range(a1 - i + 1):
            k = a1 - i - j
            c = factorial(a1) // (factorial(i) * factorial(j) * factorial(k))
            total += c * reference_volume_integral((a2 + j, a3 + k))
    return _sign(a1) * total, sqrt(3.0)


def reference_facet_integral(zeta, alpha) -> float:
    """Exact integral of xi^alpha over reference facet ``zeta`` (1-based)."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) == 2:
        frac, scale = _tri_facet(zeta, alpha)
    else:
        frac, scale = _tet_facet(zeta, alpha)
    return float(frac) * scale


def multi_indices(d, p):
    """All multi-indices of length d and total degree <= p, graded order."""
    out = [a for a in product(range(p + 1), repeat=d) if sum(a) <= p]
    return sorted(out, key=lambda a: (sum(a), a[::-1]))
