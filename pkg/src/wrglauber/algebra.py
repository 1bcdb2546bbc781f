"""Harmonic analysis on finite two-type configurations, at desk scale.

Functions on finite configurations are plain callables ``G(plus, minus)``
taking two tuples of positions.  They are expected to be symmetric within
each species.  Integrals against the Lebesgue-Poisson measure are computed
on a uniform midpoint rule on the torus; coincident quadrature nodes are
allowed (the integrand is evaluated on tuples, not on sets).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, product
from typing import Callable

import numpy as np

from .geometry import Domain

SUBSET_CAP = 12
PRODUCT_RULE_BUDGET = 20_000_000


class SizeError(ValueError):
    """Configuration or product rule too large to enumerate."""


@dataclass(frozen=True)
class FiniteFunction:
    """A bounded function on two-type finite configurations.

    Evaluates to 0 on configurations with more than ``n_max`` points in
    total.  ``factors`` marks a Lebesgue exponential ``prod f_plus(x) *
    prod f_minus(y)``; ``lp_integral`` then integrates it in closed form per
    particle number instead of over the tensor grid.
    """

    func: Callable
    n_max: int = SUBSET_CAP
    factors: tuple | None = None

    def __call__(self, plus=(), minus=()) -> float:
        if len(plus) + len(minus) > self.n_max:
            return 0.0
        return float(self.func(tuple(plus), tuple(minus)))


def _as_function(G) -> FiniteFunction:
    return G if isinstance(G, FiniteFunction) else FiniteFunction(G)


def _subsets(points):
    n = len(points)
    for k in range(n + 1):
        for idx in combinations(range(n), k):
            yield idx


def _check_cap(plus, minus, cap):
    if len(plus) + len(minus) > cap:
        raise SizeError(f"|eta| = {len(plus) + len(minus)} exceeds subset cap {cap}")


def k_transform(G, plus=(), minus=(), cap: int = SUBSET_CAP) -> float:
    """Sum of ``G`` over all sub-configurations of ``(plus, minus)``."""
    G = _as_function(G)
    plus, minus = tuple(plus), tuple(minus)
    _check_cap(plus, minus, cap)
    total = math.fsum(
        G(tuple(plus[i] for i in ip), tuple(minus[j] for j in im))
        for ip in _subsets(plus)
        for im in _subsets(minus)
    )
    return total


def k_inverse(F, plus=(), minus=(), cap: int = SUBSET_CAP) -> float:
    """Moebius inversion: alternating sum over sub-configurations."""
    F = _as_function(F)
    plus, minus = tuple(plus), tuple(minus)
    _check_cap(plus, minus, cap)
    n = len(plus) + len(minus)
    return math.fsum(
        (-1) ** (n - len(ip) - len(im))
        * F(tuple(plus[i] for i in ip), tuple(minus[j] for j in im))
        for ip in _subsets(plus)
        for im in _subsets(minus)
    )


def k_transform_of(G, cap: int = SUBSET_CAP) -> FiniteFunction:
    G = _as_function(G)
    return FiniteFunction(lambda p, m: k_transform(G, p, m, cap), n_max=cap)


def k_inverse_of(F, cap: int = SUBSET_CAP) -> FiniteFunction:
    F = _as_function(F)
    return FiniteFunction(lambda p, m: k_inverse(F, p, m, cap), n_max=cap)


def lebesgue_exponential(f, plus=(), minus=()) -> float:
    """Product of ``f`` over all points of both species (1 on the empty one)."""
    out = 1.0
    for x in tuple(plus) + tuple(minus):
        out *= f(x)
    return out


def lebesgue_exponential_function(f_plus, f_minus=None, n_max: int = SUBSET_CAP) -> FiniteFunction:
    """``e_lambda`` as a :class:`FiniteFunction`; ``f_minus=None`` means the
    minus species is absent (the function vanishes when minus is nonempty)."""

    def func(p, m):
        if f_minus is None and m:
            return 0.0
        out = lebesgue_exponential(f_plus, p)
        if m:
            out *= lebesgue_exponential(f_minus, m)
        return out

    return FiniteFunction(func, n_max=n_max, factors=(f_plus, f_minus))


# ---------------------------------------------------------------------------
# quadrature

@dataclass(frozen=True)
class QuadratureScheme:
    """Uniform midpoint rule on the periodic box."""

    domain: Domain
    nodes_per_axis: int

    def __post_init__(self):
        if self.nodes_per_axis < 1:
            raise ValueError("need at least one node per axis")

    @property
    def nodes(self) -> list:
        axes = [
            (np.arange(self.nodes_per_axis) + 0.5) * (L / self.nodes_per_axis)
            for L in self.domain.side_lengths
        ]
        return [tuple(float(c) for c in p) for p in product(*axes)]

    @property
    def weights(self) -> np.ndarray:
        n = len(self.nodes)
        return np.full(n, self.domain.volume / n)

    def refined(self) -> "QuadratureScheme":
        return QuadratureScheme(self.domain, 2 * self.nodes_per_axis)

    def integrate(self, f) -> float:
        """Single-particle integral of ``f`` over the box."""
        w = self.weights
        return math.fsum(wi * f(x) for wi, x in zip(w, self.nodes))


def _tensor_sum(G, scheme: QuadratureScheme, n: int, m: int) -> float:
    nodes = scheme.nodes
    w = scheme.domain.volume / len(nodes)
    count = len(nodes) ** (n + m)
    if count > PRODUCT_RULE_BUDGET:
        raise SizeError(f"{count} product-rule evaluations for (n, m) = ({n}, {m})")
    total = math.fsum(
        G(combo[:n], combo[n:]) for combo in product(nodes, repeat=n + m)
    )
    return total * w ** (n + m)


def lp_integral(G, scheme: QuadratureScheme, n_max: int, n_max_minus: int | None = None) -> float:
    """Truncated two-species Lebesgue-Poisson integral.

    Sums ``1/(n! m!)`` times the ``n + m`` particle product-rule integrals
    for ``n, m <= n_max`` (or ``m <= n_max_minus``).
    """
    G = _as_function(G)
    n_minus = n_max if n_max_minus is None else n_max_minus
    if n_max > G.n_max:
        raise SizeError(f"n_max={n_max} exceeds the function's size cap {G.n_max}")
    if G.factors is not None:
        return _lp_integral_product(G, scheme, n_max, n_minus)
    terms = []
    for n in range(n_max + 1):
        for m in range(n_minus + 1):
            if n + m > G.n_max:
                continue
            terms.append(_tensor_sum(G, scheme, n, m) / (math.factorial(n) * math.factorial(m)))
    return math.fsum(terms)


def _lp_integral_product(G: FiniteFunction, scheme, n_max, n_minus):
    f_plus, f_minus = G.factors
    a = scheme.integrate(f_plus)
    b = scheme.integrate(f_minus) if f_minus is not None else 0.0
    n_minus = n_minus if f_minus is not None else 0
    terms = []
    for n in range(n_max + 1):
        for m in range(n_minus + 1):
            if n + m > G.n_max:
                continue
            terms.append(a**n / math.factorial(n) * b**m / math.factorial(m))
    return math.fsum(terms)


def pairing(G, k, scheme: QuadratureScheme, n_max: int, n_max_minus: int | None = None) -> float:
    """Duality pairing: Lebesgue-Poisson integral of ``G * k``."""
    G, k = _as_function(G), _as_function(k)
    cap = min(G.n_max, k.n_max)
    prod_fn = FiniteFunction(lambda p, m: G(p, m) * k(p, m), n_max=cap)
    return lp_integral(prod_fn, scheme, n_max, n_max_minus)


def split_sum(G2) -> FiniteFunction:
    """``eta -> sum over xi subset eta of G2(xi, eta minus xi)`` for a function
    ``G2(xi, eta)`` of two single-species configurations."""

    def func(p, m):
        return math.fsum(
            G2(tuple(p[i] for i in idx), tuple(p[j] for j in range(len(p)) if j not in idx))
            for idx in _subsets(p)
        )

    return FiniteFunction(func)


@dataclass(frozen=True)
class RuelleEstimate:
    value: float
    lower_bound: bool = True
    argmax: tuple | None = None


def ruelle_norm(k, alpha, sample) -> RuelleEstimate:
    """Sampled maximum of ``|k(eta)| exp(-alpha_plus |eta+| - alpha_minus |eta-|)``.

    The true norm is an essential supremum; this is a lower bound for it.
    """
    a_plus, a_minus = alpha
    best, arg = -math.inf, None
    for plus, minus in sample:
        v = abs(k(tuple(plus), tuple(minus))) * math.exp(-a_plus * len(plus) - a_minus * len(minus))
        if v > best:
            best, arg = v, (tuple(plus), tuple(minus))
    if arg is None:
        raise ValueError("empty sample")
    return RuelleEstimate(best, True, arg)
