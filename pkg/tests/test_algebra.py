import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wrglauber.algebra import (
    FiniteFunction,
    QuadratureScheme,
    SizeError,
    k_inverse,
    k_inverse_of,
    k_transform,
    k_transform_of,
    lebesgue_exponential,
    lebesgue_exponential_function,
    lp_integral,
    pairing,
    ruelle_norm,
    split_sum,
)
from wrglauber.geometry import Domain

from .helpers import random_configuration, random_finite_function, subset_sum_oracle


def empty_indicator(p, m):
    return 1.0 if not p and not m else 0.0


def test_k_transform_of_empty_indicator_is_one():
    rng = np.random.default_rng(0)
    for _ in range(20):
        p, m = random_configuration(rng, 6)
        assert k_transform(empty_indicator, p, m) == 1.0


def test_k_transform_of_singletons():
    f = lambda x: 1.0 + x[0] ** 2  # noqa: E731
    G = lambda p, m: f(p[0]) if len(p) == 1 and not m else 0.0  # noqa: E731
    p, m = ((0.1,), (0.4,), (0.7,)), ((0.2,),)
    assert k_transform(G, p, m) == pytest.approx(sum(f(x) for x in p), abs=1e-15)


def test_k_transform_matches_enumeration_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        G = random_finite_function(rng)
        p, m = random_configuration(rng, 6)
        assert k_transform(G, p, m) == pytest.approx(subset_sum_oracle(G, p, m), abs=1e-12)


def test_k_inverse_of_one():
    one = lambda p, m: 1.0  # noqa: E731
    assert k_inverse(one) == 1.0
    rng = np.random.default_rng(2)
    for _ in range(20):
        p, m = random_configuration(rng, 6, min_size=1)
        assert k_inverse(one, p, m) == 0.0


def test_moebius_duality_small():
    rng = np.random.default_rng(3)
    for _ in range(30):
        G = random_finite_function(rng)
        KG, KiG = k_transform_of(G), k_inverse_of(G)
        p, m = random_configuration(rng, 6)
        assert k_inverse(KG, p, m) == pytest.approx(G(p, m), abs=1e-10)
        assert k_transform(KiG, p, m) == pytest.approx(G(p, m), abs=1e-10)


def test_subset_cap():
    pts = tuple((i / 20,) for i in range(13))
    with pytest.raises(SizeError):
        k_transform(empty_indicator, pts, ())
    with pytest.raises(SizeError):
        k_inverse(empty_indicator, pts[:7], pts[7:])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1, exclude_max=True), max_size=5, unique=True),
       st.lists(st.floats(0, 1, exclude_max=True), max_size=3, unique=True),
       st.integers(0, 2**32 - 1))
def test_k_transform_preserves_positivity(xs, ys, seed):
    rng = np.random.default_rng(seed)
    G = random_finite_function(rng, nonnegative=True)
    assert k_transform(G, [(x,) for x in xs], [(y,) for y in ys]) >= 0


def test_lebesgue_exponential_examples():
    assert lebesgue_exponential(lambda x: 5.0) == 1.0
    assert lebesgue_exponential(lambda x: 3.0, [(0.1,), (0.2,)], [(0.3,)]) == 27.0
    f = lambda x: 1 + x[0]  # noqa: E731
    assert lebesgue_exponential(f, [(0.1,), (0.2,), (0.5,)]) == pytest.approx(1.98, abs=1e-14)


def test_quadrature_weights_sum_to_volume():
    s = QuadratureScheme(Domain.box(2.0, 3.0), 5)
    assert s.weights.sum() == pytest.approx(6.0)
    assert len(s.nodes) == 25
    assert s.refined().nodes_per_axis == 10


def test_lp_integral_of_empty_indicator():
    s = QuadratureScheme(Domain.box(1.0), 4)
    assert lp_integral(empty_indicator, s, 2) == 1.0


def test_lp_exponential_constant():
    s = QuadratureScheme(Domain.box(1.0), 64)
    G = lebesgue_exponential_function(lambda x: 0.5, n_max=12)
    assert lp_integral(G, s, 12, 0) == pytest.approx(math.exp(0.5), abs=1e-8)


def test_product_path_matches_tensor_path():
    s = QuadratureScheme(Domain.box(1.0), 6)
    fp = lambda x: 0.3 + 0.2 * math.cos(2 * math.pi * x[0])  # noqa: E731
    fm = lambda x: 0.1 + x[0]  # noqa: E731
    fast = lebesgue_exponential_function(fp, fm, n_max=3)
    slow = FiniteFunction(fast.func, n_max=3)
    assert lp_integral(fast, s, 2) == pytest.approx(lp_integral(slow, s, 2), rel=1e-12)


def test_lp_exponential_tail_bound():
    # truncation error at order N is at most the exponential-series remainder
    s = QuadratureScheme(Domain.box(1.0), 32)
    f = lambda x: 1.0 + 0.5 * math.sin(2 * math.pi * x[0])  # noqa: E731
    c = s.integrate(f)
    G = lebesgue_exponential_function(f, n_max=12)
    for N in range(1, 10):
        tail = math.exp(c) - sum(c**k / math.factorial(k) for k in range(N + 1))
        err = math.exp(c) - lp_integral(G, s, N, 0)
        assert 0 <= err <= tail + 1e-12


def test_lp_integral_size_error():
    s = QuadratureScheme(Domain.box(1.0), 64)
    G = FiniteFunction(lambda p, m: 1.0, n_max=12)
    with pytest.raises(SizeError):
        lp_integral(G, s, 6)


def test_ibp_identity():
    rng = np.random.default_rng(4)
    s = QuadratureScheme(Domain.box(1.0), 6)
    for _ in range(3):
        G2 = random_finite_function(rng, cap=3)
        lhs = lp_integral(G2, s, 3)
        rhs = lp_integral(split_sum(G2), s, 3, 0)
        assert lhs == pytest.approx(rhs, abs=1e-10)


def test_pairing_examples():
    s = QuadratureScheme(Domain.box(2.0), 8)
    k_poisson = lebesgue_exponential_function(lambda x: 0.7, lambda x: 0.7, n_max=4)
    assert pairing(empty_indicator, k_poisson, s, 2) == pytest.approx(1.0)
    single = lambda p, m: 1.0 if len(p) == 1 and not m else 0.0  # noqa: E731
    assert pairing(single, k_poisson, s, 2) == pytest.approx(0.7 * 2.0, rel=1e-12)
    assert pairing(single, lambda p, m: 0.0, s, 2) == 0.0


def test_ruelle_norm_examples():
    rng = np.random.default_rng(5)
    sample = [random_configuration(rng, 6) for _ in range(30)]
    plus_only = [(p, ()) for p, _ in sample]
    a = 0.3
    k = lebesgue_exponential_function(lambda x: math.exp(a), n_max=12)
    est = ruelle_norm(k, (a, 0.0), plus_only)
    assert est.value == pytest.approx(1.0, rel=1e-12) and est.lower_bound
    assert ruelle_norm(lambda p, m: 0.0, (0, 0), sample).value == 0.0
    two = lambda p, m: 2.0 ** (len(p) + len(m))  # noqa: E731
    for eta in sample:
        assert ruelle_norm(two, (math.log(2), math.log(2)), [eta]).value == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ruelle_norm(two, (0, 0), [])
