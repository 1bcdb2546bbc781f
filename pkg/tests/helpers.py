"""Shared oracles and generators for the test suite."""

import math
from itertools import combinations

import numpy as np

from wrglauber.algebra import FiniteFunction


def random_configuration(rng, max_size, min_size=0, dim=1, side=1.0):
    n = int(rng.integers(min_size, max_size + 1))
    k = int(rng.integers(0, n + 1))
    pts = [tuple(float(c) for c in row) for row in rng.random((n, dim)) * side]
    return tuple(pts[:k]), tuple(pts[k:])


def random_finite_function(rng, cap=6, nonnegative=False):
    """Symmetric bounded-support function built from power sums."""
    table = rng.normal(size=(cap + 1, cap + 1))
    if nonnegative:
        table = np.abs(table)
    a, b = rng.normal(size=2)

    def func(p, m):
        s = sum(x[0] for x in p) + 2 * sum(y[0] for y in m)
        q = sum(x[0] ** 2 for x in p) - sum(y[0] ** 2 for y in m)
        v = table[len(p), len(m)] * (1.5 + math.cos(a * s + b * q))
        return v

    return FiniteFunction(func, n_max=cap)


def subset_sum_oracle(G, plus, minus):
    """K-transform by explicit enumeration of index sets (independent code)."""
    total = []
    for r in range(len(plus) + 1):
        for sp in combinations(plus, r):
            for t in range(len(minus) + 1):
                for sm in combinations(minus, t):
                    total.append(G(sp, sm))
    return math.fsum(total)


def gillespie_free_counts(z_plus, z_minus, volume, m, t_end, burn_in, seed, n_batches=20):
    """Direct (rejection-free) SSA for the interaction-free two-type process.

    Counts only; returns per-batch time averages of (n_plus, n_minus).
    """
    rng = np.random.default_rng(seed)
    n = [0, 0]
    t = 0.0
    edges = np.linspace(burn_in, t_end, n_batches + 1)
    acc = np.zeros((n_batches, 2))
    while True:
        rates = np.array([z_plus * volume, z_minus * volume, n[0], n[1], m * n[0], m * n[1]])
        total = rates.sum()
        dt = rng.exponential(1.0 / total)
        lo, hi = t, min(t + dt, t_end)
        if hi > burn_in:
            for b in range(n_batches):
                a, c = max(lo, edges[b]), min(hi, edges[b + 1])
                if c > a:
                    acc[b] += (c - a) * np.array(n)
        t += dt
        if t >= t_end:
            break
        k = rng.choice(6, p=rates / total)
        if k == 0:
            n[0] += 1
        elif k == 1:
            n[1] += 1
        elif k == 2:
            n[0] -= 1
        elif k == 3:
            n[1] -= 1
        elif k == 4:
            n[0] -= 1
            n[1] += 1
        else:
            n[1] -= 1
            n[0] += 1
    return acc / np.diff(edges)[:, None]


def time_averaged_counts(events, initial_counts, t_start, t_end, n_batches=20):
    """Per-batch time averages of the species counts from an event log."""
    edges = np.linspace(t_start, t_end, n_batches + 1)
    acc = np.zeros((n_batches, 2))
    t_prev, counts = 0.0, np.array(initial_counts, dtype=float)
    times = [e.time for e in events] + [t_end]
    states = [np.array(e.counts, dtype=float) for e in events]
    for i, t in enumerate(times):
        lo, hi = max(t_prev, t_start), min(t, t_end)
        if hi > lo:
            b0 = max(0, np.searchsorted(edges, lo, side="right") - 1)
            for b in range(b0, n_batches):
                a, c = max(lo, edges[b]), min(hi, edges[b + 1])
                if c <= a:
                    if edges[b] >= hi:
                        break
                    continue
                acc[b] += (c - a) * counts
        if i < len(states):
            counts = states[i]
        t_prev = t
    return acc / np.diff(edges)[:, None]
