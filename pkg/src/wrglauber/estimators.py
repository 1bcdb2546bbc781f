"""Statistical estimates from simulation snapshots.

Standard errors use batch means: the per-snapshot values are split into
contiguous batches (in the order given) and the SE is the standard error of
the batch means.  Passing independent replicas in sequence therefore gives
replica-level errors; passing a long time series gives autocorrelation-aware
errors as long as batches are longer than the correlation time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Domain, pairwise_min_image

DEFAULT_BATCHES = 20
PAIRS = ("++", "--", "+-")


@dataclass
class BatchMeans:
    """Mergeable accumulator of per-batch (sum, count) pairs.

    Merging concatenates batch lists; the statistics use exactly rounded
    sums, so they do not depend on merge order.
    """

    batches: list = field(default_factory=list)

    @classmethod
    def from_values(cls, values, n_batches: int = DEFAULT_BATCHES) -> "BatchMeans":
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        nb = max(1, min(n_batches, len(values)))
        edges = np.linspace(0, len(values), nb + 1).round().astype(int)
        out = cls()
        for lo, hi in zip(edges[:-1], edges[1:]):
            if hi > lo:
                out.batches.append((values[lo:hi].sum(axis=0), hi - lo))
        return out

    def merge(self, other: "BatchMeans") -> "BatchMeans":
        return BatchMeans(self.batches + other.batches)

    def _means(self) -> np.ndarray:
        return np.array([s / c for s, c in self.batches])

    @property
    def mean(self) -> np.ndarray:
        # pooled over all values, so unequal batch sizes are weighted correctly
        sums = np.array([s for s, _ in self.batches])
        n = sum(c for _, c in self.batches)
        return np.array([math.fsum(col) for col in sums.T]) / n

    @property
    def se(self) -> np.ndarray:
        means = self._means()
        k = len(means)
        if k < 2:
            return np.full(means.shape[1], math.nan)
        mu = np.array([math.fsum(col) for col in means.T]) / k
        var = np.array([math.fsum(col) for col in ((means - mu) ** 2).T]) / (k - 1)
        return np.sqrt(var / k)


@dataclass(frozen=True)
class IntensityEstimate:
    species: str
    density: float
    se: float
    samples: int
    window: tuple


def _in_window(snapshots, window):
    if window is None:
        return list(snapshots)
    lo, hi = window
    return [s for s in snapshots if lo <= s.time <= hi]


def intensity(snapshots, species: str, domain: Domain, window=None,
              n_batches: int = DEFAULT_BATCHES) -> IntensityEstimate:
    """Mean of count / volume over the snapshots in ``window``."""
    snaps = _in_window(snapshots, window)
    if len(snaps) < 2:
        raise ValueError(f"need >= 2 snapshots in window {window}, got {len(snaps)}")
    col = 0 if species == "+" else 1
    # batch integer counts so constant data gives an exactly zero SE
    bm = BatchMeans.from_values([s.counts[col] for s in snaps], n_batches)
    win = (snaps[0].time, snaps[-1].time) if window is None else tuple(window)
    vol = domain.volume
    return IntensityEstimate(species, float(bm.mean[0]) / vol, float(bm.se[0]) / vol, len(snaps), win)


def shell_volumes(edges, dim: int) -> np.ndarray:
    edges = np.asarray(edges, dtype=float)
    if dim == 1:
        return 2.0 * np.diff(edges)
    return math.pi * np.diff(edges**2)


@dataclass(frozen=True)
class PairCorrelationEstimate:
    pair: str
    edges: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    samples: int

    def rows(self):
        for lo, hi, e, s in zip(self.edges[:-1], self.edges[1:], self.estimate, self.se):
            yield float(lo), float(hi), float(e), float(s)


def pair_counts(snapshot, pair: str, edges, domain: Domain) -> np.ndarray:
    """Ordered pair counts per distance bin for one snapshot."""
    if pair == "++":
        a = b = snapshot.plus
    elif pair == "--":
        a = b = snapshot.minus
    elif pair == "+-":
        a, b = snapshot.plus, snapshot.minus
    else:
        raise ValueError(f"pair must be one of {PAIRS}")
    if len(a) == 0 or len(b) == 0:
        return np.zeros(len(edges) - 1)
    r = pairwise_min_image(a, b, domain)
    if a is b:
        r = r[~np.eye(len(a), dtype=bool)]
    counts, _ = np.histogram(r.ravel(), bins=edges)
    return counts.astype(float)


def pair_correlation(snapshots, pair: str, edges, domain: Domain,
                     n_batches: int = DEFAULT_BATCHES) -> PairCorrelationEstimate:
    """Second-order correlation kernel by distance histogram.

    Ordered pair counts are divided by ``volume * shell volume`` so a Poisson
    configuration gives ``rho_1 * rho_2`` in every bin.
    """
    edges = np.asarray(edges, dtype=float)
    if np.any(np.diff(edges) <= 0) or edges[0] < 0:
        raise ValueError("bin edges must be increasing and non-negative")
    if edges[-1] > domain.half_min_side:
        raise ValueError(
            f"largest bin edge {edges[-1]} exceeds half the smallest side {domain.half_min_side}"
        )
    snaps = list(snapshots)
    if not snaps:
        raise ValueError("no snapshots")
    norm = domain.volume * shell_volumes(edges, domain.dimension)
    values = np.array([pair_counts(s, pair, edges, domain) / norm for s in snaps])
    bm = BatchMeans.from_values(values, n_batches)
    se = bm.se if len(snaps) > 1 else np.full(len(norm), math.nan)
    return PairCorrelationEstimate(pair, edges, bm.mean, se, len(snaps))


@dataclass(frozen=True)
class GapEstimate:
    gap: float
    se: float
    time: float
    bin_index: int


def factorization_gap(snapshots_by_time, n_scale: int, kinetic_solution, edges,
                      domain: Domain) -> GapEstimate:
    """Largest deviation of the rescaled cross-pair kernel from ``rho+ rho-``.

    ``snapshots_by_time`` maps each sampled time to the replica snapshots
    taken at it; ``kinetic_solution(t)`` returns ``(rho_plus, rho_minus)``
    and must be defined at every sampled time.
    """
    best = GapEstimate(-math.inf, math.nan, math.nan, -1)
    for t, snaps in sorted(snapshots_by_time.items()):
        if any(abs(s.time - t) > 1e-12 for s in snaps):
            raise ValueError(f"snapshot times do not match sampled time {t}")
        try:
            rho_p, rho_m = kinetic_solution(t)
        except (KeyError, IndexError):
            raise ValueError(f"kinetic solution unavailable at t={t}") from None
        est = pair_correlation(snaps, "+-", edges, domain, n_batches=len(snaps))
        dev = np.abs(est.estimate / n_scale**2 - rho_p * rho_m)
        i = int(np.argmax(dev))
        if dev[i] > best.gap:
            best = GapEstimate(float(dev[i]), float(est.se[i] / n_scale**2), float(t), i)
    return best


@dataclass(frozen=True)
class DecayFit:
    rate: float | None
    amplitude: float | None
    residual: float | None
    window: tuple
    noise_floor: bool = False
    reliable: bool = True


def decay_fit(series, target: float, residual_threshold: float = 0.25) -> DecayFit:
    """Least-squares line through ``log|value - target|`` against time.

    Returns ``rate = -slope``.  If any value sits on the wrong side of (or
    on) the target the series is at the noise floor and no rate is given.
    """
    data = np.asarray(series, dtype=float)
    if data.ndim != 2 or data.shape[0] < 5:
        raise ValueError("need at least 5 (time, value) points")
    t, v = data[:, 0], data[:, 1] - target
    window = (float(t[0]), float(t[-1]))
    sign = np.sign(v[0])
    if sign == 0 or np.any(np.sign(v) != sign):
        return DecayFit(None, None, None, window, noise_floor=True, reliable=False)
    y = np.log(np.abs(v))
    slope, intercept = np.polyfit(t, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * t + intercept)) ** 2)))
    return DecayFit(
        float(-slope), float(sign * math.exp(intercept)), resid, window,
        noise_floor=False, reliable=resid < residual_threshold,
    )
