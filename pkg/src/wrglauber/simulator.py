"""Exact continuous-time simulation of the two-type birth/death/mutation process.

Events are proposed at a state-dependent bound rate

    R = N + (z_plus + z_minus) |box| + m N,        N = |plus| + |minus|,

and thinned: each particle dies at rate 1 (always accepted), proposes a
mutation at rate ``m`` (accepted with probability ``exp(-E_kappa - E_tau)``)
and each species proposes a uniform birth at rate ``z |box|`` (accepted
with ``exp(-E_phi - E_psi)``).  Potentials are non-negative so every
acceptance factor is at most 1, and ``R`` changes only at accepted events,
which makes the thinning exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    CellIndex,
    Domain,
    IndexInvariantError,
    PotentialSet,
    TwoTypeConfiguration,
    check_compatible,
    relative_energy,
)

PLUS, MINUS = 0, 1
SIGN = ("+", "-")

BIRTH_PLUS = "birth+"
BIRTH_MINUS = "birth-"
DEATH_PLUS = "death+"
DEATH_MINUS = "death-"
MUTATION_PM = "mutation+-"
MUTATION_MP = "mutation-+"
REJECTED = "rejected"

_BIRTH = (BIRTH_PLUS, BIRTH_MINUS)
_DEATH = (DEATH_PLUS, DEATH_MINUS)
_MUTATION = (MUTATION_PM, MUTATION_MP)

RNG_BLOCK = 2048


def derive_seed(base_seed: int, *key: int) -> np.random.SeedSequence:
    """Independent, reproducible stream for replica ``key`` of ``base_seed``."""
    return np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in key))


class UniformStream:
    """Buffered uniforms in [0, 1) from a PCG64 generator (128-bit state)."""

    def __init__(self, seed):
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(int(seed))
        self.generator = np.random.Generator(np.random.PCG64(seed))
        self._buf = []
        self._pos = 0

    def next(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self.generator.random(RNG_BLOCK).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


@dataclass(frozen=True)
class ScaledParams:
    base: PotentialSet
    scale_n: int
    params: PotentialSet


def vlasov_rescale(params: PotentialSet, n: int) -> ScaledParams:
    """Activities times ``n``, every potential amplitude divided by ``n``."""
    if int(n) != n or n < 1:
        raise ValueError(f"scale must be an integer >= 1, got {n}")
    n = int(n)
    if n == 1:
        return ScaledParams(params, 1, params)
    scaled = replace(
        params,
        z_plus=params.z_plus * n,
        z_minus=params.z_minus * n,
        **{name: g.scaled(1.0 / n) for name, g in params.potentials().items()},
    )
    return ScaledParams(params, n, scaled)


@dataclass(slots=True)
class EventRecord:
    time: float
    kind: str
    position: tuple | None
    counts: tuple
    proposal: str | None = None  # proposed channel for rejected events


@dataclass
class SimState:
    domain: Domain
    indices: list  # one CellIndex per species
    time: float
    rng: UniformStream
    counters: dict = field(default_factory=dict)

    @classmethod
    def from_configuration(cls, config: TwoTypeConfiguration, params: PotentialSet, seed) -> "SimState":
        check_compatible(config.domain, params)
        cell = params.max_cutoff
        indices = [CellIndex(config.domain, cell, config.species(s)) for s in (PLUS, MINUS)]
        counters = {k: 0 for k in _BIRTH + _DEATH + _MUTATION}
        counters.update({f"rejected {k}": 0 for k in _BIRTH + _MUTATION})
        return cls(config.domain, indices, 0.0, UniformStream(seed), counters)

    @property
    def counts(self) -> tuple:
        return len(self.indices[PLUS]), len(self.indices[MINUS])

    def configuration(self) -> TwoTypeConfiguration:
        return TwoTypeConfiguration(
            self.domain, tuple(self.indices[PLUS].points), tuple(self.indices[MINUS].points)
        )


def total_bound_rate(state: SimState, params: PotentialSet) -> float:
    n = len(state.indices[PLUS]) + len(state.indices[MINUS])
    vol = state.domain.volume
    return n + (params.z_plus + params.z_minus) * vol + params.mutation_multiplier * n


def exact_total_rate(state: SimState, params: PotentialSet, birth_nodes: int = 200) -> float:
    """Sum of the true channel rates; birth integrals by midpoint rule.

    Reference for tests only: O(N^2 + nodes * N).
    """
    total = float(sum(state.counts))
    for s in (PLUS, MINUS):
        for x in state.indices[s].points:
            total += mutation_acceptance((s, x), state, params)
    d = state.domain
    axes = [(np.arange(birth_nodes) + 0.5) * L / birth_nodes for L in d.side_lengths]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d.dimension)
    w = d.volume / len(grid)
    for s in (PLUS, MINUS):
        acc = sum(birth_acceptance(tuple(x), s, state, params) for x in grid.tolist())
        total += params.activity(s) * w * acc
    return total


def birth_acceptance(x, species: int, state: SimState, params: PotentialSet) -> float:
    same, cross = params.birth_potentials(species)
    e = 0.0
    if not same.is_zero:
        e += relative_energy(same, x, domain=state.domain, index=state.indices[species])
    if not cross.is_zero:
        e += relative_energy(cross, x, domain=state.domain, index=state.indices[1 - species])
    return math.exp(-e)


def mutation_acceptance(particle, state: SimState, params: PotentialSet) -> float:
    """``m * exp(-E_kappa(x, own species minus x) - E_tau(x, other species))``."""
    species, x = particle
    x = tuple(x)
    index = state.indices[species]
    if not any(p == x for p in index.neighbors(x)):
        raise IndexInvariantError(f"no {SIGN[species]} particle at {x}")
    m = params.mutation_multiplier
    if m == 0.0:
        return 0.0
    kappa, tau = params.mutation_potentials(species)
    e = 0.0
    if not kappa.is_zero:
        e += relative_energy(kappa, x, domain=state.domain, index=index, exclude_self=True)
    if not tau.is_zero:
        e += relative_energy(tau, x, domain=state.domain, index=state.indices[1 - species])
    return m * math.exp(-e)


def _uniform_position(rng: UniformStream, domain: Domain) -> tuple:
    out = []
    for L in domain.side_lengths:
        v = rng.next() * L
        if v >= L:
            v = 0.0
        out.append(v)
    return tuple(out)


def step(state: SimState, params: PotentialSet, rate: float | None = None) -> EventRecord:
    """Advance ``state`` in place by one proposal and return its record."""
    if rate is None:
        rate = total_bound_rate(state, params)
    if not rate > 0:
        raise ValueError("total bound rate is zero")
    rng = state.rng
    state.time += -math.log1p(-rng.next()) / rate
    return _apply_proposal(state, params, rate)


def _apply_proposal(state: SimState, params: PotentialSet, rate: float) -> EventRecord:
    rng = state.rng
    plus, minus = state.indices
    n_plus, n_minus = len(plus), len(minus)
    n = n_plus + n_minus
    m = params.mutation_multiplier
    u = rng.next() * rate

    if u < n or (m > 0 and u < n + m * n):
        # a particle channel: death if u < n, else mutation proposal
        is_death = u < n
        k = int(u) if is_death else int((u - n) / m)
        k = min(k, n - 1)
        species, slot = (PLUS, k) if k < n_plus else (MINUS, k - n_plus)
        index = state.indices[species]
        x = index.points[slot]
        if is_death:
            index.remove(slot)
            kind = _DEATH[species]
            state.counters[kind] += 1
            return EventRecord(state.time, kind, x, state.counts)
        kind = _MUTATION[species]
        acc = mutation_acceptance((species, x), state, params) / m
        if acc < 1.0 and rng.next() >= acc:
            state.counters[f"rejected {kind}"] += 1
            return EventRecord(state.time, REJECTED, x, state.counts, kind)
        index.remove(slot)
        state.indices[1 - species].insert(x)
        state.counters[kind] += 1
        return EventRecord(state.time, kind, x, state.counts)

    # birth proposal
    u -= n + m * n
    species = PLUS if u < params.z_plus * state.domain.volume else MINUS
    x = _uniform_position(rng, state.domain)
    kind = _BIRTH[species]
    acc = birth_acceptance(x, species, state, params)
    if acc < 1.0 and rng.next() >= acc:
        state.counters[f"rejected {kind}"] += 1
        return EventRecord(state.time, REJECTED, x, state.counts, kind)
    state.indices[species].insert(x)
    state.counters[kind] += 1
    return EventRecord(state.time, kind, x, state.counts)


@dataclass(frozen=True)
class Snapshot:
    time: float
    plus: np.ndarray
    minus: np.ndarray

    @property
    def counts(self) -> tuple:
        return len(self.plus), len(self.minus)


@dataclass
class Trajectory:
    snapshots: list
    events: list | None
    counters: dict
    final_time: float
    n_proposals: int
    domain: Domain


def _snapshot(state: SimState, t: float) -> Snapshot:
    d = state.domain.dimension
    return Snapshot(
        float(t),
        np.asarray(state.indices[PLUS].points, dtype=float).reshape(-1, d),
        np.asarray(state.indices[MINUS].points, dtype=float).reshape(-1, d),
    )


def run(
    initial: TwoTypeConfiguration,
    params: PotentialSet,
    t_end: float,
    snapshot_times=None,
    seed=0,
    log_events: bool = True,
) -> Trajectory:
    """Simulate on ``[0, t_end]``.

    A snapshot at time ``s`` holds the configuration after the last event
    at or before ``s``.  The result is a deterministic function of
    ``(initial, params, t_end, snapshot_times, seed)``.
    """
    if snapshot_times is None:
        snapshot_times = [t_end]
    snapshot_times = [float(s) for s in snapshot_times]
    if any(b < a for a, b in zip(snapshot_times, snapshot_times[1:])):
        raise ValueError("snapshot times must be sorted")
    if snapshot_times and (snapshot_times[0] < 0 or snapshot_times[-1] > t_end):
        raise ValueError("snapshot times must lie in [0, t_end]")

    state = SimState.from_configuration(initial, params, seed)
    events = [] if log_events else None
    snaps = []
    next_snap = 0
    n_snap = len(snapshot_times)
    proposals = 0
    rng = state.rng
    while True:
        rate = total_bound_rate(state, params)
        t_next = state.time - math.log1p(-rng.next()) / rate if rate > 0 else math.inf
        while next_snap < n_snap and snapshot_times[next_snap] < t_next:
            snaps.append(_snapshot(state, snapshot_times[next_snap]))
            next_snap += 1
        if t_next > t_end:
            break
        state.time = t_next
        rec = _apply_proposal(state, params, rate)
        proposals += 1
        if events is not None:
            events.append(rec)
    return Trajectory(snaps, events, dict(state.counters), float(t_end), proposals, state.domain)


def proposal_probabilities(state: SimState, params: PotentialSet) -> dict:
    """Probability that the next proposal goes to each channel (bound proportions)."""
    rate = total_bound_rate(state, params)
    n_plus, n_minus = state.counts
    m = params.mutation_multiplier
    vol = state.domain.volume
    return {
        DEATH_PLUS: n_plus / rate,
        DEATH_MINUS: n_minus / rate,
        MUTATION_PM: m * n_plus / rate,
        MUTATION_MP: m * n_minus / rate,
        BIRTH_PLUS: params.z_plus * vol / rate,
        BIRTH_MINUS: params.z_minus * vol / rate,
    }
