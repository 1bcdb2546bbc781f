"""Periodic domains, pair potentials, two-type configurations and a cell list.

Positions are tuples of floats of length ``dimension``.  All distances are
minimum-image distances on the torus.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate as _quad

Position = tuple  # tuple[float, ...]


class DomainError(ValueError):
    """Position or geometry outside the admissible domain."""


class IndexInvariantError(RuntimeError):
    """A cell index no longer matches the configuration it tracks."""


@dataclass(frozen=True)
class Domain:
    dimension: int
    side_lengths: tuple

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise DomainError(f"dimension must be 1 or 2, got {self.dimension}")
        sides = tuple(float(s) for s in self.side_lengths)
        if len(sides) != self.dimension:
            raise DomainError(
                f"expected {self.dimension} side lengths, got {len(sides)}"
            )
        if any(not (s > 0 and math.isfinite(s)) for s in sides):
            raise DomainError(f"side lengths must be positive, got {sides}")
        object.__setattr__(self, "side_lengths", sides)

    @classmethod
    def box(cls, *sides: float) -> "Domain":
        return cls(len(sides), tuple(sides))

    @property
    def volume(self) -> float:
        return math.prod(self.side_lengths)

    @property
    def half_min_side(self) -> float:
        return 0.5 * min(self.side_lengths)

    def contains(self, x: Sequence[float]) -> bool:
        return len(x) == self.dimension and all(
            0.0 <= xi < L for xi, L in zip(x, self.side_lengths)
        )

    def check(self, x: Sequence[float]) -> None:
        if not self.contains(x):
            raise DomainError(f"position {tuple(x)} outside box {self.side_lengths}")

    def wrap(self, x: Sequence[float]) -> Position:
        out = []
        for xi, L in zip(x, self.side_lengths):
            v = xi % L
            if v >= L:  # -tiny % L rounds to L
                v = 0.0
            out.append(v)
        return tuple(out)


def _wrap_component(d: float, L: float) -> float:
    v = (d + 0.5 * L) % L - 0.5 * L
    if v >= 0.5 * L:
        v -= L
    return v


def min_image_displacement(x, y, domain: Domain) -> Position:
    """Shortest periodic displacement from ``x`` to ``y``.

    Each component lies in ``[-L/2, L/2)``.
    """
    domain.check(x)
    domain.check(y)
    return tuple(
        _wrap_component(yi - xi, L) for xi, yi, L in zip(x, y, domain.side_lengths)
    )


def min_image_distance(x, y, domain: Domain) -> float:
    return math.sqrt(sum(d * d for d in min_image_displacement(x, y, domain)))


def pairwise_min_image(a: np.ndarray, b: np.ndarray, domain: Domain) -> np.ndarray:
    """Matrix of minimum-image distances between rows of ``a`` and ``b``."""
    a = np.asarray(a, dtype=float).reshape(-1, domain.dimension)
    b = np.asarray(b, dtype=float).reshape(-1, domain.dimension)
    L = np.asarray(domain.side_lengths)
    d = b[None, :, :] - a[:, None, :]
    d = (d + 0.5 * L) % L - 0.5 * L
    return np.sqrt(np.sum(d * d, axis=-1))


# ---------------------------------------------------------------------------
# potentials

POTENTIAL_KINDS = ("zero", "square_well", "gaussian", "exponential")


@dataclass(frozen=True)
class PotentialSpec:
    """Radial, non-negative, finitely supported pair potential.

    ``amplitude`` is the height of the well or the value at ``r = 0``;
    ``length`` is the well range, the Gaussian sigma or the exponential
    decay length.  A Gaussian is ``a * exp(-r**2 / (2 sigma**2))`` and an
    exponential is ``a * exp(-r / scale)``, both set to zero beyond ``cutoff``.
    """

    kind: str = "zero"
    amplitude: float = 0.0
    length: float = 0.0
    cutoff: float = 0.0

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        for name in ("amplitude", "length", "cutoff"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{self.kind}: {name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, v)
        if self.kind == "zero":
            object.__setattr__(self, "amplitude", 0.0)
            object.__setattr__(self, "length", 0.0)
            object.__setattr__(self, "cutoff", 0.0)
        elif self.kind == "square_well":
            object.__setattr__(self, "cutoff", self.length)
        elif self.length <= 0:
            raise ValueError(f"{self.kind}: length scale must be > 0")

    @classmethod
    def zero(cls) -> "PotentialSpec":
        return cls("zero")

    @classmethod
    def square_well(cls, height: float, range_: float) -> "PotentialSpec":
        return cls("square_well", height, range_, range_)

    @classmethod
    def gaussian(cls, amplitude: float, sigma: float, cutoff: float) -> "PotentialSpec":
        return cls("gaussian", amplitude, sigma, cutoff)

    @classmethod
    def exponential(cls, amplitude: float, scale: float, cutoff: float) -> "PotentialSpec":
        return cls("exponential", amplitude, scale, cutoff)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.amplitude == 0.0 or self.cutoff == 0.0

    def scaled(self, factor: float) -> "PotentialSpec":
        """Same shape and support with the amplitude multiplied by ``factor``."""
        if self.kind == "zero":
            return self
        return replace(self, amplitude=self.amplitude * factor)

    def __call__(self, r: float) -> float:
        return evaluate_potential(self, r)

    def value_sq(self, r2: float) -> float:
        """Potential at squared distance ``r2``; no argument checks (hot path)."""
        if r2 > self.cutoff * self.cutoff:
            return 0.0
        kind = self.kind
        if kind == "square_well":
            return self.amplitude
        if kind == "gaussian":
            return self.amplitude * math.exp(-r2 / (2.0 * self.length * self.length))
        if kind == "exponential":
            return self.amplitude * math.exp(-math.sqrt(r2) / self.length)
        return 0.0

    def radial_profile(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        if self.is_zero:
            return out
        inside = r <= self.cutoff
        if self.kind == "square_well":
            out[inside] = self.amplitude
        elif self.kind == "gaussian":
            out[inside] = self.amplitude * np.exp(-r[inside] ** 2 / (2 * self.length**2))
        else:
            out[inside] = self.amplitude * np.exp(-r[inside] / self.length)
        return out

    def __str__(self) -> str:
        if self.kind == "zero":
            return "zero"
        if self.kind == "square_well":
            return f"square_well({self.amplitude!r}, {self.length!r})"
        return f"{self.kind}({self.amplitude!r}, {self.length!r}, {self.cutoff!r})"

    @classmethod
    def parse(cls, text: str) -> "PotentialSpec":
        """Inverse of ``str``: ``zero``, ``square_well(h, R)``, ``gaussian(a, s, c)``..."""
        t = text.strip()
        if t in ("zero", "zero()"):
            return cls.zero()
        m = re.fullmatch(r"(\w+)\s*\((.*)\)", t)
        if not m:
            raise ValueError(f"cannot parse potential {text!r}")
        name, args = m.group(1), [a.strip() for a in m.group(2).split(",") if a.strip()]
        arity = {"square_well": 2, "gaussian": 3, "exponential": 3}
        if name not in arity:
            raise ValueError(f"unknown potential kind {name!r}")
        if len(args) != arity[name]:
            raise ValueError(f"{name} takes {arity[name]} arguments, got {len(args)}")
        try:
            vals = [float(a) for a in args]
        except ValueError:
            raise ValueError(f"non-numeric argument in {text!r}") from None
        return getattr(cls, name)(*vals)


def evaluate_potential(g: PotentialSpec, r: float) -> float:
    if r < 0 or math.isnan(r):
        raise ValueError(f"distance must be >= 0, got {r}")
    return g.value_sq(r * r)


def _sphere_factor(dim: int):
    # surface measure of the unit sphere: 2 points in 1D, circumference in 2D
    return (lambda r: 2.0) if dim == 1 else (lambda r: 2.0 * math.pi * r)


def potential_mass(g: PotentialSpec, dim: int) -> float:
    """Closed-form integral of ``g`` over R^dim."""
    if g.is_zero:
        return 0.0
    a, s, c = g.amplitude, g.length, g.cutoff
    if g.kind == "square_well":
        return a * (2 * c if dim == 1 else math.pi * c * c)
    if g.kind == "gaussian":
        if dim == 1:
            return a * s * math.sqrt(2 * math.pi) * math.erf(c / (s * math.sqrt(2)))
        return 2 * math.pi * a * s * s * (1 - math.exp(-c * c / (2 * s * s)))
    if dim == 1:
        return 2 * a * s * (1 - math.exp(-c / s))
    return 2 * math.pi * a * s * s * (1 - math.exp(-c / s) * (1 + c / s))


def mayer_integral(g: PotentialSpec, dim: int, rtol: float = 1e-10) -> float:
    """Integral of ``1 - exp(-g)`` over R^dim.

    Square wells use the closed form; smooth shapes use adaptive quadrature
    on ``[0, cutoff]`` where the integrand is smooth.
    """
    if g.is_zero:
        return 0.0
    if g.kind == "square_well":
        vol = 2 * g.cutoff if dim == 1 else math.pi * g.cutoff**2
        return vol * (-math.expm1(-g.amplitude))
    jac = _sphere_factor(dim)
    val, err = _quad.quad(
        lambda r: -math.expm1(-g.value_sq(r * r)) * jac(r),
        0.0,
        g.cutoff,
        epsabs=0.0,
        epsrel=rtol,
        limit=200,
    )
    if not math.isfinite(val) or err > max(rtol * abs(val), 1e-300) * 10:
        raise ArithmeticError(f"radial quadrature did not converge for {g}: err={err}")
    return val


# ---------------------------------------------------------------------------
# potential sets

POTENTIAL_NAMES = (
    "phi_plus",
    "phi_minus",
    "psi_plus",
    "psi_minus",
    "kappa_plus",
    "kappa_minus",
    "tau_plus",
    "tau_minus",
)


@dataclass(frozen=True)
class PotentialSet:
    """The eight pair potentials, the activities and the mutation multiplier.

    For species ``s``: ``phi_s`` acts between a newborn ``s`` particle and
    existing particles of species ``s``, ``psi_s`` against the other species;
    ``kappa_s``/``tau_s`` play the same roles for the mutation rate of an
    ``s`` particle.
    """

    z_plus: float = 1.0
    z_minus: float = 1.0
    phi_plus: PotentialSpec = field(default_factory=PotentialSpec.zero)
    phi_minus: PotentialSpec = field(default_factory=PotentialSpec.zero)
    psi_plus: PotentialSpec = field(default_factory=PotentialSpec.zero)
    psi_minus: PotentialSpec = field(default_factory=PotentialSpec.zero)
    kappa_plus: PotentialSpec = field(default_factory=PotentialSpec.zero)
    kappa_minus: PotentialSpec = field(default_factory=PotentialSpec.zero)
    tau_plus: PotentialSpec = field(default_factory=PotentialSpec.zero)
    tau_minus: PotentialSpec = field(default_factory=PotentialSpec.zero)
    mutation_multiplier: float = 1.0

    def __post_init__(self):
        for name in ("z_plus", "z_minus"):
            v = float(getattr(self, name))
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be > 0, got {v}")
            object.__setattr__(self, name, v)
        m = float(self.mutation_multiplier)
        if not (m >= 0 and math.isfinite(m)):
            raise ValueError(f"mutation_multiplier must be >= 0, got {m}")
        object.__setattr__(self, "mutation_multiplier", m)

    def potentials(self) -> dict:
        return {name: getattr(self, name) for name in POTENTIAL_NAMES}

    @property
    def max_cutoff(self) -> float:
        return max(g.cutoff for g in self.potentials().values())

    def activity(self, species: int) -> float:
        return self.z_plus if species == 0 else self.z_minus

    def birth_potentials(self, species: int):
        """(same-species, cross-species) potentials for a birth of ``species``."""
        if species == 0:
            return self.phi_plus, self.psi_plus
        return self.phi_minus, self.psi_minus

    def mutation_potentials(self, species: int):
        if species == 0:
            return self.kappa_plus, self.tau_plus
        return self.kappa_minus, self.tau_minus

    @classmethod
    def free(cls, z_plus=1.0, z_minus=1.0, mutation_multiplier=1.0) -> "PotentialSet":
        return cls(z_plus=z_plus, z_minus=z_minus, mutation_multiplier=mutation_multiplier)

    def with_all(self, g: PotentialSpec) -> "PotentialSet":
        return replace(self, **{name: g for name in POTENTIAL_NAMES})


def check_compatible(domain: Domain, pset: PotentialSet) -> None:
    """Minimum-image correctness needs every cutoff <= half the smallest side."""
    for name, g in pset.potentials().items():
        if g.cutoff > domain.half_min_side:
            raise DomainError(
                f"{name} cutoff {g.cutoff!r} exceeds half the smallest side "
                f"{domain.half_min_side!r}"
            )


# ---------------------------------------------------------------------------
# configurations

@dataclass(frozen=True)
class TwoTypeConfiguration:
    domain: Domain
    plus_points: tuple = ()
    minus_points: tuple = ()

    def __post_init__(self):
        plus = tuple(tuple(float(c) for c in p) for p in self.plus_points)
        minus = tuple(tuple(float(c) for c in p) for p in self.minus_points)
        seen = set()
        for p in plus + minus:
            self.domain.check(p)
            if p in seen:
                raise DomainError(f"duplicate coordinates {p}")
            seen.add(p)
        object.__setattr__(self, "plus_points", plus)
        object.__setattr__(self, "minus_points", minus)

    def species(self, s: int) -> tuple:
        return self.plus_points if s == 0 else self.minus_points

    @property
    def counts(self) -> tuple:
        return len(self.plus_points), len(self.minus_points)

    def __len__(self) -> int:
        return len(self.plus_points) + len(self.minus_points)

    @classmethod
    def poisson(cls, domain: Domain, rho_plus: float, rho_minus: float, rng) -> "TwoTypeConfiguration":
        """Independent Poisson samples of the two species."""
        pts = []
        for rho in (rho_plus, rho_minus):
            n = rng.poisson(rho * domain.volume)
            u = rng.random((n, domain.dimension)) * np.asarray(domain.side_lengths)
            pts.append(tuple(domain.wrap(tuple(row)) for row in u.tolist()))
        return cls(domain, pts[0], pts[1])


# ---------------------------------------------------------------------------
# cell list

class CellIndex:
    """Cell list over one species' points with O(1) insert and swap-remove.

    ``points[slot]`` holds the position stored in ``slot``; removing a slot
    moves the last point into it.  Cells have side >= ``cell_size`` so a
    query over the 3^d neighbouring cells finds every pair within
    ``cell_size``.
    """

    def __init__(self, domain: Domain, cell_size: float, points: Iterable = ()):
        self.domain = domain
        self.cell_size = float(cell_size)
        if self.cell_size > 0:
            self.shape = tuple(max(1, int(L // self.cell_size)) for L in domain.side_lengths)
        else:
            self.shape = (1,) * domain.dimension
        self._width = tuple(L / n for L, n in zip(domain.side_lengths, self.shape))
        ncells = math.prod(self.shape)
        self.cells = [[] for _ in range(ncells)]
        self.points = []
        self.cell_of = []
        self._neighbors = [self._neighbor_cells(c) for c in range(ncells)]
        for p in points:
            self.insert(p)

    def _coords(self, cell: int) -> tuple:
        if len(self.shape) == 1:
            return (cell,)
        return divmod(cell, self.shape[1])

    def _flat(self, coords) -> int:
        if len(self.shape) == 1:
            return coords[0]
        return coords[0] * self.shape[1] + coords[1]

    def _neighbor_cells(self, cell: int) -> tuple:
        base = self._coords(cell)
        out = set()
        for off in product((-1, 0, 1), repeat=len(self.shape)):
            out.add(self._flat(tuple((b + o) % n for b, o, n in zip(base, off, self.shape))))
        return tuple(sorted(out))

    def cell_for(self, x) -> int:
        if len(self.shape) == 1:
            return min(int(x[0] / self._width[0]), self.shape[0] - 1)
        i = min(int(x[0] / self._width[0]), self.shape[0] - 1)
        j = min(int(x[1] / self._width[1]), self.shape[1] - 1)
        return i * self.shape[1] + j

    def __len__(self) -> int:
        return len(self.points)

    def insert(self, x) -> int:
        x = tuple(x)
        cell = self.cell_for(x)
        slot = len(self.points)
        self.points.append(x)
        self.cell_of.append(cell)
        self.cells[cell].append(slot)
        return slot

    def remove(self, slot: int):
        """Remove the point in ``slot`` and return its position."""
        if not 0 <= slot < len(self.points):
            raise IndexInvariantError(f"no particle in slot {slot}")
        x = self.points[slot]
        members = self.cells[self.cell_of[slot]]
        members.remove(slot)
        last = len(self.points) - 1
        if slot != last:
            moved_cell = self.cell_of[last]
            lst = self.cells[moved_cell]
            lst[lst.index(last)] = slot
            self.points[slot] = self.points[last]
            self.cell_of[slot] = moved_cell
        self.points.pop()
        self.cell_of.pop()
        return x

    def remove_point(self, x):
        x = tuple(x)
        for slot in self.cells[self.cell_for(x)]:
            if self.points[slot] == x:
                return self.remove(slot)
        raise IndexInvariantError(f"particle at {x} not in index")

    def neighbors(self, x):
        """Positions in the cells adjacent to ``x`` (superset of the cutoff ball)."""
        pts = self.points
        for c in self._neighbors[self.cell_for(x)]:
            for slot in self.cells[c]:
                yield pts[slot]

    def snapshot(self) -> dict:
        """Cell -> sorted positions; used to compare indices."""
        return {
            c: sorted(self.points[s] for s in members)
            for c, members in enumerate(self.cells)
            if members
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, CellIndex):
            return NotImplemented
        return (
            self.domain == other.domain
            and self.shape == other.shape
            and self.snapshot() == other.snapshot()
        )

    def validate(self, points=None) -> None:
        """Raise if the internal maps disagree (or disagree with ``points``)."""
        if sum(len(c) for c in self.cells) != len(self.points):
            raise IndexInvariantError("cell occupancy does not sum to particle count")
        for slot, x in enumerate(self.points):
            if self.cell_of[slot] != self.cell_for(x) or slot not in self.cells[self.cell_of[slot]]:
                raise IndexInvariantError(f"slot {slot} filed under the wrong cell")
        if points is not None and sorted(map(tuple, points)) != sorted(self.points):
            raise IndexInvariantError("index contents differ from the configuration")


def rebuild_or_update_index(index: CellIndex, event: str, position=None, slot=None) -> CellIndex:
    """Apply one ``birth``/``death``/``move`` event to ``index`` in place."""
    if event == "birth":
        index.domain.check(position)
        index.insert(position)
    elif event == "death":
        if slot is not None:
            index.remove(slot)
        else:
            index.remove_point(position)
    elif event == "rebuild":
        pts = list(index.points)
        index.__init__(index.domain, index.cell_size, pts)
    else:
        raise ValueError(f"unknown index event {event!r}")
    return index


def relative_energy(
    g: PotentialSpec,
    x,
    points=(),
    domain: Domain | None = None,
    index: CellIndex | None = None,
    exclude_self: bool = False,
) -> float:
    """Sum of ``g`` over minimum-image distances from ``x`` to ``points``.

    With ``index`` the neighbouring cells are visited instead of ``points``.
    ``exclude_self`` skips the point located exactly at ``x`` (used for the
    ``gamma minus x`` energies of mutation rates).
    """
    if domain is None:
        if index is None:
            raise ValueError("need a domain or an index")
        domain = index.domain
    domain.check(x)
    if g.is_zero:
        return 0.0
    if index is not None:
        if index.domain != domain:
            raise IndexInvariantError("index built on a different domain")
        if index.cell_size < g.cutoff and math.prod(index.shape) > 1:
            raise IndexInvariantError(
                f"cell size {index.cell_size} smaller than cutoff {g.cutoff}"
            )
        candidates = index.neighbors(x)
    else:
        candidates = points
    x = tuple(x)
    return _energy_sum(g, x, candidates, domain.side_lengths, exclude_self)


def _energy_sum(g, x, candidates, sides, exclude_self):
    total = 0.0
    cut2 = g.cutoff * g.cutoff
    if len(sides) == 1:
        L = sides[0]
        h = 0.5 * L
        x0 = x[0]
        for y in candidates:
            d = y[0] - x0
            if d >= h:
                d -= L
            elif d < -h:
                d += L
            r2 = d * d
            if r2 <= cut2:
                if exclude_self and y == x:
                    continue
                total += g.value_sq(r2)
        return total
    Lx, Ly = sides
    hx, hy = 0.5 * Lx, 0.5 * Ly
    x0, x1 = x
    for y in candidates:
        dx = y[0] - x0
        if dx >= hx:
            dx -= Lx
        elif dx < -hx:
            dx += Lx
        dy = y[1] - x1
        if dy >= hy:
            dy -= Ly
        elif dy < -hy:
            dy += Ly
        r2 = dx * dx + dy * dy
        if r2 <= cut2:
            if exclude_self and y == x:
                continue
            total += g.value_sq(r2)
    return total
