"""Mean-field kinetic equations for the two densities.

For species ``s`` with partner ``o``::

    d rho_s/dt = -(1 + m e^{-kappa_s*rho_s - tau_s*rho_o}) rho_s
                 + z_s e^{-phi_s*rho_s - psi_s*rho_o}
                 + m e^{-kappa_o*rho_o - tau_o*rho_s} rho_o

where ``g*rho`` is a convolution (spatially resolved form) or ``<g> rho``
with ``<g>`` the potential's integral (homogeneous form).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Domain, PotentialSet, potential_mass, POTENTIAL_NAMES

NEGATIVITY_CLAMP = 1e-12
MIN_STEP = 1e-12


class IntegrationError(RuntimeError):
    """Density went negative beyond round-off."""


class StiffnessError(IntegrationError):
    """Step size underflow."""


class ConvergenceError(RuntimeError):
    """Fixed-point iteration did not reach the tolerance."""


@dataclass(frozen=True)
class KineticParams:
    """Potential masses (homogeneous form) and optionally grid kernels."""

    masses: dict
    z_plus: float
    z_minus: float
    mutation_multiplier: float = 1.0
    kernels: "GridKernels | None" = None

    @classmethod
    def from_potentials(cls, pset: PotentialSet, dim: int = 1, grid: "Grid | None" = None) -> "KineticParams":
        masses = {name: potential_mass(g, dim) for name, g in pset.potentials().items()}
        kernels = GridKernels.build(pset, grid) if grid is not None else None
        return cls(masses, pset.z_plus, pset.z_minus, pset.mutation_multiplier, kernels)

    def __post_init__(self):
        if any(v < 0 for v in self.masses.values()):
            raise ValueError("potential masses must be >= 0")


def rhs_homogeneous(rho_plus: float, rho_minus: float, p: KineticParams) -> tuple:
    if rho_plus < 0 or rho_minus < 0:
        raise ValueError(f"densities must be >= 0, got ({rho_plus}, {rho_minus})")
    return tuple(_rhs_hom(np.array([rho_plus, rho_minus]), p))


def _rhs_hom(rho: np.ndarray, p: KineticParams) -> np.ndarray:
    g = p.masses
    rp, rm = rho[0], rho[1]
    m = p.mutation_multiplier
    mut_p = m * math.exp(-g["kappa_plus"] * rp - g["tau_plus"] * rm)
    mut_m = m * math.exp(-g["kappa_minus"] * rm - g["tau_minus"] * rp)
    birth_p = p.z_plus * math.exp(-g["phi_plus"] * rp - g["psi_plus"] * rm)
    birth_m = p.z_minus * math.exp(-g["phi_minus"] * rm - g["psi_minus"] * rp)
    return np.array([
        -(1 + mut_p) * rp + birth_p + mut_m * rm,
        -(1 + mut_m) * rm + birth_m + mut_p * rp,
    ])


def _fixed_point_map(rho: np.ndarray, p: KineticParams) -> np.ndarray:
    g = p.masses
    rp, rm = rho
    m = p.mutation_multiplier
    mut_p = m * math.exp(-g["kappa_plus"] * rp - g["tau_plus"] * rm)
    mut_m = m * math.exp(-g["kappa_minus"] * rm - g["tau_minus"] * rp)
    birth_p = p.z_plus * math.exp(-g["phi_plus"] * rp - g["psi_plus"] * rm)
    birth_m = p.z_minus * math.exp(-g["phi_minus"] * rm - g["psi_minus"] * rp)
    return np.array([(birth_p + mut_m * rm) / (1 + mut_p), (birth_m + mut_p * rp) / (1 + mut_m)])


# ---------------------------------------------------------------------------
# periodic grids

@dataclass(frozen=True)
class Grid:
    domain: Domain
    cells: tuple

    def __post_init__(self):
        cells = tuple(int(c) for c in self.cells)
        if len(cells) != self.domain.dimension or min(cells) < 1:
            raise ValueError("need a positive cell count per axis")
        object.__setattr__(self, "cells", cells)

    @property
    def cell_volume(self) -> float:
        return self.domain.volume / math.prod(self.cells)

    def offsets(self) -> np.ndarray:
        """Minimum-image distance of every cell offset from cell 0."""
        comps = []
        for n, L in zip(self.cells, self.domain.side_lengths):
            h = L / n
            k = np.arange(n)
            k = np.where(k > n // 2, k - n, k)
            comps.append(np.abs(k) * h)
        mesh = np.meshgrid(*comps, indexing="ij")
        return np.sqrt(sum(c**2 for c in mesh))


@dataclass(frozen=True)
class GridKernels:
    """Sampled kernels, rescaled so sum * cell volume equals the exact mass."""

    grid: Grid
    kernels: dict
    spectra: dict = field(repr=False, default_factory=dict)

    @classmethod
    def build(cls, pset: PotentialSet, grid: Grid) -> "GridKernels":
        r = grid.offsets()
        dim = grid.domain.dimension
        kernels, spectra = {}, {}
        for name, g in pset.potentials().items():
            mass = potential_mass(g, dim)
            k = g.radial_profile(r)
            total = k.sum() * grid.cell_volume
            if mass > 0:
                if total <= 0:
                    raise ValueError(f"{name} support is narrower than one grid cell")
                k = k * (mass / total)
            kernels[name] = k
            spectra[name] = np.fft.rfftn(k)
        return cls(grid, kernels, spectra)

    def convolve(self, name: str, field_: np.ndarray) -> np.ndarray:
        if field_.shape != self.grid.cells:
            raise ValueError(f"field shape {field_.shape} does not match grid {self.grid.cells}")
        spec = self.spectra[name]
        if not np.any(spec):
            return np.zeros_like(field_)
        out = np.fft.irfftn(spec * np.fft.rfftn(field_), s=field_.shape, axes=tuple(range(field_.ndim)))
        return out * self.grid.cell_volume


def circular_convolution_direct(kernel: np.ndarray, field_: np.ndarray, cell_volume: float) -> np.ndarray:
    """Reference circular convolution by explicit summation."""
    out = np.zeros_like(field_, dtype=float)
    it = np.ndindex(*field_.shape)
    for j in it:
        if field_[j] != 0:
            out += field_[j] * np.roll(kernel, shift=j, axis=tuple(range(field_.ndim)))
    return out * cell_volume


def rhs_field(fields: np.ndarray, p: KineticParams) -> np.ndarray:
    """Right-hand side on a periodic grid; ``fields`` has shape ``(2, *cells)``."""
    K = p.kernels
    if K is None:
        raise ValueError("params carry no grid kernels")
    if fields.shape != (2,) + K.grid.cells:
        raise ValueError(f"fields shape {fields.shape} does not match grid {K.grid.cells}")
    rp, rm = fields[0], fields[1]
    c = {}
    for name in POTENTIAL_NAMES:
        src = rp if name in ("phi_plus", "kappa_plus", "psi_minus", "tau_minus") else rm
        c[name] = K.convolve(name, src)
    m = p.mutation_multiplier
    mut_p = m * np.exp(-c["kappa_plus"] - c["tau_plus"])
    mut_m = m * np.exp(-c["kappa_minus"] - c["tau_minus"])
    birth_p = p.z_plus * np.exp(-c["phi_plus"] - c["psi_plus"])
    birth_m = p.z_minus * np.exp(-c["phi_minus"] - c["psi_minus"])
    return np.stack([
        -(1 + mut_p) * rp + birth_p + mut_m * rm,
        -(1 + mut_m) * rm + birth_m + mut_p * rp,
    ])


# ---------------------------------------------------------------------------
# time integration

@dataclass(frozen=True)
class DensityState:
    """Homogeneous ``(2,)`` densities or ``(2, *cells)`` grid fields at ``time``."""

    values: np.ndarray
    time: float = 0.0

    @classmethod
    def homogeneous(cls, rho_plus: float, rho_minus: float, time: float = 0.0) -> "DensityState":
        return cls(np.array([float(rho_plus), float(rho_minus)]), time)

    @property
    def is_field(self) -> bool:
        return self.values.ndim > 1

    @property
    def rho_plus(self):
        return self.values[0]

    @property
    def rho_minus(self):
        return self.values[1]


@dataclass
class KineticTrajectory:
    times: np.ndarray
    values: np.ndarray  # shape (len(times), 2, ...)
    accepted: int = 0
    rejected: int = 0
    ceiling_violations: list = field(default_factory=list)

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(t)
        return self.values[i]

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def rk4_step(f, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _rhs_for(state: DensityState, p: KineticParams):
    if state.is_field:
        return lambda y: rhs_field(y, p)
    return lambda y: _rhs_hom(y, p)


def _clamp(y: np.ndarray, t: float) -> np.ndarray:
    lo = y.min()
    if lo < 0:
        if lo < -NEGATIVITY_CLAMP:
            raise IntegrationError(f"density {lo:.3e} < 0 at t={t:.6g}")
        y = np.maximum(y, 0.0)
    return y


def integrate(state0: DensityState, p: KineticParams, t_end: float, dt: float = 0.1,
              tol: float = 1e-8, output_times=None, adaptive: bool = True,
              ceiling: float | None = None) -> KineticTrajectory:
    """Classical RK4 with step-doubling error control.

    A step of size ``h`` is accepted when the difference between one full
    step and two half steps is below ``tol`` in every component; the
    two-half-step value is kept.  Steps are shortened to land exactly on
    each output time.  With ``adaptive=False`` fixed steps of ``dt`` are taken
    (used for order measurements).
    """
    if not dt > 0 or not tol > 0:
        raise ValueError("dt and tol must be positive")
    if np.any(state0.values < 0):
        raise ValueError("initial densities must be >= 0")
    t0 = state0.time
    if output_times is None:
        output_times = [t_end]
    outs = sorted(float(t) for t in output_times if t0 <= t <= t_end)
    f = _rhs_for(state0, p)
    y = np.array(state0.values, dtype=float)
    t = t0
    h = dt
    times, values = [], []
    traj = KineticTrajectory(np.array([]), np.array([]))
    if outs and outs[0] == t0:
        times.append(t0)
        values.append(y.copy())
        outs = outs[1:]
    for target in outs:
        while t < target:
            step = min(h, target - t)
            last = step == target - t
            if adaptive:
                full = rk4_step(f, y, step)
                half = rk4_step(f, rk4_step(f, y, 0.5 * step), 0.5 * step)
                err = float(np.max(np.abs(half - full)))
                if err >= tol:
                    traj.rejected += 1
                    h = step * max(0.2, 0.9 * (tol / err) ** 0.2)
                    if h < MIN_STEP:
                        raise StiffnessError(f"step size underflow at t={t:.6g}")
                    continue
                y_new = half
                grow = 4.0 if err == 0 else min(4.0, 0.9 * (tol / err) ** 0.2)
                if not last:
                    h = step * max(1.0, grow)
                else:
                    h = max(h, step * max(1.0, grow))
            else:
                y_new = rk4_step(f, y, step)
            t = target if last else t + step
            y = _clamp(y_new, t)
            traj.accepted += 1
            if ceiling is not None and y.max() > ceiling:
                traj.ceiling_violations.append((t, float(y.max())))
        times.append(t)
        values.append(y.copy())
    traj.times = np.array(times)
    traj.values = np.array(values)
    return traj


# ---------------------------------------------------------------------------
# stationary points and stability

@dataclass(frozen=True)
class StationaryResult:
    rho: np.ndarray
    iterations: int
    residual: float


def stationary(p: KineticParams, init=(0.0, 0.0), damping: float = 0.5,
               tol: float = 1e-12, max_iter: int = 100_000) -> StationaryResult:
    """Damped Picard iteration on the rearranged balance equations."""
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    rho = np.array(init, dtype=float)
    if np.any(rho < 0):
        raise ValueError("initial guess must be >= 0")
    for it in range(1, max_iter + 1):
        rho = (1 - damping) * rho + damping * _fixed_point_map(rho, p)
        res = float(np.max(np.abs(_rhs_hom(rho, p))))
        if res < tol:
            return StationaryResult(rho, it, res)
    raise ConvergenceError(f"no convergence in {max_iter} iterations (residual {res:.3e})")


@dataclass(frozen=True)
class StabilityReport:
    fixed_point: np.ndarray
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    classification: str
    fd_relative_error: float


def jacobian_analytic(rho, p: KineticParams) -> np.ndarray:
    g = p.masses
    rp, rm = rho
    m = p.mutation_multiplier
    A = m * math.exp(-g["kappa_plus"] * rp - g["tau_plus"] * rm)
    B = m * math.exp(-g["kappa_minus"] * rm - g["tau_minus"] * rp)
    Bp = p.z_plus * math.exp(-g["phi_plus"] * rp - g["psi_plus"] * rm)
    Bm = p.z_minus * math.exp(-g["phi_minus"] * rm - g["psi_minus"] * rp)
    dA = (-g["kappa_plus"] * A, -g["tau_plus"] * A)  # d/d(rp), d/d(rm)
    dB = (-g["tau_minus"] * B, -g["kappa_minus"] * B)
    dBp = (-g["phi_plus"] * Bp, -g["psi_plus"] * Bp)
    dBm = (-g["psi_minus"] * Bm, -g["phi_minus"] * Bm)
    J = np.empty((2, 2))
    # f+ = -(1 + A) rp + Bp + B rm
    J[0, 0] = -(1 + A) - dA[0] * rp + dBp[0] + dB[0] * rm
    J[0, 1] = -dA[1] * rp + dBp[1] + B + dB[1] * rm
    # f- = -(1 + B) rm + Bm + A rp
    J[1, 0] = -dB[0] * rm + dBm[0] + A + dA[0] * rp
    J[1, 1] = -(1 + B) - dB[1] * rm + dBm[1] + dA[1] * rp
    return J


def jacobian_fd(rho, p: KineticParams, step: float = 1e-6) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    J = np.empty((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        J[:, j] = (_rhs_hom(rho + e, p) - _rhs_hom(rho - e, p)) / (2 * step)
    return J


def jacobian_homogeneous(fixed_point, p: KineticParams, tol: float = 1e-8) -> StabilityReport:
    rho = np.asarray(fixed_point, dtype=float)
    res = float(np.max(np.abs(_rhs_hom(rho, p))))
    if res >= tol:
        raise ValueError(f"not a stationary point: residual {res:.3e}")
    J = jacobian_analytic(rho, p)
    fd = jacobian_fd(rho, p)
    scale = max(np.max(np.abs(J)), 1e-300)
    fd_err = float(np.max(np.abs(J - fd)) / scale)
    tr, det = J[0, 0] + J[1, 1], J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    disc = complex(tr * tr - 4 * det)
    sq = disc**0.5
    ev = np.array([(tr - sq) / 2, (tr + sq) / 2])
    if np.all(np.abs(ev.imag) == 0):
        ev = np.sort(ev.real)
    re = np.real(ev)
    if np.all(re < 0):
        cls = "stable"
    elif np.any(re > 0):
        cls = "unstable"
    else:
        cls = "marginal"
    return StabilityReport(rho, J, ev, cls, fd_err)
