"""Parameter-regime constants for the Ruelle-space construction.

With the weight function fixed to 1 on the torus, every supremum over ``x``
in the admissibility conditions is attained at every ``x``, so each
condition reduces to one number.  The first condition (integrability via an
auxiliary function ``h``) holds automatically for the compactly supported
potential menu and is reported as such.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

from .geometry import PotentialSet, PotentialSpec, mayer_integral, potential_mass

FOKKER_PLANCK = "fokker_planck"
VLASOV = "vlasov"
THRESHOLDS = (2.0, 2.0, 1.0, 1.0)


class RegimeError(ValueError):
    """No convergence guarantee is available for these parameters."""


@dataclass(frozen=True)
class RuelleWeight:
    alpha_plus: float = 0.0
    alpha_minus: float = 0.0

    def __post_init__(self):
        for v in (self.alpha_plus, self.alpha_minus):
            if not math.isfinite(v):
                raise ValueError("alpha must be finite")


@lru_cache(maxsize=4096)
def c_constant(g: PotentialSpec, alpha: float, dim: int = 1) -> float:
    """``exp(e^alpha * integral of (1 - e^{-g}))``; always >= 1."""
    return math.exp(math.exp(alpha) * mayer_integral(g, dim))


@lru_cache(maxsize=4096)
def vlasov_constant(g: PotentialSpec, alpha: float, dim: int = 1) -> float:
    """``exp(e^alpha * integral of g)``, the mean-field analogue of ``c_constant``."""
    return math.exp(math.exp(alpha) * potential_mass(g, dim))


@dataclass(frozen=True)
class RegimeReport:
    regime: str
    lhs: tuple
    thresholds: tuple = THRESHOLDS
    alpha_plus: float = 0.0
    alpha_minus: float = 0.0
    condition_1: str = "automatic (compact support, unit weight on the torus)"

    @property
    def margins(self) -> tuple:
        return tuple(t - v for v, t in zip(self.lhs, self.thresholds))

    @property
    def holds(self) -> tuple:
        return tuple(m > 0 for m in self.margins)

    @property
    def passed(self) -> bool:
        return all(self.holds)

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    @property
    def a_alpha(self) -> float:
        s1, s2, s3, s4 = self.lhs
        return max(s1 - 1.0, s2 - 1.0, s3, s4)

    @property
    def lambda_0(self) -> float:
        return 1.0 - self.a_alpha

    def to_records(self) -> list:
        """``key=value`` lines; floats use ``repr`` so they round-trip."""
        recs = [
            f"regime={self.regime}",
            f"alpha_plus={self.alpha_plus!r}",
            f"alpha_minus={self.alpha_minus!r}",
        ]
        for i, (v, t, m) in enumerate(zip(self.lhs, self.thresholds, self.margins), 1):
            recs += [f"lhs_{i}={v!r}", f"threshold_{i}={t!r}", f"margin_{i}={m!r}"]
        recs += [
            f"a_alpha={self.a_alpha!r}",
            f"lambda_0={self.lambda_0!r}",
            f"verdict={self.verdict}",
        ]
        return recs

    @classmethod
    def from_records(cls, lines) -> "RegimeReport":
        kv = dict(line.split("=", 1) for line in lines if "=" in line)
        return cls(
            regime=kv["regime"],
            lhs=tuple(float(kv[f"lhs_{i}"]) for i in range(1, 5)),
            thresholds=tuple(float(kv[f"threshold_{i}"]) for i in range(1, 5)),
            alpha_plus=float(kv["alpha_plus"]),
            alpha_minus=float(kv["alpha_minus"]),
        )

    def to_text(self) -> str:
        names = (
            "birth/mutation balance (+)",
            "birth/mutation balance (-)",
            "mutation (+ -> -)",
            "mutation (- -> +)",
        )
        lines = [
            f"regime: {self.regime}",
            f"alpha: ({self.alpha_plus!r}, {self.alpha_minus!r})",
            f"condition 1: {self.condition_1}",
        ]
        for name, v, t, ok in zip(names, self.lhs, self.thresholds, self.holds):
            lines.append(f"  {name:28s} {v:.12g} < {t:g}  {'ok' if ok else 'VIOLATED'}")
        lines.append(f"a(alpha) = {self.a_alpha:.12g}")
        lines.append(f"lambda_0 = {self.lambda_0:.12g}")
        lines.append(f"verdict: {self.verdict}")
        return "\n".join(lines) + "\n"


def _lhs(pset: PotentialSet, w: RuelleWeight, const, dim: int) -> tuple:
    ap, am = w.alpha_plus, w.alpha_minus
    C = lambda g, a: const(g, a, dim)  # noqa: E731
    kp = C(pset.kappa_plus, ap) * C(pset.tau_plus, am)
    km = C(pset.kappa_minus, am) * C(pset.tau_minus, ap)
    s1 = math.exp(-ap) * C(pset.phi_plus, ap) * C(pset.psi_plus, am) + km
    s2 = math.exp(-am) * C(pset.phi_minus, am) * C(pset.psi_minus, ap) + kp
    s3 = kp * math.exp(am - ap)
    s4 = km * math.exp(ap - am)
    return (s1, s2, s3, s4)


def check_fokker_planck_conditions(pset: PotentialSet, w: RuelleWeight, dim: int = 1) -> RegimeReport:
    return RegimeReport(FOKKER_PLANCK, _lhs(pset, w, c_constant, dim),
                        alpha_plus=w.alpha_plus, alpha_minus=w.alpha_minus)


def check_vlasov_conditions(pset: PotentialSet, w: RuelleWeight, dim: int = 1) -> RegimeReport:
    return RegimeReport(VLASOV, _lhs(pset, w, vlasov_constant, dim),
                        alpha_plus=w.alpha_plus, alpha_minus=w.alpha_minus)


def contraction_constant(pset: PotentialSet, w: RuelleWeight, dim: int = 1) -> float:
    """Largest of the four condition left-hand sides, the first two minus 1.

    Returned even when it is >= 1 (no admissible contraction).
    """
    return check_fokker_planck_conditions(pset, w, dim).a_alpha


def rate_from_contraction(a: float) -> float:
    if not a < 1.0:
        raise RegimeError(f"contraction constant {a!r} >= 1: no ergodicity guarantee")
    return 1.0 - a


def ergodicity_rate(pset: PotentialSet, w: RuelleWeight, dim: int = 1) -> float:
    """Guaranteed exponential rate ``1 - a(alpha)`` for the correlation functions."""
    return rate_from_contraction(contraction_constant(pset, w, dim))


@dataclass
class WitnessSearch:
    """Outcome of a grid scan for parameters satisfying all four conditions."""

    regime: str
    evaluated: int = 0
    witness: tuple | None = None  # (pset, weight, report)
    best: tuple | None = None  # least-violating (pset, weight, report)
    best_violation: float = math.inf
    min_product_34: float = math.inf

    @property
    def found(self) -> bool:
        return self.witness is not None


def search_pass_witness(
    regime: str = FOKKER_PLANCK,
    dim: int = 1,
    alphas=tuple(x / 2 for x in range(-4, 5)),
    heights=(0.0, 0.1, 0.5, 1.0, 2.0),
    ranges=(0.1, 0.5),
    z=(1.0, 1.0),
) -> WitnessSearch:
    """Grid scan over ``alpha`` and square-well mutation/birth potentials.

    The birth potentials and the mutation potentials each get one shared
    square well per scan point (same-type and cross-type channels vary
    independently).  The least-violating point is kept even when nothing
    passes; ``min_product_34`` records the smallest product of the third
    and fourth left-hand sides seen.
    """
    check = check_fokker_planck_conditions if regime == FOKKER_PLANCK else check_vlasov_conditions
    out = WitnessSearch(regime)
    wells = [PotentialSpec.zero()] + [
        PotentialSpec.square_well(h, r) for h in heights if h > 0 for r in ranges
    ]
    for ap, am in product(alphas, alphas):
        w = RuelleWeight(ap, am)
        for same, cross, kappa, tau in product(wells, wells, wells, wells):
            pset = PotentialSet(
                z_plus=z[0], z_minus=z[1],
                phi_plus=same, phi_minus=same, psi_plus=cross, psi_minus=cross,
                kappa_plus=kappa, kappa_minus=kappa, tau_plus=tau, tau_minus=tau,
            )
            rep = check(pset, w, dim)
            out.evaluated += 1
            out.min_product_34 = min(out.min_product_34, rep.lhs[2] * rep.lhs[3])
            violation = max(-m for m in rep.margins)
            if violation < out.best_violation:
                out.best_violation = violation
                out.best = (pset, w, rep)
            if rep.passed and out.witness is None:
                out.witness = (pset, w, rep)
    return out
