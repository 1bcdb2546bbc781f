"""Run specifications in a flat ``section.key = value`` text format.

Example::

    # comments start with '#'
    experiment = simulate
    domain.sides = 10.0
    potentials.psi_plus = square_well(1.0, 0.5)
    activity.z_plus = 1.0
    activity.z_minus = 0.5
    schedule.t_end = 20
    schedule.snapshot_interval = 1.0

Unknown keys are rejected.  All errors found in one pass are reported
together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from .geometry import POTENTIAL_NAMES, Domain, DomainError, PotentialSet, PotentialSpec, check_compatible
from .regime import RuelleWeight

FORMAT_VERSION = 1
EXPERIMENTS = ("check", "simulate", "kinetics", "stationary", "mesoscopic")


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


@dataclass(frozen=True)
class RunSpec:
    experiment: str = "check"
    domain: Domain = field(default_factory=lambda: Domain.box(10.0))
    potentials: PotentialSet = field(default_factory=PotentialSet)
    weight: RuelleWeight = field(default_factory=RuelleWeight)
    t_end: float = 10.0
    snapshot_times: tuple = (10.0,)
    burn_in: float = 0.0
    replicas: int = 1
    seed: int = 0
    rho0_plus: float = 0.0
    rho0_minus: float = 0.0
    kinetics_dt: float = 0.1
    kinetics_tol: float = 1e-10
    kinetics_cells: int = 0
    stationary_damping: float = 0.5
    stationary_tol: float = 1e-12
    scales: tuple = (1, 2, 4, 8)
    bin_edges: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    parallel: int = 1
    format_version: int = FORMAT_VERSION


# key -> (field name or handler, parser)
_SCALAR_KEYS = {
    "experiment": ("experiment", str),
    "activity.z_plus": ("z_plus", float),
    "activity.z_minus": ("z_minus", float),
    "mutation.multiplier": ("mutation_multiplier", float),
    "weight.alpha_plus": ("alpha_plus", float),
    "weight.alpha_minus": ("alpha_minus", float),
    "domain.sides": ("sides", _floats),
    "schedule.t_end": ("t_end", float),
    "schedule.snapshot_times": ("snapshot_times", _floats),
    "schedule.snapshot_interval": ("snapshot_interval", float),
    "schedule.burn_in": ("burn_in", float),
    "schedule.replicas": ("replicas", int),
    "schedule.seed": ("seed", int),
    "initial.rho_plus": ("rho0_plus", float),
    "initial.rho_minus": ("rho0_minus", float),
    "kinetics.dt": ("kinetics_dt", float),
    "kinetics.tol": ("kinetics_tol", float),
    "kinetics.cells": ("kinetics_cells", int),
    "stationary.damping": ("stationary_damping", float),
    "stationary.tol": ("stationary_tol", float),
    "mesoscopic.scales": ("scales", _ints),
    "mesoscopic.bin_edges": ("bin_edges", _floats),
    "run.parallel": ("parallel", int),
    "output.format_version": ("format_version", int),
}
for _name in POTENTIAL_NAMES:
    _SCALAR_KEYS[f"potentials.{_name}"] = (_name, PotentialSpec.parse)


def parse_config(text: str) -> RunSpec:
    errors = []
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if "=" not in line:
            col = len(raw) - len(raw.lstrip()) + 1
            errors.append(f"line {lineno}, column {col}: syntax error: expected 'key = value'")
            continue
        key_part, value = line.split("=", 1)
        key = key_part.strip()
        col = raw.index("=") + 2
        if key not in _SCALAR_KEYS:
            errors.append(f"line {lineno}, column {raw.index(key) + 1}: unknown key {key!r}")
            continue
        name, conv = _SCALAR_KEYS[key]
        if name in values:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        try:
            values[name] = conv(value.strip())
        except ValueError as exc:
            errors.append(f"line {lineno}, column {col}: bad value for {key!r}: {exc}")
    if errors:
        raise ConfigError(errors)
    return _build(values)


def _build(v: dict) -> RunSpec:
    errors = []
    d = RunSpec()
    experiment = v.get("experiment", d.experiment)
    if experiment not in EXPERIMENTS:
        errors.append(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")

    domain = d.domain
    if "sides" in v:
        try:
            domain = Domain(len(v["sides"]), v["sides"])
        except DomainError as exc:
            errors.append(f"domain.sides: {exc}")

    pkw = {}
    for name in ("z_plus", "z_minus", "mutation_multiplier"):
        if name in v:
            pkw[name] = v[name]
    for name in POTENTIAL_NAMES:
        if name in v:
            pkw[name] = v[name]
    pset = d.potentials
    try:
        pset = PotentialSet(**pkw)
    except ValueError as exc:
        errors.append(str(exc))
    try:
        check_compatible(domain, pset)
    except DomainError as exc:
        errors.append(f"constraint: {exc}")

    t_end = v.get("t_end", d.t_end)
    if not (t_end >= 0 and math.isfinite(t_end)):
        errors.append(f"schedule.t_end must be >= 0, got {t_end}")
    if "snapshot_times" in v and "snapshot_interval" in v:
        errors.append("give schedule.snapshot_times or schedule.snapshot_interval, not both")
    if "snapshot_interval" in v:
        step = v["snapshot_interval"]
        if not step > 0:
            errors.append(f"schedule.snapshot_interval must be > 0, got {step}")
            snaps = (t_end,)
        else:
            k = int(math.floor(t_end / step + 1e-9))
            snaps = tuple(round(i * step, 12) for i in range(k + 1))
    else:
        snaps = v.get("snapshot_times", (t_end,))
    if any(b < a for a, b in zip(snaps, snaps[1:])):
        errors.append(f"schedule.snapshot_times must be sorted, got {snaps}")
    if snaps and (snaps[0] < 0 or snaps[-1] > t_end):
        errors.append(f"schedule.snapshot_times must lie in [0, {t_end}]")

    for name, lo in (("replicas", 1), ("parallel", 1), ("seed", 0), ("kinetics_cells", 0)):
        if name in v and v[name] < lo:
            errors.append(f"{name} must be >= {lo}, got {v[name]}")
    for name in ("rho0_plus", "rho0_minus", "burn_in"):
        if name in v and not v[name] >= 0:
            errors.append(f"{name} must be >= 0, got {v[name]}")
    for name in ("kinetics_dt", "kinetics_tol", "stationary_tol"):
        if name in v and not v[name] > 0:
            errors.append(f"{name} must be > 0, got {v[name]}")
    if "stationary_damping" in v and not 0 < v["stationary_damping"] <= 1:
        errors.append("stationary.damping must lie in (0, 1]")
    scales = v.get("scales", d.scales)
    if not scales or any(s < 1 for s in scales) or any(b <= a for a, b in zip(scales, scales[1:])):
        errors.append(f"mesoscopic.scales must be increasing integers >= 1, got {scales}")
    edges = v.get("bin_edges", d.bin_edges)
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])) or edges[0] < 0:
        errors.append(f"mesoscopic.bin_edges must be increasing and >= 0, got {edges}")
    elif edges[-1] > domain.half_min_side:
        errors.append(
            f"constraint: mesoscopic.bin_edges max {edges[-1]} exceeds half the smallest side "
            f"{domain.half_min_side}"
        )
    if v.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
        errors.append(f"unsupported format_version {v['format_version']}")
    if experiment == "mesoscopic" and v.get("replicas", d.replicas) < 4:
        errors.append("mesoscopic sweeps need schedule.replicas >= 4")
    if errors:
        raise ConfigError(errors)

    explicit = {"experiment", "snapshot_times", "t_end"}
    plain = {f.name for f in fields(RunSpec)} - explicit
    kw = {k: val for k, val in v.items() if k in plain}
    return replace(
        d,
        **kw,
        experiment=experiment,
        domain=domain,
        potentials=pset,
        weight=RuelleWeight(v.get("alpha_plus", 0.0), v.get("alpha_minus", 0.0)),
        snapshot_times=tuple(float(s) for s in snaps),
        t_end=float(t_end),
    )


def serialize(spec: RunSpec) -> str:
    """Canonical text; ``parse_config(serialize(s)) == s``."""
    fl = lambda xs: ", ".join(repr(float(x)) for x in xs)  # noqa: E731
    p = spec.potentials
    lines = [
        f"experiment = {spec.experiment}",
        f"domain.sides = {fl(spec.domain.side_lengths)}",
        f"activity.z_plus = {p.z_plus!r}",
        f"activity.z_minus = {p.z_minus!r}",
        f"mutation.multiplier = {p.mutation_multiplier!r}",
    ]
    lines += [f"potentials.{name} = {getattr(p, name)}" for name in POTENTIAL_NAMES]
    lines += [
        f"weight.alpha_plus = {spec.weight.alpha_plus!r}",
        f"weight.alpha_minus = {spec.weight.alpha_minus!r}",
        f"schedule.t_end = {spec.t_end!r}",
        f"schedule.snapshot_times = {fl(spec.snapshot_times)}",
        f"schedule.burn_in = {spec.burn_in!r}",
        f"schedule.replicas = {spec.replicas}",
        f"schedule.seed = {spec.seed}",
        f"initial.rho_plus = {spec.rho0_plus!r}",
        f"initial.rho_minus = {spec.rho0_minus!r}",
        f"kinetics.dt = {spec.kinetics_dt!r}",
        f"kinetics.tol = {spec.kinetics_tol!r}",
        f"kinetics.cells = {spec.kinetics_cells}",
        f"stationary.damping = {spec.stationary_damping!r}",
        f"stationary.tol = {spec.stationary_tol!r}",
        f"mesoscopic.scales = {', '.join(str(s) for s in spec.scales)}",
        f"mesoscopic.bin_edges = {fl(spec.bin_edges)}",
        f"run.parallel = {spec.parallel}",
        f"output.format_version = {spec.format_version}",
    ]
    return "\n".join(lines) + "\n"
