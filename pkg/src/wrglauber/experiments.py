"""Experiment dispatch, output files and manifests."""

from __future__ import annotations

import hashlib
import math
import os
import shutil
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import FORMAT_VERSION, RunSpec, serialize
from .estimators import factorization_gap, intensity
from .geometry import TwoTypeConfiguration
from .kinetics import (
    DensityState,
    Grid,
    KineticParams,
    integrate,
    jacobian_homogeneous,
    stationary,
)
from .regime import check_fokker_planck_conditions, check_vlasov_conditions
from .simulator import derive_seed, run, vlasov_rescale

SNAPSHOT_HEADER = f"# wrglauber snapshots v{FORMAT_VERSION}"
EVENTS_HEADER = f"# wrglauber events v{FORMAT_VERSION}"
MANIFEST_NAME = "manifest.txt"

# spawn-key layout: (scale, replica, stream); plain simulations use scale 1
STREAM_INITIAL, STREAM_DYNAMICS = 0, 1


class ExperimentError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# file formats

def format_snapshots(snapshots) -> str:
    lines = [SNAPSHOT_HEADER]
    for s in snapshots:
        lines.append(f"t {s.time!r} plus {len(s.plus)} minus {len(s.minus)}")
        for label, pts in (("+", s.plus), ("-", s.minus)):
            for p in pts.tolist():
                lines.append(label + " " + " ".join(repr(c) for c in p))
    return "\n".join(lines) + "\n"


def parse_snapshots(text: str, dimension: int):
    from .simulator import Snapshot

    lines = text.splitlines()
    if not lines or lines[0] != SNAPSHOT_HEADER:
        raise ValueError("not a snapshot file (bad header)")
    out, i = [], 1
    while i < len(lines):
        head = lines[i].split()
        t, n_plus, n_minus = float(head[1]), int(head[3]), int(head[5])
        rows = [tuple(float(c) for c in ln.split()[1:]) for ln in lines[i + 1:i + 1 + n_plus + n_minus]]
        out.append(Snapshot(
            t,
            np.array(rows[:n_plus], dtype=float).reshape(-1, dimension),
            np.array(rows[n_plus:], dtype=float).reshape(-1, dimension),
        ))
        i += 1 + n_plus + n_minus
    return out


def format_events(events) -> str:
    lines = [EVENTS_HEADER]
    for e in events:
        pos = " ".join(repr(c) for c in e.position) if e.position is not None else "-"
        extra = f" {e.proposal}" if e.proposal else ""
        lines.append(f"{e.time!r} {e.kind} {pos} {e.counts[0]} {e.counts[1]}{extra}")
    return "\n".join(lines) + "\n"


def _csv(header, rows) -> str:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(x if isinstance(x, str) else repr(float(x)) if not isinstance(x, (int, np.integer)) else str(x) for x in row))
    return "\n".join(out) + "\n"


def _kv(records) -> str:
    return "\n".join(records) + "\n"


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# manifest

@dataclass(frozen=True)
class ExperimentManifest:
    spec_text: str
    code_version: str
    format_version: int
    seeds: tuple
    files: dict  # relative name -> sha256
    created: str = ""

    def to_text(self) -> str:
        lines = [
            f"# wrglauber manifest v{self.format_version}",
            f"code_version = {self.code_version}",
            f"format_version = {self.format_version}",
            f"created = {self.created}",
            f"seeds = {', '.join(str(s) for s in self.seeds)}",
            "[spec]",
            self.spec_text.rstrip("\n"),
            "[files]",
        ]
        lines += [f"{digest}  {name}" for name, digest in sorted(self.files.items())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentManifest":
        head, rest = text.split("[spec]\n", 1)
        spec_text, files_text = rest.split("[files]\n", 1)
        kv = dict(ln.split(" = ", 1) for ln in head.splitlines()[1:] if " = " in ln)
        files = {}
        for ln in files_text.splitlines():
            digest, name = ln.split("  ", 1)
            files[name] = digest
        seeds = tuple(int(s) for s in kv["seeds"].split(",") if s.strip())
        return cls(spec_text, kv["code_version"], int(kv["format_version"]), seeds, files, kv["created"])

    def verify(self, directory: Path) -> list:
        """Problems found when re-reading ``directory`` (empty list if none)."""
        directory = Path(directory)
        problems = []
        present = {
            str(p.relative_to(directory)) for p in directory.rglob("*")
            if p.is_file() and p.name != MANIFEST_NAME
        }
        for name in sorted(present - set(self.files)):
            problems.append(f"unlisted file {name}")
        for name, digest in sorted(self.files.items()):
            if name not in present:
                problems.append(f"missing file {name}")
            elif sha256_file(directory / name) != digest:
                problems.append(f"digest mismatch for {name}")
        return problems


# ---------------------------------------------------------------------------
# replicas

def _initial_configuration(spec: RunSpec, scale: int, replica: int, rho0=None):
    rho0 = rho0 or (spec.rho0_plus, spec.rho0_minus)
    rng = np.random.Generator(np.random.PCG64(derive_seed(spec.seed, scale, replica, STREAM_INITIAL)))
    return TwoTypeConfiguration.poisson(spec.domain, scale * rho0[0], scale * rho0[1], rng)


def _replica_task(args):
    spec, scale, replica, log_events = args
    params = vlasov_rescale(spec.potentials, scale).params
    init = _initial_configuration(spec, scale, replica)
    seed = derive_seed(spec.seed, scale, replica, STREAM_DYNAMICS)
    return run(init, params, spec.t_end, spec.snapshot_times, seed, log_events=log_events)


def _map(fn, tasks, parallel: int):
    if parallel <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(fn, tasks))


# ---------------------------------------------------------------------------
# experiments

def _check(spec: RunSpec, out: Path) -> None:
    dim = spec.domain.dimension
    for rep in (
        check_fokker_planck_conditions(spec.potentials, spec.weight, dim),
        check_vlasov_conditions(spec.potentials, spec.weight, dim),
    ):
        (out / f"regime_{rep.regime}.txt").write_text(rep.to_text())
        (out / f"regime_{rep.regime}.kv").write_text(_kv(rep.to_records()))


def _simulate(spec: RunSpec, out: Path, parallel: int) -> None:
    tasks = [(spec, 1, r, True) for r in range(spec.replicas)]
    trajs = _map(_replica_task, tasks, parallel)
    vol = spec.domain.volume
    for r, tr in enumerate(trajs):
        (out / f"snapshots_r{r:03d}.txt").write_text(format_snapshots(tr.snapshots))
        (out / f"events_r{r:03d}.txt").write_text(format_events(tr.events))
    rows = []
    for i, t in enumerate(spec.snapshot_times):
        row = [t]
        for col in (0, 1):
            x = np.array([tr.snapshots[i].counts[col] / vol for tr in trajs])
            se = x.std(ddof=1) / math.sqrt(len(x)) if len(x) > 1 else math.nan
            row += [x.mean(), se]
        rows.append(row)
    (out / "intensity.csv").write_text(_csv(
        ["time", "density_plus", "se_plus", "density_minus", "se_minus"], rows))
    records = []
    window = (spec.burn_in, spec.t_end)
    for r, tr in enumerate(trajs):
        for sp in ("+", "-"):
            snaps = [s for s in tr.snapshots if window[0] <= s.time <= window[1]]
            if len(snaps) >= 2:
                est = intensity(snaps, sp, spec.domain, window)
                records += [f"replica{r}.density{sp}={est.density!r}", f"replica{r}.se{sp}={est.se!r}"]
        records += [f"replica{r}.{k.replace(' ', '_')}={v}" for k, v in sorted(tr.counters.items())]
        records.append(f"replica{r}.proposals={tr.n_proposals}")
    (out / "summary.kv").write_text(_kv(records))


def _kinetic_params(spec: RunSpec) -> KineticParams:
    grid = None
    if spec.kinetics_cells > 0:
        grid = Grid(spec.domain, (spec.kinetics_cells,) * spec.domain.dimension)
    return KineticParams.from_potentials(spec.potentials, spec.domain.dimension, grid)


def kinetic_reference(spec: RunSpec, times=None):
    p = KineticParams.from_potentials(spec.potentials, spec.domain.dimension)
    times = spec.snapshot_times if times is None else times
    return integrate(DensityState.homogeneous(spec.rho0_plus, spec.rho0_minus), p,
                     max(times), spec.kinetics_dt, spec.kinetics_tol, output_times=times)


def _kinetics(spec: RunSpec, out: Path) -> None:
    p = _kinetic_params(spec)
    if p.kernels is None:
        state = DensityState.homogeneous(spec.rho0_plus, spec.rho0_minus)
    else:
        cells = p.kernels.grid.cells
        state = DensityState(np.stack([np.full(cells, spec.rho0_plus), np.full(cells, spec.rho0_minus)]))
    times = sorted(set(spec.snapshot_times) | {0.0, spec.t_end})
    traj = integrate(state, p, spec.t_end, spec.kinetics_dt, spec.kinetics_tol, output_times=times)
    if p.kernels is None:
        rows = [[t, v[0], v[1]] for t, v in zip(traj.times, traj.values)]
        header = ["time", "rho_plus", "rho_minus"]
    else:
        rows = []
        for t, v in zip(traj.times, traj.values):
            for c in np.ndindex(*v.shape[1:]):
                rows.append([t, ":".join(map(str, c)), v[(0,) + c], v[(1,) + c]])
        header = ["time", "cell", "rho_plus", "rho_minus"]
    (out / "trajectory.csv").write_text(_csv(header, rows))


def _stationary(spec: RunSpec, out: Path) -> None:
    p = KineticParams.from_potentials(spec.potentials, spec.domain.dimension)
    res = stationary(p, (spec.rho0_plus, spec.rho0_minus), spec.stationary_damping, spec.stationary_tol)
    (out / "stationary.kv").write_text(_kv([
        f"rho_plus={float(res.rho[0])!r}", f"rho_minus={float(res.rho[1])!r}",
        f"iterations={res.iterations}", f"residual={float(res.residual)!r}",
    ]))
    rep = jacobian_homogeneous(res.rho, p, tol=max(10 * spec.stationary_tol, 1e-10))
    J, ev = rep.jacobian, rep.eigenvalues
    (out / "stability.kv").write_text(_kv([
        *(f"j{i + 1}{j + 1}={float(J[i, j])!r}" for i in range(2) for j in range(2)),
        *(f"eigenvalue_{i}={complex(e)!r}" for i, e in enumerate(ev, 1)),
        f"classification={rep.classification}",
        f"fd_relative_error={float(rep.fd_relative_error)!r}",
    ]))


@dataclass(frozen=True)
class SweepRow:
    n: int
    density_error: float
    density_error_se: float
    gap: float
    gap_se: float
    replicas: int


def mesoscopic_sweep(spec: RunSpec, parallel: int = 1, return_trajectories: bool = False):
    """Compare rescaled simulations at each scale with the kinetic trajectory.

    For every scale ``n`` the replicas start from Poisson data with
    intensities ``n * rho0`` and run with :func:`vlasov_rescale` parameters.
    The density error is the largest deviation over snapshot times and
    species of the replica-mean ``count / (n |box|)`` from the kinetic
    solution; its SE is the replica SE at the maximising point.
    """
    if spec.replicas < 4:
        raise ValueError("mesoscopic sweeps need at least 4 replicas")
    ref = kinetic_reference(spec)
    kin = {float(t): v for t, v in zip(ref.times, ref.values)}
    tasks = [(spec, n, r, False) for n in spec.scales for r in range(spec.replicas)]
    results = _map(_replica_task, tasks, parallel)
    vol = spec.domain.volume
    rows, by_scale = [], {}
    for k, n in enumerate(spec.scales):
        trajs = results[k * spec.replicas:(k + 1) * spec.replicas]
        by_scale[n] = trajs
        best = (-1.0, math.nan)
        snaps_by_time = {}
        for i, t in enumerate(spec.snapshot_times):
            snaps = [tr.snapshots[i] for tr in trajs]
            snaps_by_time[float(t)] = snaps
            for col in (0, 1):
                x = np.array([s.counts[col] / (n * vol) for s in snaps])
                dev = abs(x.mean() - kin[float(t)][col])
                if dev > best[0]:
                    best = (dev, x.std(ddof=1) / math.sqrt(len(x)))
        edges = np.asarray(spec.bin_edges)
        gap = factorization_gap(snaps_by_time, n, lambda t: kin[float(t)], edges, spec.domain)
        rows.append(SweepRow(n, best[0], best[1], gap.gap, gap.se, spec.replicas))
    if return_trajectories:
        return rows, ref, by_scale
    return rows


def _mesoscopic(spec: RunSpec, out: Path, parallel: int) -> None:
    rep = check_vlasov_conditions(spec.potentials, spec.weight, spec.domain.dimension)
    (out / "regime_vlasov.kv").write_text(_kv(rep.to_records()))
    rows, ref, by_scale = mesoscopic_sweep(spec, parallel, return_trajectories=True)
    (out / "mesoscopic.csv").write_text(_csv(
        ["n", "density_error", "density_error_se", "factorization_gap", "gap_se", "replicas"],
        [[r.n, r.density_error, r.density_error_se, r.gap, r.gap_se, r.replicas] for r in rows],
    ))
    (out / "kinetic_reference.csv").write_text(_csv(
        ["time", "rho_plus", "rho_minus"], [[t, v[0], v[1]] for t, v in zip(ref.times, ref.values)]))
    vol = spec.domain.volume
    for n, trajs in by_scale.items():
        table = []
        for i, t in enumerate(spec.snapshot_times):
            table.append([t] + [
                float(np.mean([tr.snapshots[i].counts[c] / (n * vol) for tr in trajs])) for c in (0, 1)
            ])
        (out / f"densities_n{n}.csv").write_text(_csv(["time", "rho_plus", "rho_minus"], table))


def seeds_used(spec: RunSpec) -> tuple:
    if spec.experiment == "simulate":
        return (spec.seed,)
    if spec.experiment == "mesoscopic":
        return (spec.seed,)
    return ()


def run_experiment(spec: RunSpec, out_dir, parallel: int | None = None) -> ExperimentManifest:
    """Run ``spec`` and write its outputs plus a manifest into ``out_dir``.

    Files are produced in a temporary sibling directory which replaces
    ``out_dir`` only on success.
    """
    out_dir = Path(out_dir)
    parallel = spec.parallel if parallel is None else parallel
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.", dir=out_dir.parent))
    try:
        if spec.experiment == "check":
            _check(spec, tmp)
        elif spec.experiment == "simulate":
            _simulate(spec, tmp, parallel)
        elif spec.experiment == "kinetics":
            _kinetics(spec, tmp)
        elif spec.experiment == "stationary":
            _stationary(spec, tmp)
        elif spec.experiment == "mesoscopic":
            _mesoscopic(spec, tmp, parallel)
        else:
            raise ExperimentError(f"unknown experiment {spec.experiment!r}")
        files = {
            str(p.relative_to(tmp)): sha256_file(p) for p in sorted(tmp.rglob("*")) if p.is_file()
        }
        manifest = ExperimentManifest(
            serialize(spec), __version__, FORMAT_VERSION, seeds_used(spec), files,
            time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        )
        (tmp / MANIFEST_NAME).write_text(manifest.to_text())
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return manifest


def with_seed(spec: RunSpec, seed: int | None) -> RunSpec:
    return spec if seed is None else replace(spec, seed=int(seed))
