import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from wrglauber import __version__
from wrglauber.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from wrglauber.config import ConfigError, RunSpec, parse_config, serialize
from wrglauber.experiments import (
    MANIFEST_NAME,
    ExperimentManifest,
    format_snapshots,
    mesoscopic_sweep,
    parse_snapshots,
    run_experiment,
)
from wrglauber.geometry import Domain, PotentialSet, PotentialSpec
from wrglauber.regime import RuelleWeight
from wrglauber.simulator import run

GOLDEN = Path(__file__).parent / "golden"

FREE_SIMULATE = """\
# free case, two replicas
experiment = simulate
domain.sides = 10.0
activity.z_plus = 1.0
activity.z_minus = 0.5
schedule.t_end = 5
schedule.snapshot_interval = 1.0
schedule.replicas = 2
schedule.seed = 7
"""


def test_minimal_check_config_defaults():
    spec = parse_config("experiment = check\n")
    assert spec == RunSpec()
    assert spec.domain == Domain.box(10.0) and spec.potentials.mutation_multiplier == 1.0


def test_interval_expands_to_times():
    spec = parse_config(FREE_SIMULATE)
    assert spec.snapshot_times == (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)


def test_cutoff_constraint_names_both_values():
    with pytest.raises(ConfigError) as exc:
        parse_config("domain.sides = 4.0\npotentials.tau_minus = square_well(1.0, 2.5)\n")
    msg = str(exc.value)
    assert "2.5" in msg and "2.0" in msg


def test_all_errors_reported():
    text = "bogus.key = 1\nactivity.z_plus = abc\nno equals sign\nschedule.replicas = 0\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    errs = exc.value.errors
    assert len(errs) == 3
    assert any("line 1" in e and "unknown key" in e for e in errs)
    assert any("line 2, column" in e for e in errs)
    assert any("line 3, column 1" in e and "syntax" in e for e in errs)


@pytest.mark.parametrize("text", [
    "experiment = dance\n",
    "schedule.snapshot_times = 3, 1\nschedule.t_end = 5\n",
    "schedule.snapshot_times = 1, 9\nschedule.t_end = 5\n",
    "activity.z_minus = 0\n",
    "experiment = mesoscopic\nschedule.replicas = 3\n",
    "mesoscopic.bin_edges = 0, 6\n",
    "stationary.damping = 1.5\n",
    "experiment = check\nexperiment = check\n",
])
def test_constraint_violations(text):
    with pytest.raises(ConfigError):
        parse_config(text)


pot = st.one_of(
    st.just(PotentialSpec.zero()),
    st.builds(PotentialSpec.square_well, st.floats(0, 5), st.floats(0.01, 2)),
    st.builds(PotentialSpec.gaussian, st.floats(0, 5), st.floats(0.01, 1), st.floats(0, 2)),
    st.builds(PotentialSpec.exponential, st.floats(0, 5), st.floats(0.01, 1), st.floats(0, 2)),
)


@st.composite
def specs(draw):
    dim = draw(st.integers(1, 2))
    sides = tuple(draw(st.floats(4.0, 50.0)) for _ in range(dim))
    names = ("phi_plus", "phi_minus", "psi_plus", "psi_minus",
             "kappa_plus", "kappa_minus", "tau_plus", "tau_minus")
    pset = PotentialSet(
        z_plus=draw(st.floats(0.01, 10)), z_minus=draw(st.floats(0.01, 10)),
        mutation_multiplier=draw(st.floats(0, 3)),
        **{n: draw(pot) for n in names},
    )
    t_end = draw(st.floats(0, 100))
    times = tuple(sorted(draw(st.lists(st.floats(0, t_end), min_size=1, max_size=5))))
    exp = draw(st.sampled_from(["check", "simulate", "kinetics", "stationary", "mesoscopic"]))
    edges = tuple(sorted(set(draw(st.lists(st.floats(0, min(sides) / 2), min_size=2, max_size=5)))))
    if len(edges) < 2:
        edges = (0.0, min(sides) / 2)
    return RunSpec(
        experiment=exp, domain=Domain.box(*sides), potentials=pset,
        weight=RuelleWeight(draw(st.floats(-3, 3)), draw(st.floats(-3, 3))),
        t_end=t_end, snapshot_times=times, burn_in=draw(st.floats(0, 10)),
        replicas=draw(st.integers(4, 50)), seed=draw(st.integers(0, 2**63)),
        rho0_plus=draw(st.floats(0, 5)), rho0_minus=draw(st.floats(0, 5)),
        kinetics_dt=draw(st.floats(1e-3, 1)), kinetics_tol=draw(st.floats(1e-14, 1e-3)),
        kinetics_cells=draw(st.integers(0, 128)),
        stationary_damping=draw(st.floats(0.01, 1)), stationary_tol=draw(st.floats(1e-14, 1e-3)),
        scales=tuple(sorted(set(draw(st.lists(st.integers(1, 32), min_size=1, max_size=4))))),
        bin_edges=edges, parallel=draw(st.integers(1, 8)),
    )


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(specs())
def test_serialize_round_trip(spec):
    text = serialize(spec)
    again = parse_config(text)
    assert again == spec
    assert serialize(again) == text


def test_snapshot_text_round_trip():
    d = Domain.box(5.0, 3.0)
    from wrglauber.geometry import TwoTypeConfiguration

    init = TwoTypeConfiguration(d, [(0.1, 0.2), (1 / 3, 2.9)], [(4.999, 0.0)])
    tr = run(init, PotentialSet.free(), 2.0, [0.0, 1.0, 2.0], seed=1)
    back = parse_snapshots(format_snapshots(tr.snapshots), 2)
    for a, b in zip(tr.snapshots, back):
        assert a.time == b.time
        assert np.array_equal(a.plus, b.plus) and np.array_equal(a.minus, b.minus)
    with pytest.raises(ValueError):
        parse_snapshots("# something else\n", 2)


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def data_digests(manifest):
    return dict(sorted(manifest.files.items()))


def test_check_writes_only_regime_reports(tmp_path):
    cfg = write(tmp_path, "experiment = check\n")
    assert main(["check", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "o").iterdir())
    assert names == [MANIFEST_NAME, "regime_fokker_planck.kv", "regime_fokker_planck.txt",
                     "regime_vlasov.kv", "regime_vlasov.txt"]
    assert "verdict=FAIL" in (tmp_path / "o" / "regime_vlasov.kv").read_text()


@pytest.mark.parametrize("experiment", ["check", "simulate", "kinetics", "stationary"])
def test_manifest_complete_and_valid(tmp_path, experiment):
    spec = replace(parse_config(FREE_SIMULATE), experiment=experiment, rho0_plus=0.2)
    out = tmp_path / "out"
    manifest = run_experiment(spec, out)
    text = (out / MANIFEST_NAME).read_text()
    back = ExperimentManifest.from_text(text)
    assert back == manifest
    assert back.verify(out) == []
    assert parse_config(back.spec_text) == spec
    assert back.code_version == __version__
    (out / "stray.txt").write_text("x")
    assert back.verify(out) == ["unlisted file stray.txt"]


def test_reproducible_digests(tmp_path):
    spec = parse_config(FREE_SIMULATE)
    a = run_experiment(spec, tmp_path / "a")
    b = run_experiment(spec, tmp_path / "b", parallel=2)
    assert data_digests(a) == data_digests(b)
    c = run_experiment(replace(spec, seed=8), tmp_path / "c")
    assert data_digests(a) != data_digests(c)


def test_golden_simulate_digests(tmp_path):
    m = run_experiment(parse_config(FREE_SIMULATE), tmp_path / "g")
    expected = {}
    for line in (GOLDEN / "simulate_free.sha256").read_text().splitlines():
        digest, name = line.split("  ", 1)
        expected[name] = digest
    assert data_digests(m) == expected


def test_kinetics_cli_free_case(tmp_path):
    cfg = write(tmp_path, "experiment = kinetics\nactivity.z_plus = 1.0\nactivity.z_minus = 0.5\n"
                          "schedule.t_end = 20\nschedule.snapshot_interval = 5\n")
    assert main(["kinetics", "--config", str(cfg), "--out", str(tmp_path / "k")]) == EXIT_OK
    last = (tmp_path / "k" / "trajectory.csv").read_text().splitlines()[-1].split(",")
    assert float(last[0]) == 20.0
    assert abs(float(last[1]) - 5 / 6) < 1e-6 and abs(float(last[2]) - 2 / 3) < 1e-6


def test_kinetics_grid_output(tmp_path):
    spec = replace(parse_config(FREE_SIMULATE), experiment="kinetics", kinetics_cells=8)
    run_experiment(spec, tmp_path / "kg")
    rows = (tmp_path / "kg" / "trajectory.csv").read_text().splitlines()
    assert rows[0] == "time,cell,rho_plus,rho_minus"
    assert len(rows) == 1 + 8 * len(spec.snapshot_times)


def test_cli_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, "activity.z_plus = -1\n", "bad.cfg")
    assert main(["check", "--config", str(bad), "--out", str(tmp_path / "x")]) == EXIT_VALIDATION
    assert "bad.cfg" in capsys.readouterr().err
    assert main(["check", "--config", str(tmp_path / "missing.cfg"), "--out", "x"]) == EXIT_VALIDATION
    assert main(["frobnicate"]) == EXIT_VALIDATION
    good = write(tmp_path, "experiment = check\n")
    assert main(["check", "--config", str(good), "--out", str(tmp_path / "y"), "--seed", "-3"]) == EXIT_VALIDATION
    # a runtime failure: stationary iteration cannot converge with this tolerance
    rt = write(tmp_path, "experiment = stationary\nstationary.tol = 1e-300\n", "rt.cfg")
    assert main(["stationary", "--config", str(rt), "--out", str(tmp_path / "z")]) == EXIT_RUNTIME
    assert not (tmp_path / "z").exists()
    assert not any(p.name.startswith(".z.") for p in tmp_path.iterdir())


def test_cli_version(capsys):
    assert main(["--version"]) == EXIT_OK
    out = capsys.readouterr().out
    assert __version__ in out and "format 1" in out


def test_cli_seed_override(tmp_path):
    cfg = write(tmp_path, FREE_SIMULATE)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "s"), "--seed", "99"]) == EXIT_OK
    m = ExperimentManifest.from_text((tmp_path / "s" / MANIFEST_NAME).read_text())
    assert m.seeds == (99,) and "schedule.seed = 99" in m.spec_text


def test_mesoscopic_free_case_small(tmp_path):
    text = (FREE_SIMULATE.replace("experiment = simulate", "experiment = mesoscopic")
            .replace("schedule.replicas = 2", "schedule.replicas = 6"))
    spec = replace(parse_config(text),
                   scales=(1, 2), rho0_plus=0.5, rho0_minus=0.5, t_end=2.0, snapshot_times=(1.0, 2.0))
    rows = mesoscopic_sweep(spec)
    assert [r.n for r in rows] == [1, 2]
    for r in rows:
        assert r.density_error < 4 * r.density_error_se + 1e-12
    with pytest.raises(ValueError):
        mesoscopic_sweep(replace(spec, replicas=3))
    m = run_experiment(spec, tmp_path / "m")
    assert "mesoscopic.csv" in m.files and "densities_n2.csv" in m.files


def test_mesoscopic_n1_equals_plain_simulation():
    spec = replace(parse_config(FREE_SIMULATE), replicas=4, scales=(1,), rho0_plus=0.3)
    from wrglauber.experiments import _replica_task

    a = _replica_task((spec, 1, 0, True))
    b = _replica_task((spec, 1, 0, True))
    assert a.events == b.events
    assert math.isfinite(mesoscopic_sweep(spec)[0].density_error)
