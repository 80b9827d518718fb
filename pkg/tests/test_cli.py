import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinchain import cli
from spinchain.config import RunConfig, parse_config, serialize_config
from spinchain.dmrg import DmrgConfig, run_dmrg
from spinchain.model import ModelParams
from spinchain.scan import ScanConfig, uniform_grid


def write_config(path, text):
    path.write_text(text)
    return path


def read_summary(path):
    return cli.parse_summary(path.read_text())


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 40).map(lambda k: 4 * k),
    j=st.floats(-3, 3, allow_nan=False),
    d=st.floats(0.01, 5, allow_nan=False),
    m=st.integers(2, 256),
    tol=st.floats(1e-14, 1e-6),
    backend=st.sampled_from(["ed", "dmrg", "auto"]),
    with_scan=st.booleans(),
    refine=st.booleans(),
    obs=st.sampled_from(["susceptibility", "entropy", "both"]),
)
def test_config_round_trip(n, j, d, m, tol, backend, with_scan, refine, obs):
    model = ModelParams(n, j_af=1.0, j_f=j, delta_af=1.0, delta_f=d)
    dmrg = DmrgConfig(max_kept_m=m, energy_tol=tol)
    scan = None
    if with_scan:
        scan = ScanConfig(
            n_sites=n,
            delta_f_grid=uniform_grid(1.6, 3.0, 0.05),
            observable=obs,
            dmrg=dmrg,
            refine=refine,
            backend="dmrg" if backend == "ed" else backend,
            model=model,
        )
        backend = scan.backend.value
    config = RunConfig(
        model=model,
        backend=cli.Backend(backend),
        dmrg=dmrg,
        scan=scan,
        sizes=(n,) if with_scan else (),
        output_dir=None,
        checkpoint=refine,
    )
    assert parse_config(serialize_config(config)) == config


def test_config_rejects_unknown_keys():
    with pytest.raises(cli.ConfigError):
        parse_config("[model]\nbogus = 1\n")
    with pytest.raises(cli.ConfigError):
        parse_config("[nonsense]\n")
    with pytest.raises(cli.ConfigError):
        parse_config("[model]\nn_sites = 7\n")


def test_ground_two_sites(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.ini", "[model]\nn_sites = 2\n")
    assert cli.main(["ground", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    record = read_summary(tmp_path / "ground_N2.summary")
    assert float(record["energy"]) == pytest.approx(-0.75, abs=1e-12)
    assert "energy=" in capsys.readouterr().out


def test_ground_auto_uses_ed(tmp_path):
    cfg = write_config(tmp_path / "c.ini", "[model]\nn_sites = 12\ndelta_f = 2.3\n[run]\nbackend = auto\n")
    assert cli.main(["ground", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    record = read_summary(tmp_path / "ground_N12.summary")
    assert record["backend"] == "ed"
    dm = run_dmrg(ModelParams(12, delta_f=2.3), DmrgConfig(max_kept_m=64))
    assert float(record["energy"]) == pytest.approx(dm.energy, abs=1e-8)


def test_ground_checkpoint(tmp_path):
    cfg = write_config(
        tmp_path / "c.ini",
        "[model]\nn_sites = 8\ndelta_f = 2.0\n[run]\nbackend = dmrg\ncheckpoint = true\n[dmrg]\nmax_kept_m = 16\n",
    )
    assert cli.main(["ground", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "ground_N8.mps").read_bytes()[:4] == b"MPS1"


def test_missing_output_dir(tmp_path):
    cfg = write_config(tmp_path / "c.ini", "[model]\nn_sites = 2\n")
    before = set(tmp_path.iterdir())
    assert cli.main(["ground", "--config", str(cfg)]) == 2
    assert cli.main(["ground", "--config", str(cfg), "--out", str(tmp_path / "nope")]) == 2
    assert set(tmp_path.iterdir()) == before


def test_bad_config_exit_code(tmp_path):
    cfg = write_config(tmp_path / "c.ini", "[model]\nn_sites = 5\n")
    assert cli.main(["ground", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert cli.main(["ground", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path)]) == 2
    assert cli.main(["frobnicate"]) == 2


SCAN_12 = """[model]
n_sites = 12
[run]
backend = {backend}
checkpoint = {checkpoint}
[dmrg]
max_kept_m = 32
[scan]
grid = 2.0:2.7:0.1
observable = susceptibility
refine = {refine}
refine_width = 0.1
refine_points = 11
"""


def test_scan_csv(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.ini", SCAN_12.format(backend="ed", checkpoint="false", refine="true"))
    assert cli.main(["scan", "--config", str(cfg), "--out", str(tmp_path), "--workers", "1"]) == 0
    rows = read_csv(tmp_path / "scan_N12.csv")
    assert tuple(rows[0]) == cli.CSV_COLUMNS
    coarse = uniform_grid(2.0, 2.7, 0.1)
    assert len(rows) > len(coarse)
    assert {float(r["delta_f"]) for r in rows} >= set(coarse)
    assert [float(r["delta_f"]) for r in rows] == sorted(float(r["delta_f"]) for r in rows)
    assert all(math.isnan(float(r["entropy_bits"])) for r in rows)
    record = read_summary(tmp_path / "scan_N12.summary")
    assert 2.2 < float(record["peak_susceptibility_location"]) < 2.45
    assert not list(tmp_path.glob(".*tmp"))


def test_scan_row_count_without_refine(tmp_path):
    cfg = write_config(tmp_path / "c.ini", SCAN_12.format(backend="ed", checkpoint="false", refine="false"))
    assert cli.main(["scan", "--config", str(cfg), "--out", str(tmp_path), "--workers", "1"]) == 0
    assert len(read_csv(tmp_path / "scan_N12.csv")) == 8


def test_scan_rerun_bit_identical(tmp_path):
    cfg = write_config(tmp_path / "c.ini", SCAN_12.format(backend="dmrg", checkpoint="false", refine="false"))
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    for out in (a, b):
        assert cli.main(["scan", "--config", str(cfg), "--out", str(out), "--workers", "1"]) == 0
    assert (a / "scan_N12.csv").read_bytes() == (b / "scan_N12.csv").read_bytes()


def test_scan_resume_after_interrupt(tmp_path, monkeypatch):
    cfg = write_config(tmp_path / "c.ini", SCAN_12.format(backend="dmrg", checkpoint="true", refine="false"))
    ref, run = tmp_path / "ref", tmp_path / "run"
    ref.mkdir()
    run.mkdir()
    assert cli.main(["scan", "--config", str(cfg), "--out", str(ref), "--workers", "1"]) == 0

    original = cli.ScanWriter.on_sample
    calls = {"n": 0}

    def interrupted(self, n, sample, chain):
        original(self, n, sample, chain)
        calls["n"] += 1
        if calls["n"] == 3:
            raise KeyboardInterrupt

    monkeypatch.setattr(cli.ScanWriter, "on_sample", interrupted)
    with pytest.raises(KeyboardInterrupt):
        cli.main(["scan", "--config", str(cfg), "--out", str(run), "--workers", "1"])
    assert len(read_csv(run / "scan_N12.partial.csv")) == 3
    assert not (run / "scan_N12.csv").exists()
    monkeypatch.setattr(cli.ScanWriter, "on_sample", original)

    assert cli.main(["scan", "--config", str(cfg), "--out", str(run), "--workers", "1", "--resume"]) == 0
    assert (run / "scan_N12.csv").read_bytes() == (ref / "scan_N12.csv").read_bytes()
    assert not (run / "scan_N12.partial.csv").exists()


def test_scan_worker_pool(tmp_path):
    text = """[model]
n_sites = 8
[run]
backend = dmrg
checkpoint = true
[dmrg]
max_kept_m = 16
[scan]
sizes = 8, 12
grid = 1.6:2.8:0.1
observable = susceptibility
"""
    cfg = write_config(tmp_path / "c.ini", text)
    assert cli.main(["scan", "--config", str(cfg), "--out", str(tmp_path), "--workers", "2"]) == 0
    single = tmp_path / "single"
    single.mkdir()
    assert cli.main(["scan", "--config", str(cfg), "--out", str(single), "--workers", "1"]) == 0
    for n in (8, 12):
        assert (tmp_path / f"scan_N{n}.csv").read_bytes() == (single / f"scan_N{n}.csv").read_bytes()
        assert not (tmp_path / f"scan_N{n}.partial.csv").exists()


def test_scan_nonconvergence_exit_code(tmp_path):
    text = SCAN_12.format(backend="dmrg", checkpoint="false", refine="false")
    text = text.replace("max_kept_m = 32", "max_kept_m = 8\nn_sweeps_max = 1")
    cfg = write_config(tmp_path / "c.ini", text)
    assert cli.main(["scan", "--config", str(cfg), "--out", str(tmp_path), "--workers", "1"]) == 1


def test_scan_unbracketed_peak_exit_code(tmp_path):
    text = SCAN_12.format(backend="ed", checkpoint="false", refine="false").replace("2.0:2.7:0.1", "1.0:1.5:0.1")
    cfg = write_config(tmp_path / "c.ini", text)
    assert cli.main(["scan", "--config", str(cfg), "--out", str(tmp_path), "--workers", "1"]) == 2
    assert (tmp_path / "scan_N12.csv").exists()


def _peak_file(path, n, loc, obs="entropy"):
    path.write_text(cli.summary_line(command="scan", n_sites=n, **{f"peak_{obs}_location": loc}))
    return str(path)


def test_fit_collinear(tmp_path):
    files = [_peak_file(tmp_path / f"p{n}.summary", n, 2.3 + 12.0 / n) for n in (20, 40, 60, 80)]
    assert cli.main(["fit", *files, "--observable", "entropy", "--out", str(tmp_path)]) == 0
    record = read_summary(tmp_path / "fit_entropy.summary")
    assert float(record["intercept"]) == pytest.approx(2.3, abs=1e-12)
    assert float(record["rms_residual"]) == pytest.approx(0.0, abs=1e-12)
    table = np.loadtxt(tmp_path / "fit_entropy.dat")
    assert table.shape == (4, 2)


def test_fit_single_file(tmp_path):
    f = _peak_file(tmp_path / "p.summary", 20, 2.5)
    assert cli.main(["fit", f, "--observable", "entropy", "--out", str(tmp_path)]) == 2


def test_fit_missing_record(tmp_path):
    files = [_peak_file(tmp_path / f"p{n}.summary", n, 2.4, obs="susceptibility") for n in (20, 40)]
    assert cli.main(["fit", *files, "--observable", "entropy", "--out", str(tmp_path)]) == 2


def test_entropy_profile(tmp_path):
    cfg = write_config(tmp_path / "c.ini", "[model]\nn_sites = 10\ndelta_f = 2.5\n")
    assert cli.main(["entropy-profile", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "entropy_profile_N10.csv")
    values = [float(r["entropy_bits"]) for r in rows]
    assert len(values) == 9
    np.testing.assert_allclose(values, values[::-1], atol=1e-10)


def test_set_override(tmp_path):
    cfg = write_config(tmp_path / "c.ini", "[model]\nn_sites = 4\n")
    assert cli.main(["ground", "--config", str(cfg), "--out", str(tmp_path), "--set", "model.n_sites=2"]) == 0
    assert (tmp_path / "ground_N2.summary").exists()


def test_log_level_from_environment(tmp_path, monkeypatch):
    import logging

    monkeypatch.setenv("SPINCHAIN_LOG", "info")
    root = logging.getLogger()
    saved = root.level
    cfg = write_config(tmp_path / "c.ini", "[model]\nn_sites = 2\n")
    try:
        cli.main(["ground", "--config", str(cfg), "--out", str(tmp_path)])
    finally:
        root.setLevel(saved)


def test_default_size_families():
    assert parse_config("[scan]\nobservable = susceptibility\n").scan_sizes == (26, 38, 54, 78)
    assert parse_config("[scan]\nobservable = entropy\n").scan_sizes == (20, 40, 60, 80, 100)
    assert parse_config("[model]\nn_sites = 16\n[scan]\n").scan_sizes == (16,)
    assert parse_config("[scan]\nsizes = 8, 12\n").scan_sizes == (8, 12)
    config = parse_config("[scan]\nobservable = entropy\n")
    assert parse_config(serialize_config(config)) == config
