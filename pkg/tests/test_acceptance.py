"""Acceptance criteria, one test per criterion, each at its stated tolerance.

Every test records one PASS/FAIL line, listed again in the
"acceptance criteria" section at the end of the pytest run. The full-scale
reproductions (N=78 susceptibility, N up to 80 entropy extrapolation) take
hours on one core and only run with ``--runslow``.
"""
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinchain import cli
from spinchain.dmrg import DmrgConfig, run_dmrg
from spinchain.exact import sector_basis, solve_exact
from spinchain.model import ModelParams
from spinchain.mps import schmidt_spectrum
from spinchain.observables import entanglement_entropy, fidelity
from spinchain.scan import ScanConfig, finite_size_fit, scan_delta_f, uniform_grid
from spinchain.validate import oracle_suite

# Refined ED susceptibility maximum for the N=20 open chain (frozen from an
# exact scan on 2.0:2.8:0.05 with an 11-point refinement of width 0.1).
ED_PEAK_20 = 2.4095

ENTROPY_GRID = uniform_grid(2.2, 3.2, 0.05)
_entropy_cache = {}


def entropy_scan(n):
    if n not in _entropy_cache:
        cfg = ScanConfig(
            n_sites=n,
            delta_f_grid=ENTROPY_GRID,
            observable="entropy",
            dmrg=DmrgConfig(max_kept_m=64),
            refine=True,
            refine_width=0.1,
            refine_points=11,
            backend="dmrg",
        )
        t0 = time.perf_counter()
        result = scan_delta_f(cfg)
        _entropy_cache[n] = (result, time.perf_counter() - t0)
    return _entropy_cache[n]


@pytest.fixture(scope="module")
def oracle_cases():
    t0 = time.perf_counter()
    cases = oracle_suite()
    return cases, time.perf_counter() - t0


def test_c1_oracle_equivalence(oracle_cases, criterion):
    cases, elapsed = oracle_cases
    de = max(c.energy_error for c in cases)
    ds = max(c.entropy_error for c in cases)
    df = max(c.fidelity_error for c in cases)
    ok = de < 1e-8 and ds < 1e-6 and df < 1e-6 and elapsed < 300 and len(cases) == 12
    criterion(
        "1 oracle equivalence",
        ok,
        f"{len(cases)} cases, max |dE|={de:.2e} |dS|={ds:.2e} |dF|={df:.2e}, {elapsed:.0f}s",
    )
    assert ok


def test_c2_two_site_analytics(criterion):
    t0 = time.perf_counter()
    params = ModelParams(2)
    ed = solve_exact(params)
    dm = run_dmrg(params, DmrgConfig(max_kept_m=4))
    e_ed = entanglement_entropy(ed, 1).entropy_bits
    e_dm = entanglement_entropy(dm, 1).entropy_bits
    errors = [abs(ed.energy + 0.75), abs(dm.energy + 0.75), abs(e_ed - 1.0), abs(e_dm - 1.0)]
    ok = max(errors) <= 1e-12
    criterion(
        "2 two-site analytics",
        ok,
        f"E_ed={ed.energy!r} E_dmrg={dm.energy!r} S_ed={e_ed!r} S_dmrg={e_dm!r}, "
        f"{time.perf_counter() - t0:.2f}s",
    )
    assert ok


def susceptibility_scan(n, grid, refine_width):
    cfg = ScanConfig(
        n_sites=n,
        delta_f_grid=grid,
        delta_step=1e-3,
        observable="susceptibility",
        dmrg=DmrgConfig(max_kept_m=128),
        refine=True,
        refine_width=refine_width,
        refine_points=11,
        backend="dmrg",
    )
    t0 = time.perf_counter()
    result = scan_delta_f(cfg)
    return result, time.perf_counter() - t0


def test_c3_reduced_susceptibility_n38(criterion):
    result, elapsed = susceptibility_scan(38, uniform_grid(2.2, 2.55, 0.05), 0.1)
    loc = result.peak_location
    dw = max(s.max_discarded_weight for s in result.samples)
    ok = 2.30 <= loc <= ED_PEAK_20 and dw < 1e-12 and elapsed <= 1800
    criterion(
        "3 (reduced, N=38)",
        ok,
        f"peak at {loc:.4f} (trend window [2.30, {ED_PEAK_20}]), S={result.peak_value:.5f}, "
        f"max discarded {dw:.1e}, {elapsed:.0f}s",
    )
    assert ok


@pytest.mark.slow
def test_c3_full_susceptibility_n78(criterion):
    result, elapsed = susceptibility_scan(78, uniform_grid(2.2, 2.45, 0.05), 0.06)
    loc = result.peak_location
    dw = max(s.max_discarded_weight for s in result.samples)
    ok = abs(loc - 2.32) <= 0.02 and dw < 1e-12 and elapsed <= 4 * 3600
    criterion(
        "3 (full, N=78)",
        ok,
        f"peak at {loc:.4f} (target 2.32 +- 0.02), S={result.peak_value:.5f}, "
        f"max discarded {dw:.1e}, {elapsed:.0f}s",
    )
    assert ok


def test_c4_entropy_peaks_20_40(criterion):
    (r20, t20), (r40, t40) = entropy_scan(20), entropy_scan(40)
    ok = (
        r40.peak_value > r20.peak_value
        and r40.peak_location < r20.peak_location
        and t20 + t40 <= 45 * 60
    )
    criterion(
        "4 entropy peaks N=20,40",
        ok,
        f"N=20 peak {r20.peak_value:.5f} at {r20.peak_location:.4f}; "
        f"N=40 peak {r40.peak_value:.5f} at {r40.peak_location:.4f}; {t20 + t40:.0f}s",
    )
    assert ok


def _entropy_fit(sizes):
    points = [(n, entropy_scan(n)[0].peak_location) for n in sizes]
    return finite_size_fit(points)


def test_c5_reduced_extrapolation(criterion):
    fit = _entropy_fit((20, 40, 60))
    ok = abs(fit.intercept - 2.3) <= 0.1
    criterion(
        "5 (reduced, N=20,40,60)",
        ok,
        f"intercept {fit.intercept:.4f} (target 2.3 +- 0.1), slope {fit.slope:.3f}, "
        f"peaks {[round(p, 4) for _, p in fit.points]}",
    )
    assert ok


@pytest.mark.slow
def test_c5_full_extrapolation(criterion):
    fit = _entropy_fit((20, 40, 60, 80))
    ok = abs(fit.intercept - 2.3) <= 0.05
    criterion(
        "5 (full, N=20,40,60,80)",
        ok,
        f"intercept {fit.intercept:.4f} (target 2.3 +- 0.05), slope {fit.slope:.3f}, "
        f"peaks {[round(p, 4) for _, p in fit.points]}",
    )
    assert ok


def test_c6_quadratic_regime(criterion):
    params = ModelParams(12, delta_f=2.0)
    basis = sector_basis(12)
    gs = solve_exact(params, basis)
    ratios = []
    for d in (0.0005, 0.001, 0.002):
        shifted = solve_exact(params.with_delta_f(2.0 + d), basis, previous=gs.state)
        ratios.append((1.0 - fidelity(gs, shifted)) / d**2)
    spread = max(ratios) / min(ratios) - 1.0
    ok = spread <= 0.05
    criterion(
        "6 quadratic regime",
        ok,
        f"(1-F)/d^2 = {', '.join(f'{r:.6g}' for r in ratios)}; spread {100 * spread:.2f}%",
    )
    assert ok


_symmetry = []


@settings(max_examples=20, deadline=None, derandomize=True)
@given(
    n=st.sampled_from([6, 8, 10, 12]),
    delta_f=st.floats(0.5, 4.0),
    j_f=st.floats(-2.0, -0.2),
    delta_af=st.floats(0.5, 1.5),
)
def _symmetry_case(n, delta_f, j_f, delta_af):
    params = ModelParams(n, j_f=j_f, delta_f=delta_f, delta_af=delta_af)
    gs = solve_exact(params)
    err = max(
        abs(entanglement_entropy(gs, l).entropy_bits - entanglement_entropy(gs, n - l).entropy_bits)
        for l in range(1, n)
    )
    _symmetry.append(err)
    assert err <= 1e-8


def test_c7_invariants(oracle_cases, tmp_path, criterion):
    checks = {}

    _symmetry.clear()
    _symmetry_case()
    checks["entropy symmetry"] = (len(_symmetry) == 20 and max(_symmetry) <= 1e-8, f"max {max(_symmetry):.1e}")

    rng = np.random.default_rng(7)
    fids = []
    basis = sector_basis(10)
    for _ in range(10):
        a, b = rng.uniform(0.5, 4.0, 2)
        fids.append(fidelity(solve_exact(ModelParams(10, delta_f=a), basis),
                             solve_exact(ModelParams(10, delta_f=b), basis)))
    fids += [c.fidelity_dmrg for c in oracle_cases[0]] + [c.fidelity_ed for c in oracle_cases[0]]
    checks["fidelity bounds"] = (all(0.0 <= f <= 1.0 for f in fids), f"range [{min(fids):.6f}, {max(fids):.12f}]")

    norms = []
    for delta_f in (1.0, 2.3, 2.8):
        dm = run_dmrg(ModelParams(16, delta_f=delta_f), DmrgConfig(max_kept_m=64))
        for bond in range(1, 16):
            norms.append(abs(np.sum(schmidt_spectrum(dm.state, bond).values ** 2) - 1.0))
    checks["Schmidt normalization"] = (max(norms) <= 1e-10, f"max {max(norms):.1e}")

    slack = [c.energy_dmrg - c.energy_ed for c in oracle_cases[0]]
    checks["variational bound"] = (min(slack) >= -1e-10, f"min E_dmrg - E_ed = {min(slack):.1e}")

    cfg = tmp_path / "scan.ini"
    cfg.write_text(
        "[model]\nn_sites = 12\n[run]\nbackend = dmrg\n[dmrg]\nmax_kept_m = 32\n"
        "[scan]\ngrid = 2.0:2.7:0.1\nobservable = susceptibility\nrefine = false\n"
    )
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        out.mkdir()
        assert cli.main(["scan", "--config", str(cfg), "--out", str(out), "--workers", "1"]) == 0
        outputs.append((out / "scan_N12.csv").read_bytes())
    checks["scan determinism"] = (outputs[0] == outputs[1] and len(outputs[0]) > 0, "CSV bytes identical")

    ok = all(passed for passed, _ in checks.values())
    criterion(
        "7 invariant suites",
        ok,
        "; ".join(f"{k}: {'ok' if p else 'FAIL'} ({d})" for k, (p, d) in checks.items()),
    )
    assert ok
