import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from roughwave.field import l2_norm, make_grid
from roughwave.packets import BACKWARD, FORWARD, incidence, intersects, tube_of
from roughwave.potential import build_cosine_resonant
from roughwave.resonance import (
    BudgetExceeded, TwoLevelState, _census_one, _region_cols, _region_rows, backward_slope_range,
    census_budget, census_counts, exact_defect, global_resonance_defect, is_global_resonant,
    local_resonance_directions, low_frequency_profile, make_triple, no_lattice_census, pair_constant,
    pair_resonance_count, resonance_demo, resonance_threshold, scan_k, second_moment, trap_demo,
    two_level_coupling, two_level_eigenvalues, two_level_power, two_level_step, write_census_csv, write_scan_csv,
)


@pytest.fixture(scope="module")
def census8():
    return census_counts(8, samples=60, seed=3)


def test_defect_checks_orientation_and_incidence(census8):
    f, f2, b, c, c2 = census8.triples[0]
    with pytest.raises(ValueError):
        global_resonance_defect(b, f2, b, c, c2)
    with pytest.raises(ValueError):
        global_resonance_defect(f, f2, b, (c[0] + 5, c[1]), c2)


def test_triples_are_sound(census8):
    assert census8.triples
    thr = resonance_threshold(8, census8.eps_prime)
    for f, f2, b, c, c2 in census8.triples:
        # independent rational oracle from the integer labels
        oracle = abs(Fraction(f.ell**2 - b.ell**2, 64) * c[1] - Fraction(f2.ell**2 - b.ell**2, 64) * c2[1])
        assert exact_defect(f, f2, b, c, c2) == oracle
        assert global_resonance_defect(f, f2, b, c, c2) == pytest.approx(float(oracle), abs=1e-12)
        assert oracle < thr
        assert is_global_resonant(f, f2, b, c, c2, census8.eps_prime)
        assert make_triple(f, f2, b, c, c2).global_defect == pytest.approx(float(oracle))


def test_census_matches_brute_force():
    K, lmax, eps_prime = 8, 3, 0.1
    rows, cols = _region_rows(K), _region_cols(K)
    assert list(rows) == [3, 4, 5, 6, 7] and list(cols) == [-3, -2, -1, 0, 1, 2, 3]
    rng = np.random.default_rng(0)
    from roughwave.resonance import _sample_configuration

    for _ in range(6):
        cfg = _sample_configuration(rng, K, lmax, 8, 16, rows, cols)
        n, ell, nb, m, p, q = cfg
        per_s, _, _ = _census_one(cfg, K, lmax, eps_prime, rows, cols)
        thr = K ** (2 + eps_prime)
        expect = {}
        for qp in rows:
            slopes = set()
            for lp in range(-lmax, lmax + 1):
                if not abs((ell * ell - m * m) * q - (lp * lp - m * m) * qp) < thr:
                    continue
                for pp in cols:
                    if not intersects(tube_of(nb, m, BACKWARD, K), pp, qp):
                        continue
                    if any(intersects(tube_of(n2, lp, FORWARD, K), pp, qp) for n2 in range(-2 * K, 2 * K + 1)):
                        slopes.add(abs(lp))
            if slopes:
                expect[qp - q] = len(slopes)
        assert per_s == expect


def test_census_reproducible_and_threaded(census8):
    again = census_counts(8, samples=60, seed=3, jobs=2)
    assert np.array_equal(again.totals, census8.totals)
    assert again.histogram == census8.histogram
    assert census8.fitted_C == census8.max_total / 8


def test_census_validation(monkeypatch):
    with pytest.raises(ValueError):
        census_counts(4)
    with pytest.raises(ValueError):
        census_counts(8.5)
    with pytest.raises(ValueError):
        census_counts(8, slope_range=(0.2, 2.0))
    with pytest.raises(BudgetExceeded):
        census_counts(8, budget=10)
    monkeypatch.setenv("ROUGHWAVE_BUDGET", "5")
    assert census_budget() == 5
    with pytest.raises(BudgetExceeded):
        census_counts(8)
    monkeypatch.setenv("ROUGHWAVE_BUDGET", "lots")
    with pytest.raises(ValueError):
        census_budget()


def test_census_csv(tmp_path, census8):
    path = tmp_path / "c.csv"
    write_census_csv(path, census8)
    lines = path.read_text().splitlines()
    assert lines[0] == "s,count,s0,kappa" and len(lines) == 1 + len(census8.histogram)


@given(st.floats(-3, 3).filter(lambda v: abs(v) > 0.01), st.floats(-3, 3), st.floats(0.25, 0.5))
def test_local_directions_invert(xi1, xi2, eta):
    a, b = local_resonance_directions((xi1, xi2), eta)
    # the slope pair reproduces the frequency it resonates with
    assert eta * (b - a) == pytest.approx(xi1, rel=1e-9, abs=1e-9)
    assert eta * (a * a - b * b) == pytest.approx(xi2, rel=1e-9, abs=1e-9)


def test_local_directions_degenerate():
    with pytest.raises(ValueError):
        local_resonance_directions((1e-5, 1.0), 0.3)
    with pytest.raises(ValueError):
        local_resonance_directions((1.0, 1.0), 0.0)


def test_backward_slope_range():
    lo, hi = backward_slope_range(0.1)
    assert lo == pytest.approx(1.18, abs=0.01)
    assert hi == pytest.approx(1.95, abs=0.01)
    # a looser forward bound can only widen the reachable range
    lo2, hi2 = backward_slope_range(0.2)
    assert lo2 <= lo + 1e-12 and hi2 >= hi - 1e-12


def test_no_lattice_small():
    r = no_lattice_census(8)
    assert (r.N, r.N_control, r.N_tubes) == (3, 7, 19)
    assert r.N <= r.N_control
    assert r.fitted_C == pytest.approx(3 / 8 ** 0.5)
    with pytest.raises(ValueError):
        no_lattice_census(8, upsilon=0.3, eps=0.3)
    with pytest.raises(BudgetExceeded):
        no_lattice_census(8, budget=1)


def _brute_pair_count(f, f2, c, c2, K, eps_prime=0.1):
    count = 0
    for nb in range(-4 * K, 4 * K + 1):
        for m in range(K, 2 * K + 1):
            b = tube_of(nb, m, BACKWARD, K)
            if intersects(b, *c) and intersects(b, *c2):
                d = abs((f.alpha**2 - b.alpha**2) * c[1] - (f2.alpha**2 - b.alpha**2) * c2[1])
                count += d < K**eps_prime
    return count


def test_pair_count_brute_force():
    K = 8
    f = tube_of(0, 1, FORWARD, K)
    for p, q in [(0, 3), (1, 5), (2, 7)]:
        for ell2 in (-2, 0, 3):
            for n2 in range(-6, 6):
                f2 = tube_of(n2, ell2, FORWARD, K)
                c = (int(math.floor(f.centre(3.5))) - 1, 3)
                if not intersects(f, *c) or not intersects(f2, p, q):
                    continue
                assert pair_resonance_count(f, f2, c, (p, q)) == _brute_pair_count(f, f2, c, (p, q), K)
    with pytest.raises(ValueError):
        pair_resonance_count(f, f, (6, 3), (0, 3))


def test_pair_constant():
    assert pair_constant(3, (0, 0), (3, 4), 8) == pytest.approx(3 * (2 * math.pi * 8 * 5 + 8) / 64)


def test_two_level_eigenvalues_exact():
    lam = two_level_coupling(25.0, 2 * math.pi * 100, 0.75)
    assert lam.real == 0 and lam.imag < 0
    zp, zm = two_level_eigenvalues(lam)
    assert abs(zp - (1 - 1j * abs(lam))) < 1e-15
    assert abs(zm - (1 + 1j * abs(lam))) < 1e-15


@given(st.floats(0.0, 0.5), st.integers(0, 60))
def test_two_level_power_matches_matrix(mag, j):
    lam = -1j * mag
    P = np.linalg.matrix_power(np.array([[1, lam], [lam, 1]]), j)
    a, b = two_level_power(0.6, 0.8j, lam, j)
    ref = P @ np.array([0.6, 0.8j])
    assert abs(a - ref[0]) <= 1e-12 * max(1, abs(ref[0])) and abs(b - ref[1]) <= 1e-12 * max(1, abs(ref[1]))
    s = TwoLevelState(0.6, 0.8j, lam)
    for _ in range(min(j, 5)):
        s = two_level_step(s)
    a5, b5 = two_level_power(0.6, 0.8j, lam, min(j, 5))
    assert abs(s.a - a5) < 1e-12 and abs(s.b - b5) < 1e-12


def test_resonance_demo_small():
    demo = resonance_demo(2 * math.pi * 25, 0.75)
    assert demo.eigen_error < 1e-14
    assert demo.transfer_error < 0.05
    assert demo.max_gap < 0.2
    rep = demo.report()
    assert len(rep["model_curve"]) == len(rep["pde_curve"])
    with pytest.raises(ValueError):
        resonance_demo(100.0)
    with pytest.raises(ValueError):
        resonance_demo(2 * math.pi * 25, M=256)


def test_trap_demo_no_coupling():
    out = trap_demo(64, lambda_coupling=0.0)
    assert not out.bound_state and "zero coupling" in out.message


def test_trap_demo_small():
    out = trap_demo(64, 0.8, 30.0)
    assert out.bound_state and out.ground_energy < 0
    assert out.trapped_ratio < 2 and out.free_ratio > 10
    assert set(out.report()) >= {"trapped_ratio", "free_ratio"}


def test_second_moment_oracle():
    g = make_grid(16, 1024)
    from roughwave.field import WaveFunction

    s = 3.0
    f = WaveFunction(g, np.exp(-((g.x - 5.0) ** 2) / (4 * s * s)))
    # |f|^2 is a Gaussian of variance s^2
    assert second_moment(f) == pytest.approx(s * s, rel=1e-10)


def test_scan_k_small(tmp_path):
    g = make_grid(8, 256)
    V = build_cosine_resonant(g, 0.5, moving=True)
    f = low_frequency_profile(g, g.L)
    assert l2_norm(f) == pytest.approx(1.0)
    r = scan_k(f, V, (0.3, 0.8), 9, horizon=20.0)
    assert len(r.deviation) == 9 and r.ks[0] == 0.3 and r.peak in r.ks
    assert 0 <= r.resonant_fraction <= 1
    path = tmp_path / "s.csv"
    write_scan_csv(path, r)
    assert path.read_text().splitlines()[0] == "k,deviation"
    with pytest.raises(ValueError):
        scan_k(f, V, n_k=5)
    with pytest.raises(ValueError):
        scan_k(f, V, (0.8, 0.3), 9)
