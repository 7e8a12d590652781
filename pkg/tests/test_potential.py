import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad
from scipy.special import j0

from roughwave._smooth import mollified_indicator, smooth_step
from roughwave.field import make_grid
from roughwave.potential import (
    UPSILON_C, build_bump_lattice, build_cosine_resonant, build_trap, bump_lattice_indices, bump_profile, cutter,
    frequency_split, from_function, from_samples, lattice_bump, random_smooth_potential, space_time_samples,
    sparsify, upsilon_tail, window_cells, zero_potential,
)


def test_smooth_step_limits():
    assert smooth_step(-1.0) == 0.0 and smooth_step(2.0) == 1.0
    assert smooth_step(0.5) == pytest.approx(0.5, abs=1e-15)


@given(st.floats(-3, 3))
def test_smooth_step_symmetry(x):
    assert smooth_step(x) + smooth_step(1 - x) == pytest.approx(1.0, abs=1e-12)


def test_mollified_indicator_plateau():
    x = np.array([-2.0, -1.0, 0.0, 0.75, 1.0, 1.3])
    v = mollified_indicator(x, -1.0, 1.0, 0.25)
    assert v[0] == 0 and v[-1] == 0
    assert v[2] == 1 and v[3] == 1
    assert v[1] == pytest.approx(0.5) and v[4] == pytest.approx(0.5)


def test_zero_potential():
    g = make_grid(8, 256)
    V = zero_potential(g)
    assert V.is_zero() and np.all(V.at(3.0) == 0) and V.sup_bound == 0


def test_cosine_resonant_values():
    g = make_grid(16, 512)
    V = build_cosine_resonant(g, 0.75, moving=True)
    t = 1.3
    assert np.allclose(V.at(t), 16 ** -0.75 * np.cos(2 * g.x + 2 * t), atol=1e-15)
    S = build_cosine_resonant(g, 0.75, moving=False)
    assert S.static and np.allclose(S.at(5.0), 16 ** -0.75 * np.cos(2 * g.x))


def test_cosine_uses_scale_T():
    g = make_grid(16, 512)
    V = build_cosine_resonant(g, 0.5, moving=False, scale_T=2 * math.pi * 16)
    assert V.amplitude == pytest.approx((2 * math.pi * 16) ** -0.5)
    assert V.horizon == pytest.approx(2 * math.pi * 2 * math.pi * 16)


def test_cosine_requires_2pi_domain():
    with pytest.raises(ValueError):
        build_cosine_resonant(make_grid(16.5, 512), 0.5, moving=False)


def test_trap_shape():
    g = make_grid(256, 4096)
    V = build_trap(g, 0.8, 30.0)
    alpha = 256 ** -0.4
    v = V.at(0.0)
    centre = np.argmin(np.abs(g.x))
    assert v[centre] == pytest.approx(-30 * alpha**2)
    assert np.all(v[np.abs(g.x) > 1 / alpha] == 0)
    assert V.sup_bound == pytest.approx(30 * 256 ** -0.8)


def test_trap_rejects_bad_profile():
    g = make_grid(16, 256)
    with pytest.raises(ValueError):
        build_trap(g, 0.8, 1.0, q_profile=lambda s: np.ones_like(s))
    with pytest.raises(ValueError):
        build_trap(g, 0.8, 1.0, q_profile=lambda s: -np.exp(-s * s))


def test_from_samples_interpolates():
    g = make_grid(4, 64)
    times = np.linspace(0, 10, 21)
    samples = np.array([np.cos(g.x) * (1 + 0.1 * t) for t in times])
    V = from_samples(g, times, samples, 1.0)
    assert np.allclose(V.at(3.3), np.cos(g.x) * 1.33, atol=1e-12)
    with pytest.raises(ValueError):
        from_samples(g, times, samples[:, :10], 1.0)


@given(st.integers(0, 10_000), st.floats(0.01, 1.0))
def test_random_smooth_sup(seed, sup):
    g = make_grid(8, 256)
    V = random_smooth_potential(g, sup, seed=seed)
    assert V.measured_sup(np.linspace(0, 30, 16)) <= sup * (1 + 1e-12)
    assert np.isrealobj(V.at(1.0))


def test_bump_lattice_indices_oracle():
    # brute force over a generous box
    for T in (2 * math.pi * 32, 2 * math.pi * 128, 1000.0):
        kappa = math.sqrt(T)
        expect = [
            (n, m) for n in range(-50, 51) for m in range(0, 200)
            if abs(2 * math.pi * n * kappa) < T / 4 and abs(2 * math.pi * m * kappa - math.pi * T) < T / 20
        ]
        assert bump_lattice_indices(T) == expect
    assert bump_lattice_indices(2 * math.pi * 32) == [(0, 7)]
    assert bump_lattice_indices(2 * math.pi * 128) == [(-1, 14), (0, 14), (1, 14)]


def test_bump_profile_oracle():
    def chi(rho):
        return float(mollified_indicator(np.array([rho]), -0.5, 0.5, 0.5)[0])

    norm = quad(lambda r: chi(r) * r, 0, 1, limit=200)[0]
    for r in (1.0, 3.0, 10.0):
        exact = quad(lambda p: chi(p) * j0(r * p) * p, 0, 1, limit=200)[0] / norm
        assert bump_profile([r])[0] == pytest.approx(exact, abs=1e-6)
    assert bump_profile([0.0])[0] == pytest.approx(1.0)
    assert bump_profile([500.0])[0] == 0.0


def test_bump_lattice_validation():
    g = make_grid(2 * math.pi * 32, 1024)
    with pytest.raises(ValueError):
        build_bump_lattice(g, 0.9, coeffs={(5, 5): 0.5})
    with pytest.raises(ValueError):
        build_bump_lattice(g, 0.9, coeffs={(0, 7): 1.5})
    with pytest.raises(ValueError):
        build_bump_lattice(g, 0.9, coeffs={(0, 7): 0.5}, directions={(0, 7): (3.0, 0.0)})


def test_bump_lattice_amplitude_and_tail():
    g = make_grid(2 * math.pi * 32, 1024)
    V = build_bump_lattice(g, 0.9, coeffs={(0, 7): 1.0}, directions={(0, 7): (1.0, 0.0)})
    kappa = g.kappa
    tc = 2 * math.pi * 7 * kappa
    # at the bump centre the potential is T^-gamma cos(lam x) to within the profile
    assert np.abs(V.at(tc)).max() == pytest.approx(g.T ** -0.9, rel=1e-3)
    assert V.at(tc + 200 * kappa).max() == 0
    assert 0 <= upsilon_tail(V) < 0.05
    assert UPSILON_C * g.T < tc


def test_cutter_partition():
    u = np.linspace(-2, 3, 1001)
    total = sum(cutter(u - p) for p in range(-4, 5))
    assert np.allclose(total, 1.0, atol=1e-12)


def test_lattice_bump_partition():
    u = np.linspace(-3, 3, 1001)
    total = sum(lattice_bump(u - n) for n in range(-6, 7))
    assert np.allclose(total, 1.0, atol=1e-12)


@pytest.fixture(scope="module")
def cells():
    g = make_grid(64, 1024)
    V = random_smooth_potential(g, 64 ** -0.75, band=0.5, seed=4, gamma=0.75)
    times, samples = space_time_samples(V)
    return window_cells(V, times, samples), samples


def test_window_cells_resum(cells):
    dec, samples = cells
    assert np.abs(dec.resum() - samples).max() < 1e-14
    assert (0, 0) in dec.cells


def test_window_cells_rejects_coarse_time():
    g = make_grid(64, 1024)
    V = random_smooth_potential(g, 0.1)
    with pytest.raises(ValueError):
        window_cells(V, times=np.linspace(0, V.horizon, 10))


def test_sparsify(cells):
    dec, _ = cells
    sub = sparsify(dec, 2, 1, 0)
    assert sub.cells and all(p % 2 == 1 and q % 2 == 0 for p, q in sub.cells)
    total = sum(len(sparsify(dec, 2, a, b).cells) for a in range(2) for b in range(2))
    assert total == len(dec.cells)
    with pytest.raises(ValueError):
        sparsify(dec, 2, 2, 0)


def test_frequency_split(cells):
    dec, _ = cells
    split = frequency_split(dec, 0.2)
    for key in list(dec.cells)[:4]:
        assert split.reconstruction_error(key) < 1e-12
        bound, total = split.chebyshev_margin(key)
        assert bound <= total
        omega = split.cells[key].omega
        assert all(a[1] >= b[1] for a, b in zip(omega, omega[1:]))
        assert split.low_spectrum_sup(key) <= split.threshold * (1 + 1e-9) or not omega
    with pytest.raises(ValueError):
        frequency_split(dec, 0.6)
    key = next(iter(dec.cells))
    assert np.all(split.piece(key, 10_000) == 0)
    with pytest.raises(ValueError):
        split.piece(key, 0)


def test_from_function_time_support():
    g = make_grid(4, 64)
    V = from_function(g, lambda x, t: np.ones_like(x), 1.0, time_support=(1.0, 2.0))
    assert np.all(V.at(0.5) == 0) and np.all(V.at(1.5) == 1)
