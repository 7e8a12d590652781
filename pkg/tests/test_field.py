import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from roughwave.field import (
    WaveFunction, default_samples, from_spectrum, l2_norm, make_grid, mass_in_region, project_band,
    project_high, read_snapshot, snapshot_bytes, spectral_norm_squared, to_spectrum, wrap_mass, write_snapshot,
)
from conftest import random_state


def test_grid_spacing():
    g = make_grid(64, 1024)
    assert g.dx == pytest.approx(0.39269908169872414, rel=1e-15)
    assert g.dx * g.M == pytest.approx(2 * math.pi * 64, rel=1e-15)
    assert g.kappa == 8.0


def test_grid_modes_small():
    g = make_grid(1, 8)
    assert list(g.modes) == [-4, -3, -2, -1, 0, 1, 2, 3]


@pytest.mark.parametrize("T, M", [(64, 7), (64, 4), (0, 16), (-1, 16), (64, 1000)])
def test_grid_rejects(T, M):
    with pytest.raises(ValueError):
        make_grid(T, M)


def test_default_samples():
    assert default_samples(10) == 1024
    assert default_samples(100) == 2048
    assert default_samples(256) == 4096


def test_wavefunction_shape_checked(grid64):
    with pytest.raises(ValueError):
        WaveFunction(grid64, np.zeros(10))


def test_values_are_read_only(grid64):
    f = WaveFunction(grid64, np.zeros(grid64.M))
    with pytest.raises(ValueError):
        f.values[0] = 1


def test_pure_mode_spectrum(grid64):
    f = WaveFunction(grid64, grid64.plane_wave(3))
    spec = to_spectrum(f)
    peak = np.argmax(np.abs(spec))
    assert grid64.mode_numbers[peak] == 3
    rest = np.delete(np.abs(spec), peak)
    assert rest.max() < 1e-10 * abs(spec[peak])
    # unitary convention: |f_hat_m| = sqrt(2 pi) T for a unit-amplitude mode
    assert abs(spec[peak]) == pytest.approx(math.sqrt(2 * math.pi) * grid64.T, rel=1e-12)


def test_zero_spectrum(grid64):
    f = WaveFunction(grid64, np.zeros(grid64.M))
    assert np.all(to_spectrum(f) == 0)


@given(st.integers(0, 2**31 - 1))
def test_round_trip_and_parseval(seed):
    g = make_grid(16, 256)
    f = random_state(g, seed)
    spec = to_spectrum(f)
    back = from_spectrum(g, spec)
    assert np.linalg.norm(back.values - f.values) <= 1e-12 * np.linalg.norm(f.values)
    # oracle: direct Riemann sum of |f|^2
    direct = float(np.sum(np.abs(f.values) ** 2) * g.dx)
    assert spectral_norm_squared(g, spec) == pytest.approx(direct, rel=1e-12)


def test_project_band_on_mode(grid64):
    f = WaveFunction(grid64, grid64.plane_wave(3))
    inside = project_band(f, [(2.5 / 64, 3.5 / 64)])
    assert np.allclose(inside.values, f.values, atol=1e-12)
    outside = project_band(f, [(4.5 / 64, 9 / 64)])
    assert np.abs(outside.values).max() < 1e-12


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 2.0), st.floats(0.01, 2.0))
def test_project_band_properties(seed, a, w):
    g = make_grid(16, 256)
    f = random_state(g, seed)
    E = [(a, a + w), (-a - w, -a)]
    p = project_band(f, E)
    q = project_band(f, E, complement=True)
    assert np.allclose(p.values + q.values, f.values, atol=1e-12)
    assert np.allclose(project_band(p, E).values, p.values, atol=1e-12)
    assert l2_norm(p) <= l2_norm(f) * (1 + 1e-12)
    # self-adjoint on the grid inner product
    h = random_state(g, seed + 1)
    lhs = np.vdot(h.values, p.values)
    rhs = np.vdot(project_band(h, E).values, f.values)
    assert abs(lhs - rhs) < 1e-10


def test_project_high(grid64):
    f = WaveFunction(grid64, grid64.plane_wave(2) + grid64.plane_wave(40))
    hi = project_high(f, 0.5)
    assert np.allclose(hi.values, grid64.plane_wave(40), atol=1e-12)


def test_norm_of_constant(grid64):
    f = WaveFunction(grid64, np.full(grid64.M, 1 / math.sqrt(grid64.L)))
    assert l2_norm(f) == pytest.approx(1.0, abs=1e-12)
    assert l2_norm(WaveFunction(grid64, np.zeros(grid64.M))) == 0.0


def test_mass_in_half_domain(grid64):
    # oracle: f = 1 on [0, pi T) and 0 elsewhere has mass exactly pi T on that half
    v = (grid64.x >= 0).astype(float)
    f = WaveFunction(grid64, v)
    total = l2_norm(f) ** 2
    half = mass_in_region(f, 0.0, math.pi * grid64.T - grid64.dx / 2)
    assert half / total == pytest.approx(1.0, abs=1e-12)
    assert mass_in_region(f, 1.0, 1.0) == 0.0


def test_mass_wraps(grid64):
    f = random_state(grid64, 3)
    L = grid64.L
    a, b = 0.4 * L - 1.0, 0.4 * L + 20.0
    wrapped = mass_in_region(f, a, b)
    assert 0 <= wrapped <= l2_norm(f) ** 2
    assert mass_in_region(f, -math.pi * 64, math.pi * 64 * 3) == pytest.approx(l2_norm(f) ** 2)


def test_wrap_mass_of_centred_bump(grid64):
    f = WaveFunction(grid64, np.exp(-grid64.x**2 / 50))
    assert wrap_mass(f) < 1e-12


def test_snapshot_round_trip(tmp_path, grid64):
    f = random_state(grid64, 5).replace(time_tag=1.25, k=2.5)
    path = tmp_path / "s.rwav"
    write_snapshot(path, f)
    g = read_snapshot(path)
    assert g.grid.T == 64 and g.grid.M == 1024 and g.k == 2.5 and g.time_tag == 1.25
    assert np.array_equal(g.values, f.values)
    data = snapshot_bytes(f)
    assert data[:4] == b"RWAV" and len(data) == 4 + 4 + 8 + 24 + 16 * 1024


def test_snapshot_bad_magic(tmp_path):
    path = tmp_path / "bad.rwav"
    path.write_bytes(b"XXXX" + bytes(40))
    with pytest.raises(ValueError):
        read_snapshot(path)
