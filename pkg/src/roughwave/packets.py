"""Wave-packet frame at spatial scale kappa = sqrt(T), and tube geometry.

A packet is omega_{n,l}(x) = h_n(x) exp(i l eta x / kappa) with
h_n(x) = kappa^(-1/2) h((x - 2 pi kappa n) / kappa).  The squared window
translates sum to one, so analysis followed by synthesis is the identity
and the coefficients obey the exact Plancherel relation

    sum |f*_{n,l}|^2 = (eta / 2 pi) ||f||^2.

Coefficients are the continuous integrals against the trigonometric
interpolant of the samples.  They are evaluated by the trapezoid rule on
an FFT-upsampled grid, which is exact up to the window's Fourier tail.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._smooth import mollified_indicator
from .field import Grid, WaveFunction

# support of h is [0, 4 pi]
WINDOW_LENGTH = 4 * math.pi
# frequency (in units of 1/kappa) past which the window spectrum is negligible
_WINDOW_BAND = 40.0
_UPSAMPLE = 2
# cube index bounds relative to kappa: |p| < C1 kappa, C2 kappa < q <= kappa
CUBE_P_FRACTION = 0.5
CUBE_Q_FRACTION = 0.25
DEFAULT_TUBE_C = 4.0


@dataclass(frozen=True)
class Window:
    """The square root of a mollified indicator of [pi, 3pi] with support [0, 4pi]."""

    kappa: float = 1.0

    def h(self, s) -> np.ndarray:
        g = mollified_indicator(s, math.pi, 3 * math.pi, math.pi)
        return np.sqrt(np.clip(g, 0.0, None))

    def h_n(self, x, n: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.h((x - 2 * math.pi * self.kappa * n) / self.kappa) / math.sqrt(self.kappa)

    def partition_sum(self, s, span: int = 4) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        base = np.floor(s / (2 * math.pi)).astype(int)
        total = np.zeros_like(s)
        for j in range(-span, span + 1):
            total += self.h(s - 2 * math.pi * (base + j)) ** 2
        return total


def build_window(kappa: float = 1.0) -> Window:
    return Window(float(kappa))


@dataclass(frozen=True)
class PacketCoefficients:
    """Analysis coefficients f_{n,l}(eta) on a rectangular index range.

    ``table[i, j]`` holds f_{n,l} for n = n_values[i], l = ell_values[j].
    """

    grid: Grid
    k: float
    n_values: np.ndarray
    ell_values: np.ndarray
    table: np.ndarray
    discarded_mass: float = 0.0

    @property
    def eta(self) -> float:
        return 1.0 / self.k

    @property
    def kappa(self) -> float:
        return self.grid.kappa

    def _phase(self) -> np.ndarray:
        # f_{n,l} = exp(-2 pi i eta n l) f*_{n,l}
        return np.exp(-2j * math.pi * self.eta * np.outer(self.n_values, self.ell_values))

    def star(self) -> np.ndarray:
        return self.table / self._phase()

    def total_mass(self) -> float:
        return float(np.sum(np.abs(self.table) ** 2))

    def get(self, n: int, ell: int) -> complex:
        i = np.searchsorted(self.n_values, n)
        j = np.searchsorted(self.ell_values, ell)
        if i >= len(self.n_values) or self.n_values[i] != n or j >= len(self.ell_values) or self.ell_values[j] != ell:
            return 0j
        return complex(self.table[i, j])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "ell", "re", "im", "abs"])
            for i, n in enumerate(self.n_values):
                for j, ell in enumerate(self.ell_values):
                    c = self.table[i, j]
                    w.writerow([int(n), int(ell), f"{c.real:.17g}", f"{c.imag:.17g}", f"{abs(c):.17g}"])


def window_indices(grid: Grid) -> np.ndarray:
    """Windows n with 2 pi kappa n in [-pi T, pi T); they tile the torus."""
    kappa = grid.kappa
    count = int(round(kappa))
    if abs(count - kappa) > 1e-9 * kappa:
        raise ValueError(f"windows of length 2*pi*kappa tile the torus only for integer kappa, got {kappa}")
    if count < 3:
        raise ValueError("kappa must be at least 3 so that windows do not overlap themselves")
    lo = -(count // 2)
    return np.arange(lo, lo + count)


def full_ell_range(grid: Grid, k: float) -> np.ndarray:
    """Packet frequencies covering the grid band plus the window's spectral spread."""
    kappa = grid.kappa
    reach = grid.nyquist + _WINDOW_BAND / kappa
    top = int(math.ceil(reach * kappa * k))
    return np.arange(-top, top + 1)


def _check_k(k: float) -> None:
    if not 2.0 <= k <= 4.0:
        raise ValueError(f"k must lie in [2, 4] (rescale first), got {k}")


def _upsample(grid: Grid, values: np.ndarray, factor: int) -> np.ndarray:
    """Trigonometric interpolant on a grid ``factor`` times finer; values has shape (M, batch)."""
    M = grid.M
    spec = np.fft.fft(values, axis=0)
    padded = np.zeros((M * factor,) + values.shape[1:], dtype=complex)
    half = M // 2
    padded[:half] = spec[:half]
    padded[-half:] = spec[half:]
    return np.fft.ifft(padded, axis=0) * factor


def analyze_many(grid: Grid, values: np.ndarray, k: float, ell_values: Sequence[int] | None = None):
    """Analysis of a batch ``values`` of shape (M, batch).

    Returns (n_values, ell_values, f_star) with f_star of shape (n, l, batch).
    """
    _check_k(k)
    values = np.asarray(values, dtype=complex)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != grid.M:
        raise ValueError("sample count does not match the grid")
    kappa = grid.kappa
    eta = 1.0 / k
    n_values = window_indices(grid)
    ells = full_ell_range(grid, k) if ell_values is None else np.asarray(ell_values, dtype=int)
    omega = ells * eta / kappa
    fine = _upsample(grid, values, _UPSAMPLE)
    dxf = grid.dx / _UPSAMPLE
    xf = -math.pi * grid.T + dxf * np.arange(grid.M * _UPSAMPLE)
    window = Window(kappa)
    out = np.zeros((len(n_values), len(ells), values.shape[1]), dtype=complex)
    scale = eta / (2 * math.pi * math.sqrt(kappa))
    for i, n in enumerate(n_values):
        s = np.mod(xf - 2 * math.pi * kappa * n, grid.L)
        inside = s < WINDOW_LENGTH * kappa
        s_in = s[inside]
        weights = window.h(s_in / kappa) * dxf
        E = np.exp(-1j * np.outer(omega, s_in))
        out[i] = scale * (E @ (weights[:, None] * fine[inside]))
    return n_values, ells, out


def analyze(f: WaveFunction, k: float, ell_values: Sequence[int] | None = None) -> PacketCoefficients:
    n_values, ells, star = analyze_many(f.grid, f.values, k, ell_values)
    eta = 1.0 / k
    phase = np.exp(-2j * math.pi * eta * np.outer(n_values, ells))
    return PacketCoefficients(f.grid, float(k), n_values, ells, star[:, :, 0] * phase)


def synthesize(coeffs: PacketCoefficients, time_tag: float = 0.0) -> WaveFunction:
    grid = coeffs.grid
    kappa = grid.kappa
    omega = coeffs.ell_values * coeffs.eta / kappa
    star = coeffs.star()
    window = Window(kappa)
    values = np.zeros(grid.M, dtype=complex)
    for i, n in enumerate(coeffs.n_values):
        s = np.mod(grid.x - 2 * math.pi * kappa * n, grid.L)
        inside = s < WINDOW_LENGTH * kappa
        s_in = s[inside]
        series = np.exp(1j * np.outer(s_in, omega)) @ star[i]
        values[inside] += window.h(s_in / kappa) / math.sqrt(kappa) * series
    return WaveFunction(grid, values, time_tag, coeffs.k)


def packet(grid: Grid, n: int, ell: int, k: float) -> WaveFunction:
    """omega_{n,l} sampled directly; off-lattice frequencies are not snapped."""
    kappa = grid.kappa
    s = np.mod(grid.x - 2 * math.pi * kappa * n, grid.L)
    x_lift = 2 * math.pi * kappa * n + s
    env = Window(kappa).h(s / kappa) / math.sqrt(kappa)
    return WaveFunction(grid, env * np.exp(1j * ell * x_lift / (k * kappa)), 0.0, k)


def truncate(coeffs: PacketCoefficients, delta: float, C: float = DEFAULT_TUBE_C) -> PacketCoefficients:
    """Keep |n| <= 2 kappa and |l| <= C delta kappa.

    The discarded mass is reported in L2 units, i.e. scaled by 2 pi / eta.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    kappa = coeffs.kappa
    keep_n = np.abs(coeffs.n_values) <= 2 * kappa
    keep_l = np.abs(coeffs.ell_values) <= C * delta * kappa + 1e-12
    kept = coeffs.table[np.ix_(keep_n, keep_l)]
    dropped = coeffs.total_mass() - float(np.sum(np.abs(kept) ** 2))
    return PacketCoefficients(
        coeffs.grid,
        coeffs.k,
        coeffs.n_values[keep_n],
        coeffs.ell_values[keep_l],
        kept,
        coeffs.discarded_mass + max(dropped, 0.0) * 2 * math.pi / coeffs.eta,
    )


# ---------------------------------------------------------------- tubes

FORWARD = "forward"
BACKWARD = "backward"


@dataclass(frozen=True)
class Tube:
    """Space-time slab |x - 2 pi (n+1) kappa - 2 (t - t_anchor) alpha| < 2 pi kappa.

    Forward tubes are anchored at t = 0, backward tubes at t = 2 pi T.
    """

    orientation: str
    n: int
    ell: int
    kappa: float

    def __post_init__(self):
        if self.orientation not in (FORWARD, BACKWARD):
            raise ValueError(f"unknown orientation {self.orientation!r}")

    @property
    def alpha(self) -> float:
        return self.ell / self.kappa

    @property
    def anchor(self) -> float:
        """Anchor time in units of 2 pi kappa."""
        return 0.0 if self.orientation == FORWARD else self.kappa

    def centre(self, tau):
        """Centreline position in units of 2 pi kappa at scaled time tau = t / (2 pi kappa)."""
        return self.n + 1 + 2 * self.alpha * (np.asarray(tau, dtype=float) - self.anchor)

    def contains(self, x, t) -> np.ndarray:
        scale = 2 * math.pi * self.kappa
        u = np.asarray(x, dtype=float) / scale
        tau = np.asarray(t, dtype=float) / scale
        in_time = np.abs(tau - self.anchor) < self.kappa
        return (np.abs(u - self.centre(tau)) < 1) & in_time


def tube_of(n: int, ell: int, orientation: str, kappa: float) -> Tube:
    return Tube(orientation, int(n), int(ell), float(kappa))


def _cube_gap(n, alpha, anchor, p, q):
    # offset of the cube corners from the centreline, min and max
    g1 = p - (n + 1 + 2 * alpha * (q - anchor))
    g2 = p - (n + 1 + 2 * alpha * (q + 1 - anchor))
    lo = np.minimum(g1, g2)
    hi = np.maximum(g1, g2) + 1
    return lo, hi


def incidence(n, alpha, anchor, p, q, kappa) -> np.ndarray:
    """Vectorised exact test: does the open slab meet the closed cube [p,p+1]x[q,q+1]?"""
    lo, hi = _cube_gap(np.asarray(n, float), np.asarray(alpha, float), anchor, p, q)
    in_time = (q + 1 > anchor - kappa) & (q < anchor + kappa)
    return (lo < 1) & (hi > -1) & in_time


def intersects(tube: Tube, p: int, q: int) -> bool:
    return bool(incidence(tube.n, tube.alpha, tube.anchor, p, q, tube.kappa))


def check_cube(p: int, q: int, kappa: float) -> None:
    if not (abs(p) < CUBE_P_FRACTION * kappa and CUBE_Q_FRACTION * kappa < q <= kappa):
        raise ValueError(f"cube ({p}, {q}) lies outside the potential's support region for kappa={kappa}")


def tubes_through_cube(p: int, q: int, orientation: str, tubes: Iterable[Tube]) -> list[Tube]:
    tubes = list(tubes)
    if not tubes:
        return []
    check_cube(p, q, tubes[0].kappa)
    return [t for t in tubes if t.orientation == orientation and intersects(t, p, q)]


def forward_tubes(kappa: float, delta: float, C: float = DEFAULT_TUBE_C) -> list[Tube]:
    """Admissible forward set: |n| <= 2 kappa, |alpha| <= C delta."""
    nmax = int(math.floor(2 * kappa))
    lmax = int(math.floor(C * delta * kappa + 1e-12))
    return [tube_of(n, l, FORWARD, kappa) for n in range(-nmax, nmax + 1) for l in range(-lmax, lmax + 1)]


def backward_tubes(kappa: float, alpha_min: float, alpha_max: float, C: float = DEFAULT_TUBE_C) -> list[Tube]:
    """Admissible backward set: |n| <= C kappa, alpha_min <= alpha <= alpha_max."""
    nmax = int(math.floor(C * kappa))
    lo = int(math.ceil(alpha_min * kappa - 1e-12))
    hi = int(math.floor(alpha_max * kappa + 1e-12))
    return [tube_of(n, l, BACKWARD, kappa) for n in range(-nmax, nmax + 1) for l in range(lo, hi + 1)]


def tubes_per_direction_bound(alpha: float, orientation: str, kappa: float) -> int:
    """Exact geometric maximum of same-slope tubes meeting one cube.

    The slab has width 2 and the cube's shadow along the slope has width
    1 + 2|alpha|, so at most 3 + 2|alpha| consecutive base indices fit.
    """
    return int(math.floor(3 + 2 * abs(alpha))) + 1


def write_tube_csv(path, tubes: Iterable[Tube]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["orientation", "n", "ell", "alpha"])
        for t in tubes:
            w.writerow([t.orientation, t.n, t.ell, f"{t.alpha:.17g}"])
