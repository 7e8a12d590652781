"""Periodic grid, wave functions and the spectral transform.

The torus is R / 2*pi*T*Z sampled at M points starting from x = -pi*T.
Modes are xi_m = m / T for m in [-M/2, M/2).  The spectrum uses the
unitary convention (2*pi)^(-1/2) * int f(x) exp(-i x xi) dx, so that
sum_m |f_hat_m|^2 / T equals the L2 norm squared of f.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SNAPSHOT_MAGIC = b"RWAV"
SNAPSHOT_VERSION = 1


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def default_samples(T: float) -> int:
    """Smallest power of two >= max(1024, 16*T)."""
    target = max(1024, int(math.ceil(16 * T)))
    return 1 << (target - 1).bit_length()


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on R / 2*pi*T*Z."""

    T: float
    M: int
    x: np.ndarray = field(init=False, repr=False, compare=False)
    xi: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if not isinstance(self.M, (int, np.integer)) or not _is_power_of_two(int(self.M)):
            raise ValueError(f"M must be a power of two, got {self.M}")
        if self.M < 8:
            raise ValueError(f"M must be at least 8, got {self.M}")
        x = -math.pi * self.T + self.dx * np.arange(self.M)
        # FFT ordering; use `modes` for the ascending order
        xi = np.fft.fftfreq(self.M, d=1.0 / self.M) / self.T
        x.setflags(write=False)
        xi.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)

    @property
    def L(self) -> float:
        return 2 * math.pi * self.T

    @property
    def dx(self) -> float:
        return 2 * math.pi * self.T / self.M

    @property
    def kappa(self) -> float:
        return math.sqrt(self.T)

    @property
    def mode_numbers(self) -> np.ndarray:
        return np.arange(-self.M // 2, self.M // 2)

    @property
    def modes(self) -> np.ndarray:
        """Mode frequencies xi_m = m/T in ascending order."""
        return self.mode_numbers / self.T

    @property
    def nyquist(self) -> float:
        return self.M / (2 * self.T)

    def plane_wave(self, m: int) -> np.ndarray:
        return np.exp(1j * (m / self.T) * self.x)


def make_grid(T: float, M: int) -> Grid:
    return Grid(float(T), int(M))


@dataclass(frozen=True)
class WaveFunction:
    grid: Grid
    values: np.ndarray
    time_tag: float = 0.0
    k: float = 1.0

    def __post_init__(self):
        values = np.array(self.values, dtype=complex)
        if values.shape != (self.grid.M,):
            raise ValueError(f"expected {self.grid.M} samples, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def eta(self) -> float:
        return 1.0 / self.k

    def replace(self, values=None, time_tag=None, k=None) -> "WaveFunction":
        return WaveFunction(
            self.grid,
            self.values if values is None else values,
            self.time_tag if time_tag is None else time_tag,
            self.k if k is None else k,
        )


def _phase(grid: Grid) -> np.ndarray:
    # the grid starts at -pi*T, not at 0
    return np.exp(1j * grid.xi * math.pi * grid.T)


def fft_coefficients(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Unitary spectrum in FFT order (internal fast path)."""
    return np.fft.fft(values) * _phase(grid) * (grid.dx / math.sqrt(2 * math.pi))


def from_fft_coefficients(grid: Grid, spec: np.ndarray) -> np.ndarray:
    return np.fft.ifft(spec / _phase(grid)) * (math.sqrt(2 * math.pi) / grid.dx)


def to_spectrum(f: WaveFunction) -> np.ndarray:
    """Spectrum indexed by ascending mode number m in [-M/2, M/2)."""
    return np.fft.fftshift(fft_coefficients(f.grid, f.values))


def from_spectrum(grid: Grid, spectrum: np.ndarray, time_tag: float = 0.0, k: float = 1.0) -> WaveFunction:
    spec = np.fft.ifftshift(np.asarray(spectrum, dtype=complex))
    return WaveFunction(grid, from_fft_coefficients(grid, spec), time_tag, k)


def spectral_norm_squared(grid: Grid, spectrum: np.ndarray) -> float:
    return float(np.sum(np.abs(spectrum) ** 2) / grid.T)


def _band_mask(freqs: np.ndarray, intervals: Iterable[Sequence[float]]) -> np.ndarray:
    mask = np.zeros(freqs.shape, dtype=bool)
    for a, b in intervals:
        mask |= (freqs >= a) & (freqs <= b)
    return mask


def project_band(f: WaveFunction, intervals: Iterable[Sequence[float]], complement: bool = False) -> WaveFunction:
    """Fourier projection onto a union of closed frequency intervals."""
    mask = _band_mask(f.grid.xi, intervals)
    if complement:
        mask = ~mask
    spec = fft_coefficients(f.grid, f.values) * mask
    return f.replace(values=from_fft_coefficients(f.grid, spec))


def project_high(f: WaveFunction, delta: float) -> WaveFunction:
    """P_{|xi| > delta}."""
    mask = np.abs(f.grid.xi) > delta
    spec = fft_coefficients(f.grid, f.values) * mask
    return f.replace(values=from_fft_coefficients(f.grid, spec))


def l2_norm(f: WaveFunction) -> float:
    return norm_of(f.grid, f.values)


def norm_of(grid: Grid, values: np.ndarray) -> float:
    return math.sqrt(float(np.sum(np.abs(values) ** 2)) * grid.dx)


def mass_in_region(f: WaveFunction, a: float, b: float) -> float:
    """Riemann-sum mass of |f|^2 over [a, b] read on the torus.

    The interval may wrap around the domain; a == b gives 0.
    """
    if a == b:
        return 0.0
    grid = f.grid
    if b - a >= grid.L:
        return float(np.sum(np.abs(f.values) ** 2) * grid.dx)
    # distance from a going forward around the circle
    offset = np.mod(grid.x - a, grid.L)
    inside = offset <= (b - a)
    return float(np.sum(np.abs(f.values[inside]) ** 2) * grid.dx)


def wrap_mass(f: WaveFunction, fraction: float = 0.05) -> float:
    """Mass within ``fraction`` of the domain length from the seam at +-pi*T."""
    grid = f.grid
    edge = (0.5 - fraction) * grid.L
    return float(np.sum(np.abs(f.values[np.abs(grid.x) > edge]) ** 2) * grid.dx)


def snapshot_bytes(f: WaveFunction) -> bytes:
    header = SNAPSHOT_MAGIC + struct.pack("<IQddd", SNAPSHOT_VERSION, f.grid.M, f.grid.T, f.k, f.time_tag)
    body = np.empty(2 * f.grid.M, dtype="<f8")
    body[0::2] = f.values.real
    body[1::2] = f.values.imag
    return header + body.tobytes()


def write_snapshot(path, f: WaveFunction) -> None:
    with open(path, "wb") as fh:
        fh.write(snapshot_bytes(f))


def read_snapshot(path) -> WaveFunction:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != SNAPSHOT_MAGIC:
        raise ValueError("not an RWAV snapshot")
    version, M, T, k, time_tag = struct.unpack_from("<IQddd", data, 4)
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    offset = 4 + struct.calcsize("<IQddd")
    body = np.frombuffer(data, dtype="<f8", count=2 * M, offset=offset)
    grid = make_grid(T, int(M))
    return WaveFunction(grid, body[0::2] + 1j * body[1::2], time_tag, k)
