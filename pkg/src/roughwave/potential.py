"""Space-time potentials and their cell and frequency decompositions."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import j0

from ._smooth import mollified_indicator
from .field import Grid

Evaluator = Callable[[np.ndarray, float], np.ndarray]

# time of the support region starts at UPSILON_C * T
UPSILON_C = math.pi / 2
CUTTER_WIDTH = 0.05
# half-width of the kernel mollifying the frequency-lattice partition
LATTICE_WIDTH = 0.25


class SpaceTimePotential:
    """V(x, t) on a grid, evaluated one time slice at a time.

    ``scale_T`` is the T in the amplitude T^(-gamma); it defaults to the
    grid's T but differs for experiments posed on a torus of length T.
    ``time_support`` is an interval outside of which V vanishes, which lets
    propagators skip ahead with exact free evolution.
    """

    def __init__(
        self,
        grid: Grid,
        evaluator: Evaluator,
        gamma: float,
        *,
        kind: str,
        scale_T: float | None = None,
        annulus: tuple[float, float] | None = None,
        is_real: bool = True,
        sup_constant: float = 1.0,
        time_support: tuple[float, float] | None = None,
        static: bool = False,
        info: Mapping | None = None,
    ):
        self.grid = grid
        self._evaluator = evaluator
        self.gamma = float(gamma)
        self.kind = kind
        self.scale_T = float(grid.T if scale_T is None else scale_T)
        self.annulus = annulus
        self.is_real = is_real
        self.sup_constant = float(sup_constant)
        self.time_support = time_support
        self.static = static
        self.info = dict(info or {})
        self._static_cache = None

    @property
    def horizon(self) -> float:
        return 2 * math.pi * self.scale_T

    @property
    def amplitude(self) -> float:
        return self.scale_T ** (-self.gamma)

    @property
    def sup_bound(self) -> float:
        return self.sup_constant * self.amplitude

    def at(self, t: float) -> np.ndarray:
        if self.static:
            if self._static_cache is None:
                v = np.asarray(self._evaluator(self.grid.x, 0.0))
                v.setflags(write=False)
                self._static_cache = v
            return self._static_cache
        if self.time_support is not None and not (self.time_support[0] <= t <= self.time_support[1]):
            return np.zeros(self.grid.M, dtype=complex if not self.is_real else float)
        return np.asarray(self._evaluator(self.grid.x, float(t)))

    def sample(self, times) -> np.ndarray:
        return np.stack([self.at(t) for t in np.asarray(times, dtype=float)])

    def measured_sup(self, times=None) -> float:
        if times is None:
            times = np.linspace(0.0, self.horizon, 257)
        return float(max(np.abs(self.at(t)).max() for t in times))

    def is_zero(self) -> bool:
        return self.kind == "zero"


def zero_potential(grid: Grid, gamma: float = 1.0) -> SpaceTimePotential:
    return SpaceTimePotential(
        grid, lambda x, t: np.zeros_like(x), gamma, kind="zero", sup_constant=0.0, static=True
    )


def from_samples(
    grid: Grid, times, samples, gamma: float, *, scale_T: float | None = None, annulus=None
) -> SpaceTimePotential:
    """Potential given on a time grid, piecewise-cubic in t."""
    times = np.asarray(times, dtype=float)
    samples = np.asarray(samples)
    if samples.shape != (len(times), grid.M):
        raise ValueError("samples must have shape (len(times), M)")
    real = not np.iscomplexobj(samples)
    spline = CubicSpline(times, samples, axis=0)
    T = grid.T if scale_T is None else scale_T
    sup = float(np.abs(samples).max()) * T**gamma

    def evaluate(x, t):
        t = min(max(t, times[0]), times[-1])
        return spline(t)

    return SpaceTimePotential(
        grid, evaluate, gamma, kind="sampled", scale_T=T, annulus=annulus, is_real=real, sup_constant=sup
    )


def from_function(
    grid: Grid, func: Evaluator, gamma: float, *, scale_T=None, is_real=True, static=False, sup_constant=1.0,
    time_support=None, annulus=None,
) -> SpaceTimePotential:
    return SpaceTimePotential(
        grid, func, gamma, kind="custom", scale_T=scale_T, is_real=is_real, static=static,
        sup_constant=sup_constant, time_support=time_support, annulus=annulus,
    )


def random_smooth_potential(
    grid: Grid, sup: float, band: float = 0.5, terms: int = 6, seed: int = 0, gamma: float = 1.0,
) -> SpaceTimePotential:
    """Real trigonometric polynomial in (x, t) scaled to the given sup.

    Spatial frequencies are lattice modes with |xi| <= band; temporal
    frequencies are drawn from [-band, band].
    """
    rng = np.random.default_rng(seed)
    mmax = max(1, int(math.floor(band * grid.T)))
    modes = rng.integers(-mmax, mmax + 1, size=terms) / grid.T
    omegas = rng.uniform(-band, band, size=terms)
    amps = rng.normal(size=terms)
    phases = rng.uniform(0, 2 * math.pi, size=terms)
    raw = float(np.sum(np.abs(amps)))
    scale = sup / raw

    def evaluate(x, t):
        return scale * np.sum(
            [a * np.cos(m * x + w * t + ph) for a, m, w, ph in zip(amps, modes, omegas, phases)], axis=0
        )

    # the sup bound counts |amps| so the stated sup is an upper bound
    return SpaceTimePotential(
        grid, evaluate, gamma, kind="random_smooth", sup_constant=sup * grid.T**gamma,
        info={"seed": seed, "time_frequency": band},
    )


# ------------------------------------------------------------ bump lattice

_PROFILE_RMAX = 160.0
_PROFILE_STEP = 0.02


@lru_cache(maxsize=1)
def _radial_profile():
    """phi(r) whose 2D transform is a radial mollified indicator of the unit ball."""
    rho = np.linspace(0.0, 1.0, 8001)
    w = np.full_like(rho, rho[1])
    w[0] = w[-1] = rho[1] / 2
    weight = mollified_indicator(rho, -0.5, 0.5, 0.5) * rho * w
    r = np.arange(0.0, _PROFILE_RMAX + _PROFILE_STEP, _PROFILE_STEP)
    vals = np.empty_like(r)
    for i in range(0, len(r), 512):
        vals[i:i + 512] = j0(np.outer(r[i:i + 512], rho)) @ weight
    vals /= vals[0]
    # taper the last few units so the truncation is smooth
    vals *= 1.0 - mollified_indicator(r, _PROFILE_RMAX, 2 * _PROFILE_RMAX, 5.0)
    return CubicSpline(r, vals), float(np.abs(vals[r > _PROFILE_RMAX - 20]).max())


def bump_profile(r) -> np.ndarray:
    """Radial bump with phi(0) = 1; zero beyond the tabulated range."""
    spline, _ = _radial_profile()
    r = np.abs(np.asarray(r, dtype=float))
    out = np.zeros_like(r)
    inside = r < _PROFILE_RMAX
    out[inside] = spline(r[inside])
    return out


def bump_lattice_indices(T: float) -> list[tuple[int, int]]:
    """(n, m) with |2 pi n kappa| < T/4 and |2 pi m kappa - pi T| < T/20."""
    kappa = math.sqrt(T)
    nmax = int(math.floor(T / (8 * math.pi * kappa))) + 1
    mc = int(round(T / (2 * kappa)))
    out = []
    for n in range(-nmax, nmax + 1):
        if not abs(2 * math.pi * n * kappa) < T / 4:
            continue
        for m in range(mc - 3, mc + 4):
            if abs(2 * math.pi * m * kappa - math.pi * T) < T / 20:
                out.append((n, m))
    return out


def build_bump_lattice(
    grid: Grid,
    gamma: float,
    coeffs: Mapping[tuple[int, int], float] | None = None,
    directions: Mapping[tuple[int, int], tuple[float, float]] | None = None,
    seed: int = 0,
) -> SpaceTimePotential:
    """T^(-gamma) sum c cos(lam x + mu t) phi_kappa(x - 2 pi n kappa, t - 2 pi m kappa)."""
    T = grid.T
    kappa = grid.kappa
    allowed = bump_lattice_indices(T)
    rng = np.random.default_rng(seed)
    if coeffs is None:
        coeffs = {key: float(rng.uniform(-1.0, 1.0)) for key in allowed}
    if directions is None:
        directions = {}
        for key in allowed:
            theta = rng.uniform(0.0, 2 * math.pi)
            directions[key] = (math.cos(theta), math.sin(theta))
    for key, c in coeffs.items():
        if tuple(key) not in allowed:
            raise ValueError(f"bump index {key} outside the admissible lattice {allowed}")
        if abs(c) > 1:
            raise ValueError(f"bump coefficient {c} exceeds 1 in magnitude")
    bumps = []
    for key, c in sorted(coeffs.items()):
        if c == 0:
            continue
        lam, mu = directions.get(key, (1.0, 0.0))
        norm = math.hypot(lam, mu)
        if not 0.25 <= norm ** 2 <= 4:
            raise ValueError(f"direction {(lam, mu)} is not of unit size")
        n, m = key
        bumps.append((float(c), lam, mu, 2 * math.pi * n * kappa, 2 * math.pi * m * kappa))
    amp = T ** (-gamma)
    L = grid.L
    reach = _PROFILE_RMAX * kappa

    def evaluate(x, t):
        out = np.zeros_like(x, dtype=float)
        for c, lam, mu, xc, tc in bumps:
            dt = t - tc
            if abs(dt) >= reach:
                continue
            # nearest-image displacement on the torus
            d = np.mod(x - xc + L / 2, L) - L / 2
            r = np.sqrt(d * d + dt * dt) / kappa
            out += c * np.cos(lam * (xc + d) + mu * t) * bump_profile(r)
        return amp * out

    if bumps:
        norms = [math.hypot(b[1], b[2]) for b in bumps]
        annulus = (min(norms) - 1 / kappa, max(norms) + 1 / kappa)
        tmin = min(b[4] for b in bumps) - reach
        tmax = max(b[4] for b in bumps) + reach
        support = (tmin, tmax)
    else:
        annulus, support = None, (0.0, 0.0)
    return SpaceTimePotential(
        grid, evaluate, gamma, kind="bump_lattice", annulus=annulus, sup_constant=max(1.0, len(bumps)),
        time_support=support, info={"bumps": len(bumps), "seed": seed},
    )


def upsilon_tail(V: SpaceTimePotential, n_times: int = 129) -> float:
    """max |V| outside the support region divided by max |V| overall."""
    grid = V.grid
    T = V.scale_T
    times = np.linspace(0.0, 2 * math.pi * T, n_times)
    inside_t = times >= UPSILON_C * T
    overall = outside = 0.0
    for t, ok in zip(times, inside_t):
        v = np.abs(V.at(t))
        overall = max(overall, float(v.max()))
        if not ok:
            outside = max(outside, float(v.max()))
    return outside / overall if overall > 0 else 0.0


# --------------------------------------------------------------- cosines

def _check_2pi_domain(grid: Grid) -> None:
    # length 2 pi T is a multiple of 2 pi iff T is an integer
    if abs(grid.T - round(grid.T)) > 1e-9 * max(1.0, grid.T):
        raise ValueError(f"domain length 2*pi*{grid.T} is not a multiple of 2*pi")


def build_cosine_resonant(
    grid: Grid, gamma: float, moving: bool, scale_T: float | None = None
) -> SpaceTimePotential:
    """T^(-gamma) cos(2x), or cos(2x + 2t) when ``moving``."""
    _check_2pi_domain(grid)
    T = grid.T if scale_T is None else scale_T
    amp = T ** (-gamma)
    if moving:
        def evaluate(x, t):
            return amp * np.cos(2 * x + 2 * t)
    else:
        def evaluate(x, t):
            return amp * np.cos(2 * x)
    return SpaceTimePotential(
        grid, evaluate, gamma, kind="cosine_moving" if moving else "cosine", scale_T=T,
        annulus=(2.0, 2 * math.sqrt(2.0)) if moving else (2.0, 2.0), static=not moving,
    )


# ------------------------------------------------------------------ trap

def default_well(s) -> np.ndarray:
    """-1 on [-1/2, 1/2], smoothly zero at |s| = 1."""
    return -mollified_indicator(s, -0.75, 0.75, 0.25)


def build_trap(
    grid: Grid, gamma: float, lambda_coupling: float, q_profile: Callable = default_well,
    scale_T: float | None = None,
) -> SpaceTimePotential:
    """V(x) = lambda alpha^2 q(alpha x) with alpha = T^(-gamma/2)."""
    T = grid.T if scale_T is None else scale_T
    probe = np.linspace(-1.5, 1.5, 3001)
    qv = np.asarray(q_profile(probe), dtype=float)
    if qv.max() > 1e-12:
        raise ValueError("trap profile must be nonpositive")
    if np.any(np.abs(qv[np.abs(probe) > 1]) > 1e-12):
        raise ValueError("trap profile must vanish outside [-1, 1]")
    alpha = T ** (-gamma / 2)
    sup_q = float(np.abs(qv).max())

    def evaluate(x, t):
        return lambda_coupling * alpha**2 * np.asarray(q_profile(alpha * x), dtype=float)

    return SpaceTimePotential(
        grid, evaluate, gamma, kind="trap", scale_T=T, static=True,
        sup_constant=abs(lambda_coupling) * sup_q,
        info={"alpha": alpha, "lambda": lambda_coupling},
    )


# ------------------------------------------------------------------ cells

def cutter(u) -> np.ndarray:
    """1D factor of the cube cutter: 1 on [0.05, 0.95], 0 outside [-0.05, 1.05]."""
    return mollified_indicator(u, 0.0, 1.0, CUTTER_WIDTH)


@dataclass
class Cell:
    p: int
    q: int
    x0: int  # first global x index of the patch
    t0: int  # first global time index of the patch
    values: np.ndarray  # (nt, nx) patch of V * phi

    @property
    def shape(self):
        return self.values.shape


@dataclass
class CellDecomposition:
    """Space-time samples of V cut into cube cells of side 2 pi kappa."""

    grid: Grid
    times: np.ndarray
    kappa: float
    cells: dict
    P: int = 1
    gamma: float = 0.0
    scale_T: float = 1.0

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def resum(self) -> np.ndarray:
        out = np.zeros((len(self.times), self.grid.M), dtype=complex)
        for cell in self.cells.values():
            nt, nx = cell.values.shape
            out[cell.t0:cell.t0 + nt, cell.x0:cell.x0 + nx] += cell.values
        return out

    def local_coordinates(self, cell: Cell):
        """Patch coordinates relative to the cube corner (2 pi kappa p, 2 pi kappa q)."""
        nt, nx = cell.values.shape
        x = self.grid.x[cell.x0:cell.x0 + nx] - 2 * math.pi * self.kappa * cell.p
        t = self.times[cell.t0:cell.t0 + nt] - 2 * math.pi * self.kappa * cell.q
        return x, t


def space_time_samples(V: SpaceTimePotential, dt: float | None = None):
    kappa = V.grid.kappa
    horizon = V.horizon
    if dt is None:
        dt = kappa / 8
    n = int(math.ceil(horizon / dt))
    times = np.linspace(0.0, horizon, n + 1)
    return times, V.sample(times)


def window_cells(V: SpaceTimePotential, times=None, samples=None) -> CellDecomposition:
    grid = V.grid
    kappa = grid.kappa
    if times is None:
        times, samples = space_time_samples(V)
    times = np.asarray(times, dtype=float)
    if samples is None:
        samples = V.sample(times)
    if len(times) < 2 or np.max(np.diff(times)) > kappa / 8 + 1e-12:
        raise ValueError(f"time sampling coarser than kappa/8 = {kappa / 8}")
    side = 2 * math.pi * kappa
    u = grid.x / side
    tau = times / side
    cells = {}
    for p in range(int(math.floor(u.min() - 0.05)), int(math.floor(u.max() + 0.05)) + 1):
        xs = np.nonzero((u > p - CUTTER_WIDTH) & (u < p + 1 + CUTTER_WIDTH))[0]
        if xs.size == 0:
            continue
        wx = cutter(u[xs] - p)
        for q in range(int(math.floor(tau.min() - 0.05)), int(math.floor(tau.max() + 0.05)) + 1):
            ts = np.nonzero((tau > q - CUTTER_WIDTH) & (tau < q + 1 + CUTTER_WIDTH))[0]
            if ts.size == 0:
                continue
            wt = cutter(tau[ts] - q)
            patch = samples[ts[0]:ts[-1] + 1, xs[0]:xs[-1] + 1] * np.outer(wt, wx)
            cells[(p, q)] = Cell(p, q, int(xs[0]), int(ts[0]), patch)
    return CellDecomposition(grid, times, kappa, cells, 1, V.gamma, V.scale_T)


def sparsify(cells: CellDecomposition, P: int, alpha: int, beta: int) -> CellDecomposition:
    """Keep cells with p = alpha and q = beta modulo P."""
    if P < 1:
        raise ValueError("P must be a positive integer")
    if not (0 <= alpha < P and 0 <= beta < P):
        raise ValueError(f"residues ({alpha}, {beta}) out of range for P={P}")
    kept = {key: c for key, c in cells.cells.items() if key[0] % P == alpha and key[1] % P == beta}
    return CellDecomposition(cells.grid, cells.times, cells.kappa, kept, P, cells.gamma, cells.scale_T)


def write_cell_spectra_csv(path, split: "FrequencySplit") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["p", "q", "n1", "n2", "abs_coeff"])
        for (p, q), cs in sorted(split.cells.items()):
            for (n1, n2), mag in cs.omega:
                w.writerow([p, q, n1, n2, f"{mag:.17g}"])


# ------------------------------------------------------- frequency split

def lattice_bump(u) -> np.ndarray:
    """1D factor of the frequency-lattice partition, supported in [-3/4, 3/4]."""
    return mollified_indicator(u, -0.5, 0.5, LATTICE_WIDTH)


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


@dataclass
class CellSpectrum:
    shape: tuple  # unpadded patch shape (nt, nx)
    spectrum: np.ndarray  # padded 2D transform, axes (t, x), FFT order
    xi_x: np.ndarray
    xi_t: np.ndarray
    sup_by_n: dict  # lattice point -> sup |V_hat * phi_hat_n|
    omega: list  # [(n, sup)] ordered by descending sup


class FrequencySplit:
    """Per-cell split V_pq = V_low + sum_s V^(s) over the kappa^-1 frequency lattice.

    The retained set Omega(p, q) holds the lattice points whose localized
    spectrum exceeds T^(1 - gamma - lambda) in sup norm, largest first with
    a lexicographic tie-break.  Pieces are built on demand.
    """

    def __init__(self, cells: CellDecomposition, lam: float):
        if not 0 < lam < 0.5:
            raise ValueError(f"lambda must lie in (0, 1/2), got {lam}")
        self.decomposition = cells
        self.lam = float(lam)
        self.kappa = cells.kappa
        self.threshold = cells.scale_T ** (1 - cells.gamma - lam)
        self.dx = cells.grid.dx
        self.dt = cells.dt
        self.cells: dict[tuple[int, int], CellSpectrum] = {}
        for key, cell in cells.cells.items():
            self.cells[key] = self._analyse(cell)

    @property
    def K(self) -> int:
        return max((len(c.omega) for c in self.cells.values()), default=0)

    def _analyse(self, cell: Cell) -> CellSpectrum:
        nt, nx = cell.values.shape
        Pt, Px = 2 * _next_pow2(nt), 2 * _next_pow2(nx)
        padded = np.zeros((Pt, Px), dtype=complex)
        padded[:nt, :nx] = cell.values
        spec = np.fft.fft2(padded) * (self.dx * self.dt / (2 * math.pi))
        xi_t = 2 * math.pi * np.fft.fftfreq(Pt, d=self.dt)
        xi_x = 2 * math.pi * np.fft.fftfreq(Px, d=self.dx)
        mag = np.abs(spec)
        sup_by_n: dict = {}
        if mag.max() > 0:
            ux = self.kappa * xi_x
            ut = self.kappa * xi_t
            rx = np.rint(ux).astype(int)
            rt = np.rint(ut).astype(int)
            lo_x, lo_t = rx.min() - 1, rt.min() - 1
            table = np.zeros((rt.max() - lo_t + 2, rx.max() - lo_x + 2))
            for ox in (-1, 0, 1):
                wx = lattice_bump(ux - (rx + ox))
                for ot in (-1, 0, 1):
                    wt = lattice_bump(ut - (rt + ot))
                    vals = mag * np.outer(wt, wx)
                    it = np.broadcast_to((rt + ot - lo_t)[:, None], vals.shape)
                    ix = np.broadcast_to((rx + ox - lo_x)[None, :], vals.shape)
                    np.maximum.at(table, (it.ravel(), ix.ravel()), vals.ravel())
            nz = np.nonzero(table > 0)
            for it, ix in zip(*nz):
                # lattice point (n1, n2) pairs the x frequency with the t frequency
                sup_by_n[(int(ix + lo_x), int(it + lo_t))] = float(table[it, ix])
        chosen = [(n, s) for n, s in sup_by_n.items() if s > self.threshold]
        chosen.sort(key=lambda item: (-item[1], item[0]))
        return CellSpectrum((nt, nx), spec, xi_x, xi_t, sup_by_n, chosen)

    def _lattice_weight(self, cs: CellSpectrum, n) -> np.ndarray:
        return np.outer(lattice_bump(self.kappa * cs.xi_t - n[1]), lattice_bump(self.kappa * cs.xi_x - n[0]))

    def _inverse(self, cs: CellSpectrum, spec: np.ndarray) -> np.ndarray:
        full = np.fft.ifft2(spec / (self.dx * self.dt / (2 * math.pi)))
        return full

    def piece(self, key, s: int) -> np.ndarray:
        """V^(s) on the padded patch (s counts from 1); zero when s exceeds |Omega|."""
        cs = self.cells[key]
        if s < 1:
            raise ValueError("pieces are numbered from 1")
        if s > len(cs.omega):
            return np.zeros(cs.spectrum.shape, dtype=complex)
        n = cs.omega[s - 1][0]
        return self._inverse(cs, cs.spectrum * self._lattice_weight(cs, n))

    def low(self, key) -> np.ndarray:
        cs = self.cells[key]
        mask = np.ones(cs.spectrum.shape)
        for n, _ in cs.omega:
            mask -= self._lattice_weight(cs, n)
        return self._inverse(cs, cs.spectrum * mask)

    def low_spectrum_sup(self, key) -> float:
        cs = self.cells[key]
        mask = np.ones(cs.spectrum.shape)
        for n, _ in cs.omega:
            mask -= self._lattice_weight(cs, n)
        return float(np.abs(cs.spectrum * mask).max())

    def reconstruction_error(self, key) -> float:
        cs = self.cells[key]
        total = self.low(key)
        for s in range(1, len(cs.omega) + 1):
            total = total + self.piece(key, s)
        nt, nx = cs.shape
        cell = self.decomposition.cells[key]
        err = np.abs(total[:nt, :nx] - cell.values).max()
        return float(max(err, np.abs(total[nt:, :]).max(initial=0.0), np.abs(total[:, nx:]).max(initial=0.0)))

    def omega_constant(self, key) -> float:
        """|Omega| / T^(2 lambda)."""
        return len(self.cells[key].omega) / self.decomposition.scale_T ** (2 * self.lam)

    def chebyshev_margin(self, key) -> tuple[float, float]:
        """(|Omega| threshold^2, sum over lattice of sup^2)."""
        cs = self.cells[key]
        return len(cs.omega) * self.threshold**2, float(sum(v * v for v in cs.sup_by_n.values()))


def frequency_split(cells: CellDecomposition, lam: float) -> FrequencySplit:
    return FrequencySplit(cells, lam)
