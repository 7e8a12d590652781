"""Propagators for i u_t = -k u_xx + V u on the torus.

The free flow is the exact multiplier exp(-i k xi^2 t) on the mode lattice,
so every comparison against free evolution carries no discretisation error.
Full evolution uses Strang splitting.  The linear-in-V Duhamel term is
accumulated in a single forward pass and integrated with composite
Simpson weights; a second accumulator on every other node provides the
node-doubling error estimate.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._smooth import mollified_indicator
from .field import Grid, WaveFunction, fft_coefficients, from_fft_coefficients, norm_of
from .packets import Tube, Window, intersects
from .potential import CellDecomposition, SpaceTimePotential, cutter

DEFAULT_TOLERANCE = 1e-6


class QuadratureError(RuntimeError):
    """Time quadrature failed its node-doubling check."""


class StabilityError(ValueError):
    """Time step exceeds the propagation policy."""


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float = 0.05
    scheme: str = "strang"
    quadrature_nodes: int | None = None
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in ("strang", "duhamel_accumulate"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


def max_stable_dt(grid: Grid, V: SpaceTimePotential | None) -> float:
    limit = grid.kappa / 8
    if V is not None and V.sup_bound > 0:
        limit = min(limit, 0.1 / V.sup_bound)
    return limit


def check_step(grid: Grid, V: SpaceTimePotential | None, dt: float) -> None:
    limit = max_stable_dt(grid, V)
    if dt > limit * (1 + 1e-12):
        raise StabilityError(f"dt={dt} exceeds the stability policy limit {limit}")


def _kinetic(grid: Grid, k: float, t: float) -> np.ndarray:
    return np.exp(-1j * k * grid.xi**2 * t)


def free_propagate(f: WaveFunction, t: float, k: float | None = None) -> WaveFunction:
    """exp(i k Delta t) f, exact on the mode lattice."""
    k = f.k if k is None else k
    if t == 0:
        return f
    spec = np.fft.fft(f.values) * _kinetic(f.grid, k, t)
    return f.replace(values=np.fft.ifft(spec), time_tag=f.time_tag + t)


def _potential_slice(V: SpaceTimePotential, t: float) -> np.ndarray:
    v = V.at(t)
    if V.is_real and np.iscomplexobj(v):
        if np.abs(v.imag).max() > 0:
            raise ValueError("potential flagged real returned complex values")
        v = v.real
    return v


def _strang(psi: np.ndarray, grid: Grid, V: SpaceTimePotential, k: float, t0: float, t1: float, dt: float) -> np.ndarray:
    n = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
    h = (t1 - t0) / n
    kin = _kinetic(grid, k, h)
    if V.static:
        v = _potential_slice(V, t0)
        half = np.exp(-0.5j * v * h)
        full = half * half
        psi = psi * half
        for j in range(n):
            psi = np.fft.ifft(kin * np.fft.fft(psi))
            psi = psi * (half if j == n - 1 else full)
        return psi
    psi = psi * np.exp(-0.5j * _potential_slice(V, t0) * h)
    for j in range(n):
        psi = np.fft.ifft(kin * np.fft.fft(psi))
        t = t0 + (j + 1) * h
        w = 0.5 if j == n - 1 else 1.0
        psi = psi * np.exp(-1j * w * _potential_slice(V, t) * h)
    return psi


def _segments(V: SpaceTimePotential, t0: float, t1: float):
    """Split [t0, t1] into (a, b, active) pieces by the potential's time support."""
    if V.is_zero():
        return [(t0, t1, False)]
    if V.time_support is None:
        return [(t0, t1, True)]
    a, b = V.time_support
    lo, hi = max(t0, a), min(t1, b)
    if lo >= hi:
        return [(t0, t1, False)]
    out = []
    if lo > t0:
        out.append((t0, lo, False))
    out.append((lo, hi, True))
    if hi < t1:
        out.append((hi, t1, False))
    return out


def evolve(
    f: WaveFunction, V: SpaceTimePotential, k: float | None, t0: float, t1: float,
    config: PropagatorConfig | None = None,
) -> WaveFunction:
    """Strang split-step solution from t0 to t1."""
    k = f.k if k is None else k
    config = config or PropagatorConfig(dt=max_stable_dt(f.grid, V))
    if t1 < t0:
        raise ValueError("evolve runs forward in time only")
    check_step(f.grid, V, config.dt)
    psi = np.asarray(f.values, dtype=complex)
    for a, b, active in _segments(V, t0, t1):
        if b <= a:
            continue
        if active:
            psi = _strang(psi, f.grid, V, k, a, b, config.dt)
        else:
            psi = np.fft.ifft(np.fft.fft(psi) * _kinetic(f.grid, k, b - a))
    return WaveFunction(f.grid, psi, t1, k)


def evolve_path(
    f: WaveFunction, V: SpaceTimePotential, k: float | None, times: Sequence[float],
    config: PropagatorConfig | None = None,
) -> list[WaveFunction]:
    """States at each of the increasing ``times``, starting from f at times[0]."""
    out = [f.replace(time_tag=times[0], k=f.k if k is None else k)]
    for a, b in zip(times[:-1], times[1:]):
        out.append(evolve(out[-1], V, k, a, b, config))
    return out


def kinetic_energy(f: WaveFunction, k: float | None = None) -> float:
    k = f.k if k is None else k
    spec = fft_coefficients(f.grid, f.values)
    return float(k * np.sum(f.grid.xi**2 * np.abs(spec) ** 2) / f.grid.T)


def energy(f: WaveFunction, V: SpaceTimePotential, t: float | None = None, k: float | None = None) -> float:
    """k int |u_x|^2 + int V |u|^2."""
    t = f.time_tag if t is None else t
    v = V.at(t)
    return kinetic_energy(f, k) + float(np.sum(np.real(v) * np.abs(f.values) ** 2) * f.grid.dx)


# ------------------------------------------------------- Duhamel terms

def _band_edge(grid: Grid, values: np.ndarray, floor: float = 1e-14) -> float:
    power = np.abs(np.fft.fft(values)) ** 2
    total = power.sum()
    if total == 0:
        return 0.0
    order = np.argsort(np.abs(grid.xi))
    tail = total - np.cumsum(power[order])
    idx = int(np.argmax(tail <= floor * total))
    return float(abs(grid.xi[order][idx]))


def default_nodes(f: WaveFunction, V: SpaceTimePotential, k: float, t0: float, t1: float) -> int:
    """Node count resolving the fastest interaction-picture phase."""
    bf = _band_edge(f.grid, f.values)
    mid = 0.5 * (t0 + t1)
    bv = max(_band_edge(f.grid, V.at(t)) for t in (t0, mid, t1))
    omega = k * (bf + bv) ** 2 + float(V.info.get("time_frequency", 2.0))
    h = 0.1 / max(omega, 1e-3)
    n = int(math.ceil((t1 - t0) / h))
    return max(8, 4 * int(math.ceil(n / 4)))


def interaction_integral(
    f: WaveFunction, V: SpaceTimePotential, k: float, t0: float, t1: float,
    nodes: int | None = None, tolerance: float = DEFAULT_TOLERANCE, check: bool = True,
) -> tuple[np.ndarray, float]:
    """int_{t0}^{t1} exp(ik Delta (t1 - s)) V(s) exp(ik Delta (s - t0)) f ds.

    Returns the samples and the estimated relative error.
    """
    grid = f.grid
    if t1 == t0 or V.is_zero():
        return np.zeros(grid.M, dtype=complex), 0.0
    n = default_nodes(f, V, k, t0, t1) if nodes is None else int(nodes)
    n = max(4, 4 * int(math.ceil(n / 4)))
    h = (t1 - t0) / n
    kin = _kinetic(grid, k, h)
    w_spec = np.fft.fft(f.values)
    fine = np.zeros(grid.M, dtype=complex)
    coarse = np.zeros(grid.M, dtype=complex)
    for i in range(n + 1):
        t = t0 + i * h
        if i > 0:
            w_spec = w_spec * kin
            fine *= kin
            coarse *= kin
        g = np.fft.fft(_potential_slice(V, t) * np.fft.ifft(w_spec))
        # composite Simpson on h and on 2h
        if i == 0 or i == n:
            a, b = h / 3, 2 * h / 3
        else:
            a = (4 if i % 2 else 2) * h / 3
            b = 0.0 if i % 2 else (8 if i % 4 == 2 else 4) * h / 3
        fine += a * g
        if b:
            coarse += b * g
    result = np.fft.ifft(fine)
    diff = np.fft.ifft(fine - coarse)
    scale = max(norm_of(grid, result), 1e-3 * V.sup_bound * (t1 - t0) * norm_of(grid, f.values), 1e-300)
    err = norm_of(grid, diff) / 15 / scale
    if check and err > tolerance:
        raise QuadratureError(f"time quadrature under-resolved: estimated relative error {err:.3g} with {n} nodes")
    return result, err


def duhamel_first_order(
    f: WaveFunction, V: SpaceTimePotential, k: float | None, t: float,
    nodes: int | None = None, tolerance: float = DEFAULT_TOLERANCE,
) -> WaveFunction:
    """exp(ik Delta t) f - i int_0^t exp(ik Delta (t-s)) V(s) exp(ik Delta s) f ds."""
    k = f.k if k is None else k
    free = free_propagate(f, t, k)
    integral, _ = interaction_integral(f, V, k, 0.0, t, nodes, tolerance)
    return WaveFunction(f.grid, free.values - 1j * integral, t, k)


def one_collision(
    f: WaveFunction, V: SpaceTimePotential, k: float | None = None, t0: float = 0.0, t1: float | None = None,
    nodes: int | None = None, tolerance: float = DEFAULT_TOLERANCE,
) -> WaveFunction:
    """Q f over [t0, t1]; the horizon defaults to 2 pi T of the potential."""
    k = f.k if k is None else k
    t1 = V.horizon if t1 is None else t1
    integral, _ = interaction_integral(f, V, k, t0, t1, nodes, tolerance)
    return WaveFunction(f.grid, integral, t1, k)


@dataclass
class ProductRun:
    final: WaveFunction
    times: np.ndarray
    deviations: np.ndarray
    reference: WaveFunction


def approximation_product(
    f: WaveFunction, V: SpaceTimePotential, k: float | None, N: int, horizon: float | None = None,
    config: PropagatorConfig | None = None, nodes_per_window: int | None = None,
) -> ProductRun:
    """Apply (exp(ik Delta d) + Q_j) for j = 1..N with d = horizon / N.

    Q_j = -i int over [t_{j-1}, t_j]; the horizon defaults to T.
    Deviations are measured against the split-step solution at each t_j.
    """
    k = f.k if k is None else k
    horizon = V.scale_T if horizon is None else horizon
    if N < 1:
        raise ValueError("N must be positive")
    if V.scale_T ** (2 - 2 * V.gamma) / N > 1:
        warnings.warn("N is below T^(2 - 2 gamma); the product bound does not apply", RuntimeWarning)
    d = horizon / N
    state = f.replace(time_tag=0.0, k=k)
    exact = state
    devs = np.zeros(N)
    times = d * np.arange(1, N + 1)
    for j in range(N):
        a, b = j * d, (j + 1) * d
        integral, _ = interaction_integral(state, V, k, a, b, nodes_per_window)
        stepped = free_propagate(state, d, k).values - 1j * integral
        state = WaveFunction(f.grid, stepped, b, k)
        exact = evolve(exact, V, k, a, b, config)
        devs[j] = norm_of(f.grid, state.values - exact.values)
    return ProductRun(state, times, devs, exact)


# ---------------------------------------------------- transforms

def gauge_modulate(u: WaveFunction, beta: float, k: float | None = None, t: float | None = None) -> WaveFunction:
    """exp(-i beta^2 t / 4k - i beta x / 2k) u(x + beta t)."""
    k = u.k if k is None else k
    t = u.time_tag if t is None else t
    grid = u.grid
    shift = beta * grid.T / (2 * k)
    if abs(shift - round(shift)) > 1e-9 * max(1.0, abs(shift)):
        raise ValueError("modulation frequency beta/(2k) is off the mode lattice")
    spec = fft_coefficients(grid, u.values) * np.exp(1j * grid.xi * beta * t)
    moved = from_fft_coefficients(grid, spec)
    phase = np.exp(-1j * (beta**2 * t / (4 * k) + beta * grid.x / (2 * k)))
    return WaveFunction(grid, phase * moved, t, k)


def shifted_potential(V: SpaceTimePotential, beta: float) -> SpaceTimePotential:
    """V(x + beta t, t)."""
    grid = V.grid
    half = grid.L / 2

    def evaluate(x, t):
        y = np.mod(x + beta * t + half, grid.L) - half
        return V._evaluator(y, t)

    return SpaceTimePotential(
        grid, evaluate, V.gamma, kind=V.kind + "_shifted", scale_T=V.scale_T, annulus=None,
        is_real=V.is_real, sup_constant=V.sup_constant, static=V.static and beta == 0, info=V.info,
    )


def verify_modulation_identity(
    f: WaveFunction, V: SpaceTimePotential, beta: float, k: float | None, t: float,
    config: PropagatorConfig | None = None,
) -> float:
    """|| modulate(evolve(f)) - evolve of the modulated problem ||."""
    k = f.k if k is None else k
    u = evolve(f.replace(time_tag=0.0, k=k), V, k, 0.0, t, config)
    lhs = gauge_modulate(u, beta, k, t)
    start = gauge_modulate(f.replace(time_tag=0.0, k=k), beta, k, 0.0)
    rhs = evolve(start, shifted_potential(V, beta), k, 0.0, t, config)
    return norm_of(f.grid, lhs.values - rhs.values)


def rescale_solution(values_fn: Callable, beta: float, sigma: float):
    """phi(x, t) = u(beta x, sigma t) solves the problem with -sigma beta^-2 Delta and sigma q(beta x, sigma t)."""
    return lambda x, t: values_fn(beta * np.asarray(x), sigma * t)


# ---------------------------------------------------- envelopes

def envelope_partition(y) -> np.ndarray:
    """Bump supported in [-2pi, 2pi] whose 2pi translates sum to one."""
    return mollified_indicator(y, -math.pi, math.pi, math.pi)


@dataclass
class EnvelopeReport:
    s: float
    y: np.ndarray
    values: np.ndarray
    outside_mass: float
    lambda_masses: dict


class EnvelopeTable:
    """exp(i s Delta) applied to the centred window h(y + 2 pi), on a wide y grid."""

    def __init__(self, half_width: float = 400.0, points: int = 1 << 15):
        self.y = np.linspace(-half_width, half_width, points, endpoint=False)
        self.dy = self.y[1] - self.y[0]
        self.nu = 2 * math.pi * np.fft.fftfreq(points, d=self.dy)
        self._spec = np.fft.fft(Window().h(self.y + 2 * math.pi))
        self._cache: dict = {}

    def at(self, s: float) -> np.ndarray:
        key = round(float(s), 12)
        if key not in self._cache:
            if len(self._cache) > 512:
                self._cache.clear()
            self._cache[key] = np.fft.ifft(self._spec * np.exp(-1j * s * self.nu**2))
        return self._cache[key]

    def sample(self, y, s: float, lam: int | None = 0) -> np.ndarray:
        """Envelope at positions y; ``lam`` selects the translated piece, None for all."""
        u = self.at(s)
        y = np.asarray(y, dtype=float)
        re = np.interp(y, self.y, u.real, left=0.0, right=0.0)
        im = np.interp(y, self.y, u.imag, left=0.0, right=0.0)
        out = re + 1j * im
        if lam is not None:
            out = out * envelope_partition(y - 2 * math.pi * lam)
        return out


_TABLE: EnvelopeTable | None = None


def _table() -> EnvelopeTable:
    global _TABLE
    if _TABLE is None:
        _TABLE = EnvelopeTable()
    return _TABLE


def packet_envelope(t: float, kappa: float, k: float = 1.0, dilation: float = 3.0, lambdas: int = 4) -> EnvelopeReport:
    """Envelope of the evolved window at scaled time s = k t / kappa^2.

    Reports the mass fraction outside the ``dilation``-times widened tube
    |y| < 2 pi dilation and the mass of each translated piece.
    """
    table = _table()
    s = k * t / kappa**2
    u = table.at(s)
    mass = np.abs(u) ** 2
    total = mass.sum()
    outside = float(mass[np.abs(table.y) >= 2 * math.pi * dilation].sum() / total)
    lam_mass = {}
    for lam in range(-lambdas, lambdas + 1):
        piece = u * envelope_partition(table.y - 2 * math.pi * lam)
        lam_mass[lam] = float(np.sum(np.abs(piece) ** 2) / total)
    return EnvelopeReport(s, table.y, u, outside, lam_mass)


def tube_mass_outside(u: WaveFunction, tube_n: int, ell: int, t: float, dilation: float = 3.0) -> float:
    """Fraction of |u|^2 farther than dilation * 2 pi kappa from the forward tube centre at time t."""
    grid = u.grid
    kappa = grid.kappa
    alpha = ell / kappa
    centre = 2 * math.pi * (tube_n + 1) * kappa + 2 * t * alpha
    d = np.abs(np.mod(grid.x - centre + grid.L / 2, grid.L) - grid.L / 2)
    mass = np.abs(u.values) ** 2
    return float(mass[d >= dilation * 2 * math.pi * kappa].sum() / mass.sum())


# ---------------------------------------------------- matrix elements

@dataclass
class CollisionElement:
    forward: Tube
    backward: Tube
    cube: tuple
    value: complex
    eta: float
    bound: float
    negligible: bool

    @property
    def constant(self) -> float:
        return abs(self.value) / self.bound if self.bound > 0 else 0.0


def _envelope_on_patch(tube: Tube, x_abs, t_abs, k: float, anchor_time: float) -> np.ndarray:
    """Omega^(0) of a tube on the absolute (t, x) patch grid."""
    table = _table()
    kappa = tube.kappa
    out = np.empty((len(t_abs), len(x_abs)), dtype=complex)
    for i, t in enumerate(t_abs):
        tau = t - anchor_time
        y = (x_abs - 2 * math.pi * (tube.n + 1) * kappa) / kappa - 2 * tau * tube.alpha / kappa
        out[i] = table.sample(y, k * tau / kappa**2, lam=0)
    return out


def _psi_kappa(kappa: float, dx1, dx2) -> np.ndarray:
    return kappa**2 * np.exp(-0.5 * kappa**2 * (dx1**2 + dx2**2)) / (2 * math.pi)


def collision_matrix_element(
    forward: Tube, backward: Tube, cube: tuple, cells: CellDecomposition, eta: float,
    patch: np.ndarray | None = None, annulus: tuple | None = None,
) -> CollisionElement:
    """F^(0,0) for a forward and a backward tube meeting the cube (p, q).

    ``patch`` overrides the stored cell values (same shape), which lets
    callers probe the integral with synthetic cell potentials.
    """
    p, q = cube
    if not (intersects(forward, p, q) and intersects(backward, p, q)):
        raise ValueError(f"tubes do not both meet cube {cube}")
    cell = cells.cells[(p, q)]
    values = cell.values if patch is None else np.asarray(patch)
    if values.shape != cell.values.shape:
        raise ValueError("patch shape does not match the cell")
    kappa = cells.kappa
    k = 1.0 / eta
    x_loc, t_loc = cells.local_coordinates(cell)
    x_abs = x_loc + 2 * math.pi * kappa * p
    t_abs = t_loc + 2 * math.pi * kappa * q
    horizon = 2 * math.pi * kappa**2
    fwd = _envelope_on_patch(forward, x_abs, t_abs, k, 0.0)
    bwd = _envelope_on_patch(backward, x_abs, t_abs, k, horizon)
    da = forward.alpha - backward.alpha
    da2 = forward.alpha**2 - backward.alpha**2
    phase = np.exp(1j * eta * (da * x_loc[None, :] - da2 * t_loc[:, None]))
    dxdt = cells.grid.dx * cells.dt
    value = complex(np.sum(values * fwd * np.conj(bwd) * phase) * dxdt / kappa)
    # envelope bound: kappa^-1 (|V_hat| * |psi_kappa|) at the curve point
    nt, nx = values.shape
    Pt, Px = 2 * (1 << (nt - 1).bit_length()), 2 * (1 << (nx - 1).bit_length())
    padded = np.zeros((Pt, Px), dtype=complex)
    padded[:nt, :nx] = values
    spec = np.abs(np.fft.fft2(padded)) * dxdt / (2 * math.pi)
    xi_t = 2 * math.pi * np.fft.fftfreq(Pt, d=cells.dt)
    xi_x = 2 * math.pi * np.fft.fftfreq(Px, d=cells.grid.dx)
    point = (-da * eta, da2 * eta)
    # the transform of V e^{i(a x - b t)} at 0 is V_hat at (-a, b) in (x, t)
    kern = _psi_kappa(kappa, xi_x[None, :] - point[0], xi_t[:, None] - point[1])
    dxi = (xi_x[1] - xi_x[0]) * (xi_t[1] - xi_t[0])
    bound = float(np.sum(spec * kern) * dxi / kappa)
    if annulus is None:
        mag = spec
        keep = mag > 1e-6 * mag.max() if mag.max() > 0 else np.zeros_like(mag, bool)
        if keep.any():
            rad = np.hypot(xi_x[None, :], xi_t[:, None])[keep]
            annulus = (float(rad.min()), float(rad.max()))
        else:
            annulus = (0.0, 0.0)
    r = math.hypot(*point)
    eps = 2.0 / kappa
    negligible = not (annulus[0] - eps < r < annulus[1] + eps)
    return CollisionElement(forward, backward, (p, q), value, eta, bound, negligible)


# ---------------------------------------------------- restriction check

def restriction_ratio(
    grid: Grid, source: Callable[[float], np.ndarray], horizon: float, ks: Sequence[float], delta: float,
    nodes: int,
) -> float:
    """C in  avg_k ||P_{|xi|>delta} int exp(ik Delta (H - t)) g dt||^2 <= C delta^-2 ||g||^2.

    ``source(t)`` returns g(., t) on the grid; the time integral uses the
    trapezoid rule on ``nodes`` intervals.
    """
    ts = np.linspace(0.0, horizon, nodes + 1)
    w = np.full(nodes + 1, horizon / nodes)
    w[0] = w[-1] = horizon / (2 * nodes)
    g_spec = np.stack([fft_coefficients(grid, source(t)) for t in ts])
    g_norm2 = float(np.sum(w[:, None] * np.abs(g_spec) ** 2) / grid.T)
    high = np.abs(grid.xi) > delta
    acc = 0.0
    for k in ks:
        phase = np.exp(1j * k * np.outer(ts, grid.xi**2))
        integral = np.sum(w[:, None] * phase * g_spec, axis=0)
        acc += float(np.sum(np.abs(integral[high]) ** 2) / grid.T)
    mean = acc / len(ks)
    return mean * delta**2 / g_norm2
