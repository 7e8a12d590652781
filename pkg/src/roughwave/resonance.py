"""Resonance geometry, tube censuses and the resonance experiments.

Tube and cube coordinates are in units of 2 pi kappa, as in ``packets``.
Slopes are alpha = l / kappa, so every resonance defect is a rational
number once kappa is an integer, and the censuses work with the integer
numerators (l^2 - m^2) q directly.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from ._smooth import mollified_indicator
from .evolution import PropagatorConfig, energy, evolve, free_propagate, max_stable_dt
from .field import WaveFunction, make_grid, default_samples, norm_of
from .packets import (
    BACKWARD, CUBE_P_FRACTION, CUBE_Q_FRACTION, DEFAULT_TUBE_C, FORWARD, Tube, incidence, intersects,
)
from .potential import SpaceTimePotential, build_cosine_resonant, build_trap, default_well

DEFAULT_EPS_PRIME = 0.1
DEFAULT_SLOPE_RANGE = (1.0, 2.0)
DEFAULT_BUDGET = 2e9
SCAN_THRESHOLD = 0.1


class BudgetExceeded(RuntimeError):
    """A census would enumerate more configurations than the budget allows."""


def census_budget() -> float:
    raw = os.environ.get("ROUGHWAVE_BUDGET")
    if raw is None or raw == "":
        return DEFAULT_BUDGET
    try:
        value = float(raw)
    except ValueError:
        raise ValueError(f"ROUGHWAVE_BUDGET must be a number, got {raw!r}") from None
    if not value > 0:
        raise ValueError("ROUGHWAVE_BUDGET must be positive")
    return value


def _guard(work: float, budget: float | None, what: str) -> None:
    budget = census_budget() if budget is None else budget
    if work > budget:
        raise BudgetExceeded(f"{what} needs ~{work:.3g} incidence tests, budget is {budget:.3g}")


def _int_kappa(kappa) -> int:
    K = int(round(kappa))
    if abs(K - kappa) > 1e-9:
        raise ValueError(f"censuses need an integer kappa, got {kappa}")
    return K


def _region_rows(K: int) -> np.ndarray:
    """Cube rows q with CUBE_Q_FRACTION*K < q and q + 1 <= K."""
    lo = int(math.floor(CUBE_Q_FRACTION * K)) + 1
    return np.arange(lo, K)


def _region_cols(K: int) -> np.ndarray:
    c = CUBE_P_FRACTION * K
    p = np.arange(-int(math.ceil(c)), int(math.ceil(c)) + 1)
    return p[np.abs(p) < c]


# ------------------------------------------------------- global resonance

@dataclass(frozen=True)
class ResonanceTriple:
    forward: Tube
    forward2: Tube
    backward: Tube
    cubes: tuple[tuple[int, int], tuple[int, int]]
    global_defect: float


def _check_pair(a: Tube, b: Tube, cube, label: str) -> None:
    p, q = cube
    if not (intersects(a, p, q) and intersects(b, p, q)):
        raise ValueError(f"cube {cube} does not meet both tubes of {label}")


def global_resonance_defect(forward: Tube, forward2: Tube, backward: Tube, cube, cube2) -> float:
    """|(a^2 - b^2) q - (a'^2 - b^2) q'| for cubes on T->∩T<- and T'->∩T<-."""
    if forward.orientation != FORWARD or forward2.orientation != FORWARD or backward.orientation != BACKWARD:
        raise ValueError("expected two forward tubes and one backward tube")
    _check_pair(forward, backward, cube, "T-> and T<-")
    _check_pair(forward2, backward, cube2, "T'-> and T<-")
    b2 = backward.alpha**2
    return abs((forward.alpha**2 - b2) * cube[1] - (forward2.alpha**2 - b2) * cube2[1])


def exact_defect(forward: Tube, forward2: Tube, backward: Tube, cube, cube2) -> Fraction:
    """Rational recomputation of the defect from the integer tube labels."""
    k2 = Fraction(forward.kappa) ** 2
    b2 = Fraction(backward.ell**2) / k2
    a2 = Fraction(forward.ell**2) / k2
    a2p = Fraction(forward2.ell**2) / k2
    return abs((a2 - b2) * cube[1] - (a2p - b2) * cube2[1])


def resonance_threshold(kappa: float, eps_prime: float = DEFAULT_EPS_PRIME, C: float = 1.0) -> float:
    return C * kappa**eps_prime


def is_global_resonant(
    forward: Tube, forward2: Tube, backward: Tube, cube, cube2,
    eps_prime: float = DEFAULT_EPS_PRIME, C: float = 1.0,
) -> bool:
    d = global_resonance_defect(forward, forward2, backward, cube, cube2)
    return d < resonance_threshold(forward.kappa, eps_prime, C)


def make_triple(forward: Tube, forward2: Tube, backward: Tube, cube, cube2) -> ResonanceTriple:
    d = global_resonance_defect(forward, forward2, backward, cube, cube2)
    return ResonanceTriple(forward, forward2, backward, (tuple(cube), tuple(cube2)), d)


# -------------------------------------------------------- local resonance

def local_resonance_directions(xi_star, eta: float, threshold: float = 1e-3) -> tuple[float, float]:
    """Forward and backward slopes matching a cell frequency (xi1*, xi2*)."""
    xi1, xi2 = float(xi_star[0]), float(xi_star[1])
    if abs(xi1) < threshold:
        raise ValueError(f"|xi1*| = {abs(xi1):.3g} is below {threshold}; no admissible resonance")
    if not eta > 0:
        raise ValueError("eta must be positive")
    return -0.5 * (xi1 / eta + xi2 / xi1), 0.5 * (xi1 / eta - xi2 / xi1)


def backward_slope_range(
    delta: float, C: float = DEFAULT_TUBE_C, rho=(1.0, 1.0), eta_range=(0.25, 0.5), samples: int = 181,
) -> tuple[float, float]:
    """Range of |alpha<-| reachable from annulus frequencies with |alpha->| <= C delta.

    Grid search over the annulus rho1 <= |xi| <= rho2 and eta in eta_range.
    """
    theta = np.linspace(0.0, 2 * math.pi, 4 * samples, endpoint=False)
    radii = np.linspace(rho[0], rho[1], 9 if rho[1] > rho[0] else 1)
    etas = np.linspace(eta_range[0], eta_range[1], samples)
    r, th, e = np.meshgrid(radii, theta, etas, indexing="ij")
    xi1 = r * np.cos(th)
    xi2 = r * np.sin(th)
    ok = np.abs(xi1) > 1e-3
    xi1, xi2, e = xi1[ok], xi2[ok], e[ok]
    fwd = -0.5 * (xi1 / e + xi2 / xi1)
    bwd = np.abs(0.5 * (xi1 / e - xi2 / xi1))
    sel = np.abs(fwd) <= C * delta
    if not sel.any():
        raise ValueError("no annulus frequency produces an admissible forward slope")
    return float(bwd[sel].min()), float(bwd[sel].max())


# ---------------------------------------------------------------- census

@dataclass
class ResonanceCensus:
    kappa: int
    delta: float
    eps_prime: float
    slope_range: tuple[float, float]
    samples: int
    histogram: dict = field(default_factory=dict)
    totals: np.ndarray = None
    envelope: list = field(default_factory=list)
    q_counts: np.ndarray = None
    gap_min: float | None = None
    gap_checked: int = 0
    triples: list = field(default_factory=list)
    tau: float = 0.25

    @property
    def max_total(self) -> int:
        return int(self.totals.max()) if len(self.totals) else 0

    @property
    def fitted_C(self) -> float:
        return self.max_total / self.kappa

    @property
    def observation1_C(self) -> float:
        return float(self.q_counts.max()) / self.kappa**self.eps_prime if len(self.q_counts) else 0.0

    def envelope_band(self) -> tuple[float, float]:
        ratios = [r for _, r, _ in self.envelope]
        return (min(ratios), max(ratios)) if ratios else (float("nan"), float("nan"))

    def rows(self):
        """(s, count, s0, kappa) rows for the census CSV; s0 is the mean per s."""
        out = []
        for s in sorted(self.histogram):
            count, s0sum, n = self.histogram[s]
            out.append((s, count, s0sum / n, self.kappa))
        return out


def _sample_configuration(rng, K, lmax, mlo, mhi, rows, cols):
    while True:
        ell = int(rng.integers(-lmax, lmax + 1))
        q = int(rng.choice(rows))
        p = int(rng.choice(cols))
        alpha = ell / K
        n = int(round(p + 0.5 - 1 - 2 * alpha * (q + 0.5)))
        m = int(rng.integers(mlo, mhi + 1))
        nb = int(round(p + 0.5 - 1 - 2 * (m / K) * (q + 0.5 - K)))
        if abs(n) <= 2 * K and incidence(n, alpha, 0.0, p, q, K) and incidence(nb, m / K, K, p, q, K):
            return n, ell, nb, m, p, q


def _census_one(config, K, lmax, eps_prime, rows, cols):
    n, ell, nb, m, p, q = config
    thr = K ** (2 + eps_prime)
    A = (ell * ell - m * m) * q
    ns = np.arange(-2 * K, 2 * K + 1)
    per_s = {}
    q_hits = 0
    hits = []
    for qp in rows:
        s = int(qp - q)
        # a'^2 K^2 must lie in (lo, hi)
        lo = (A + m * m * qp - thr) / qp
        hi = (A + m * m * qp + thr) / qp
        if hi < 0:
            continue
        cands = [lp for lp in range(0, lmax + 1) if lo < lp * lp < hi]
        if not cands:
            continue
        ps = cols[incidence(nb, m / K, K, cols, qp, K)]
        if len(ps) == 0:
            continue
        row_hit = False
        for lp in cands:
            hit = np.zeros(len(ns), dtype=bool)
            first = None
            for pp in ps:
                inc = incidence(ns, lp / K, 0.0, pp, qp, K)
                if first is None and inc.any():
                    first = (int(ns[np.argmax(inc)]), int(pp))
                hit |= inc
            if hit.any():
                per_s[s] = per_s.get(s, 0) + 1
                row_hit = True
                hits.append((first[0], lp, first[1], int(qp)))
        q_hits += row_hit
    return per_s, q_hits, hits


def census_counts(
    kappa, delta: float = 0.1, eps_prime: float = DEFAULT_EPS_PRIME, *,
    C: float = DEFAULT_TUBE_C, slope_range=DEFAULT_SLOPE_RANGE, samples: int = 400, seed: int = 0,
    tau: float = 0.25, budget: float | None = None, jobs: int = 1, keep_triples: int = 200,
) -> ResonanceCensus:
    """Histogram of globally resonant T'-> per s = q' - q over sampled (T->, T<-, B).

    #(s) counts distinct slope magnitudes |l'|: a slope and its mirror give
    the same resonance set, and for a fixed slope the base index n' is pinned
    by incidence up to a bounded multiplicity.
    """
    K = _int_kappa(kappa)
    if not 8 <= K <= 64:
        raise ValueError(f"kappa must lie in [8, 64], got {K}")
    if not 0 < tau < 0.5:
        raise ValueError("tau must lie in (0, 1/2)")
    lmax = int(math.floor(C * delta * K + 1e-12))
    mlo = int(math.ceil(slope_range[0] * K - 1e-12))
    mhi = int(math.floor(slope_range[1] * K + 1e-12))
    if lmax < 1 or mhi < mlo:
        raise ValueError("empty tube family for these parameters")
    if slope_range[0] <= C * delta:
        raise ValueError("backward slopes must exceed the forward slope bound")
    rows, cols = _region_rows(K), _region_cols(K)
    _guard(float(samples) * len(rows) * (lmax + 1) * len(cols) * 4 * K, budget, "census")
    rng = np.random.default_rng(seed)
    configs = [_sample_configuration(rng, K, lmax, mlo, mhi, rows, cols) for _ in range(samples)]

    def work(cfg):
        return _census_one(cfg, K, lmax, eps_prime, rows, cols)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, configs))
    else:
        results = [work(c) for c in configs]

    census = ResonanceCensus(K, delta, eps_prime, tuple(slope_range), samples, tau=tau)
    totals, q_counts = [], []
    bins: dict[int, list] = {}
    gap_min = None
    gap_n = 0
    thresh_s = K ** (1 - tau)
    for cfg, (per_s, q_hits, hits) in zip(configs, results):
        n, ell, nb, m, p, q = cfg
        totals.append(sum(per_s.values()))
        q_counts.append(q_hits)
        for s, c in per_s.items():
            qp = q + s
            s0 = -(ell * ell) * qp / (m * m - ell * ell)
            h = census.histogram.setdefault(s, [0, 0.0, 0])
            h[0] += c
            h[1] += s0
            h[2] += 1
            bins.setdefault(int(round(abs(s - s0))), []).append(c)
        for n2, lp, pp, qp in hits:
            if qp - q > thresh_s:
                gap = (lp - abs(ell)) / K
                gap_min = gap if gap_min is None else min(gap_min, gap)
                gap_n += 1
            if len(census.triples) < keep_triples:
                census.triples.append((
                    Tube(FORWARD, n, ell, K), Tube(FORWARD, n2, lp, K), Tube(BACKWARD, nb, m, K),
                    (p, q), (pp, qp),
                ))
    census.totals = np.array(totals)
    census.q_counts = np.array(q_counts)
    for d in sorted(bins):
        vals = bins[d]
        if len(vals) >= 10:
            env = math.sqrt(K) * (1 + d * d) ** -0.25
            census.envelope.append((d, float(np.mean(vals)) / env, len(vals)))
    census.gap_min = gap_min
    census.gap_checked = gap_n
    return census


def write_census_csv(path, census: ResonanceCensus) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "count", "s0", "kappa"])
        for s, count, s0, kappa in census.rows():
            w.writerow([s, count, f"{s0:.17g}", kappa])


# ---------------------------------------------------- no-lattice census

@dataclass
class NoLatticeResult:
    kappa: int
    upsilon: float
    eps: float
    N: int
    N_control: int
    fitted_C: float
    examined: int
    pairs: int
    N_tubes: int = 0


def _crossing_cube(n0, a0, nb, b, K):
    """Cube holding the centreline crossing of a forward and a backward tube."""
    denom = 2 * a0 - 2 * b
    tau = (nb - n0 - 2 * b * K) / denom
    x = n0 + 1 + 2 * a0 * tau
    return np.floor(x).astype(int), np.floor(tau).astype(int)


def _resonant_sets(n0, ell0, K, nbs, ms, qls, rows, cols, lmax, thr):
    """Boolean table S[l, n_j, l_j]: T_j-> resonates with T_0-> through T_l<-."""
    ns = np.arange(-2 * K, 2 * K + 1)
    ells = np.arange(-lmax, lmax + 1)
    S = np.zeros((len(nbs), len(ns), len(ells)), dtype=bool)
    betas = ms / K
    A = (ell0 * ell0 - ms * ms) * qls
    cmin, cmax = cols.min(), cols.max()
    for qp in rows:
        # columns where each backward tube meets row qp
        c1 = nbs + 1 + 2 * betas * (qp - K)
        c2 = nbs + 1 + 2 * betas * (qp + 1 - K)
        lo_c = np.minimum(c1, c2)
        hi_c = np.maximum(c1, c2)
        # cube p meets the slab iff p < hi_c + 1 and p + 1 > lo_c - 1
        pa = np.maximum(np.floor(lo_c - 2).astype(int) + 1, cmin)
        pb = np.minimum(np.ceil(hi_c + 1).astype(int) - 1, cmax)
        has = pa <= pb
        if not has.any():
            continue
        for jl, lj in enumerate(ells):
            ok = has & (np.abs(A - (lj * lj - ms * ms) * qp) < thr)
            if not ok.any():
                continue
            aj = lj / K
            e1, e2 = 2 * aj * qp, 2 * aj * (qp + 1)
            # slab meets some column in [pa, pb] iff pa - 1 < max c and min c < pb + 2
            lo_n = pa - 2 - max(e1, e2)
            hi_n = pb + 1 - min(e1, e2)
            S[:, :, jl] |= ok[:, None] & (ns[None, :] > lo_n[:, None]) & (ns[None, :] < hi_n[:, None])
    return S


def no_lattice_census(
    kappa, upsilon: float = 0.125, eps: float = 0.125, *, delta: float = 0.1, C: float = DEFAULT_TUBE_C,
    slope_range=DEFAULT_SLOPE_RANGE, eps_prime: float = DEFAULT_EPS_PRIME, sep_constant: float = 0.5,
    slope_constant: float = 0.5, base_samples: int = 12, seed: int = 0, budget: float | None = None,
    jobs: int = 1,
) -> NoLatticeResult:
    """Largest family of T_j-> resonating with T_0-> through two separated T<-.

    N counts distinct slopes l_j for which one tube (n_j, l_j) resonates
    through both backward tubes; N_tubes counts the tubes themselves, which
    carries the bounded base-index multiplicity of each slope.

    The backward pair needs q-separation >= sep_constant * kappa^(1-upsilon)
    and each counted T_j-> has |alpha_j - alpha_0| >= slope_constant * kappa^(-eps).
    The control count drops the slope condition.
    """
    if not 2 * (upsilon + eps) < 1:
        raise ValueError("need 2 (upsilon + eps) < 1")
    K = _int_kappa(kappa)
    if not 8 <= K <= 32:
        raise ValueError(f"kappa must lie in [8, 32], got {K}")
    lmax = int(math.floor(C * delta * K + 1e-12))
    mlo = int(math.ceil(slope_range[0] * K - 1e-12))
    mhi = int(math.floor(slope_range[1] * K + 1e-12))
    nbmax = int(math.floor(C * K))
    rows, cols = _region_rows(K), _region_cols(K)
    nb_all, m_all = np.meshgrid(np.arange(-nbmax, nbmax + 1), np.arange(mlo, mhi + 1), indexing="ij")
    nb_all, m_all = nb_all.ravel(), m_all.ravel()
    n_fwd = (4 * K + 1) * (2 * lmax + 1)
    _guard(float(base_samples) * len(nb_all) * (len(rows) * (2 * lmax + 1) + n_fwd), budget, "no-lattice census")
    thr = K ** (2 + eps_prime)
    sep = sep_constant * K ** (1 - upsilon)
    rng = np.random.default_rng(seed)
    ells = np.arange(-lmax, lmax + 1)
    bases = []
    for i in range(base_samples):
        ell0 = int(ells[i % len(ells)])
        bases.append((int(rng.integers(-K // 2, K // 2 + 1)), ell0))

    def work(base):
        n0, ell0 = base
        a0 = ell0 / K
        p_c, q_c = _crossing_cube(n0, a0, nb_all, m_all / K, K)
        keep = (np.abs(p_c) < CUBE_P_FRACTION * K) & (q_c > CUBE_Q_FRACTION * K) & (q_c + 1 <= K)
        keep &= incidence(n0, a0, 0.0, p_c, q_c, K) & incidence(nb_all, m_all / K, K, p_c, q_c, K)
        if keep.sum() < 2:
            return 0, 0, 0, 0
        nbs, ms, qls = nb_all[keep], m_all[keep], q_c[keep]
        separated = np.abs(qls[:, None] - qls[None, :]) >= sep
        if not separated.any():
            return 0, 0, 0, 0
        S = _resonant_sets(n0, ell0, K, nbs, ms, qls, rows, cols, lmax, thr)
        far = np.abs(ells - ell0) / K >= slope_constant * K ** (-eps)
        # slopes whose family shares at least one tube across the backward pair
        g = np.zeros(separated.shape, dtype=np.int32)
        g_ctrl = np.zeros(separated.shape, dtype=np.int32)
        for jl in range(len(ells)):
            block = S[:, :, jl].astype(np.float32)
            if not block.any():
                continue
            shared = (block @ block.T) > 0
            g_ctrl += shared
            if far[jl]:
                g += shared
        flat = S.reshape(len(nbs), -1).astype(np.float32)
        tubes = (flat[:, np.repeat(far[None, :], S.shape[1], axis=0).ravel()])
        g_t = tubes @ tubes.T
        return (int(g[separated].max()), int(g_ctrl[separated].max()), int(g_t[separated].max()),
                int(separated.sum() // 2))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, bases))
    else:
        results = [work(b) for b in bases]
    N = max(r[0] for r in results)
    Nc = max(r[1] for r in results)
    Nt = max(r[2] for r in results)
    pairs = sum(r[3] for r in results)
    return NoLatticeResult(K, upsilon, eps, N, Nc, N / K ** (2 * (eps + upsilon)), len(bases), pairs, Nt)


# ------------------------------------------------------------ pair count

def pair_resonance_count(
    forward: Tube, forward2: Tube, cube, cube2, *, C: float = DEFAULT_TUBE_C,
    slope_range=DEFAULT_SLOPE_RANGE, eps_prime: float = DEFAULT_EPS_PRIME,
) -> int:
    """Number of admissible T<- meeting both cubes and closing a global resonance."""
    K = _int_kappa(forward.kappa)
    p, q = cube
    p2, q2 = cube2
    if not intersects(forward, p, q):
        raise ValueError(f"cube {cube} does not meet the forward tube")
    if not intersects(forward2, p2, q2):
        raise ValueError(f"cube {cube2} does not meet the second forward tube")
    mlo = int(math.ceil(slope_range[0] * K - 1e-12))
    mhi = int(math.floor(slope_range[1] * K + 1e-12))
    if mhi < mlo:
        return 0
    nbmax = int(math.floor(C * K))
    nb, m = np.meshgrid(np.arange(-nbmax, nbmax + 1), np.arange(mlo, mhi + 1), indexing="ij")
    nb, m = nb.ravel(), m.ravel()
    both = incidence(nb, m / K, K, p, q, K) & incidence(nb, m / K, K, p2, q2, K)
    b2 = (m / K) ** 2
    defect = np.abs((forward.alpha**2 - b2) * q - (forward2.alpha**2 - b2) * q2)
    return int(np.sum(both & (defect < resonance_threshold(K, eps_prime))))


def pair_constant(count: int, cube, cube2, kappa: float) -> float:
    """count * (dist + kappa) / T with the cube distance in physical units."""
    dist = 2 * math.pi * kappa * math.hypot(cube[0] - cube2[0], cube[1] - cube2[1])
    return count * (dist + kappa) / kappa**2


# ------------------------------------------------------ two-level model

@dataclass(frozen=True)
class TwoLevelState:
    a: complex
    b: complex
    lam: complex
    j: int = 0


def two_level_coupling(d: float, T: float, gamma: float) -> complex:
    return -1j * d * T ** (-gamma) / 2


def two_level_step(state: TwoLevelState) -> TwoLevelState:
    lam = state.lam
    return TwoLevelState(state.a + lam * state.b, lam * state.a + state.b, lam, state.j + 1)


def two_level_eigenvalues(lam: complex) -> tuple[complex, complex]:
    """Eigenvalues 1 + lam and 1 - lam, ordered as z+ = 1 - i|lam|, z- = 1 + i|lam| for lam on -iR+."""
    w = np.linalg.eigvals(np.array([[1, lam], [lam, 1]], dtype=complex))
    return tuple(sorted(w, key=lambda z: z.imag))


def two_level_power(a0: complex, b0: complex, lam: complex, j: int) -> tuple[complex, complex]:
    """[[1, lam], [lam, 1]]^j (a0, b0) via the eigen-decomposition."""
    zp, zm = 1 + lam, 1 - lam
    s, d = (a0 + b0) / 2, (a0 - b0) / 2
    return zp**j * s + zm**j * d, zp**j * s - zm**j * d


# ------------------------------------------------------- resonance demo

@dataclass
class ResonanceDemo:
    T: float
    gamma: float
    k: float
    N: int
    d: float
    times: np.ndarray
    pde_b2: np.ndarray
    rabi_b2: np.ndarray
    model_times: np.ndarray
    model_b2: np.ndarray
    pde_b2_at_model: np.ndarray
    gaps: np.ndarray
    mode3_mass: np.ndarray
    eigen_error: float

    @property
    def max_gap(self) -> float:
        return float(self.gaps.max())

    @property
    def transfer_error(self) -> float:
        return float(np.abs(self.pde_b2 - self.rabi_b2).max())

    @property
    def mode3_constant(self) -> float:
        return float(self.mode3_mass.max()) * self.T ** (2 * self.gamma)

    def report(self) -> dict:
        return {
            "model_curve": [float(v) for v in self.model_b2],
            "pde_curve": [float(v) for v in self.pde_b2_at_model],
            "max_gap": self.max_gap,
            "transfer_error": self.transfer_error,
            "mode3_constant": self.mode3_constant,
            "eigen_error": self.eigen_error,
            "N": self.N,
            "d": self.d,
        }


def _mode_amplitudes(u: WaveFunction, modes: Sequence[int], length: float) -> np.ndarray:
    """<u, length^(-1/2) e^{i m x}> for integer frequencies m."""
    x = u.grid.x
    return np.array([np.sum(u.values * np.exp(-1j * m * x)) * u.grid.dx / math.sqrt(length) for m in modes])


def resonance_demo(
    T: float = 2 * math.pi * 100, gamma: float = 0.75, k: float = 1.0, *, N: int | None = None,
    dt: float = 0.1, curve_points: int = 201, M: int | None = None,
) -> ResonanceDemo:
    """Full evolution with V = T^-gamma cos 2x from e^{ix} against the two-level model.

    The domain has length T, so the grid parameter is T / 2 pi.  Modes e^{+-ix}
    are degenerate for every k, so k only enters through the step size.
    """
    Tg = T / (2 * math.pi)
    if abs(Tg - round(Tg)) > 1e-9 * Tg:
        raise ValueError(f"domain length {T} is not a multiple of 2 pi")
    Tg = int(round(Tg))
    M = M or default_samples(Tg)
    if not 3 * Tg < M // 4:
        raise ValueError(f"M = {M} under-resolves the +-3 modes at T = {T}")
    grid = make_grid(Tg, M)
    V = build_cosine_resonant(grid, gamma, moving=False, scale_T=T)
    t_max = math.pi * T**gamma
    if N is None:
        divisors = [n for n in range(1, Tg + 1) if Tg % n == 0]
        N = min(divisors, key=lambda n: abs(math.log(n / T ** (2 - 2 * gamma))))
    if Tg % N:
        raise ValueError("T / N must be a multiple of 2 pi")
    d = T / N
    lam = two_level_coupling(d, T, gamma)
    zp, zm = two_level_eigenvalues(lam)
    eigen_error = max(abs(zp - (1 - 1j * abs(lam))), abs(zm - (1 + 1j * abs(lam))))
    f = WaveFunction(grid, np.exp(1j * grid.x) / math.sqrt(T), 0.0, k)
    J = int(math.floor(t_max / d + 1e-9))
    model_times = d * np.arange(J + 1)
    fine = np.linspace(0.0, t_max, curve_points)
    times = np.unique(np.concatenate([fine, model_times]))
    config = PropagatorConfig(dt=min(dt, max_stable_dt(grid, V)))
    u = f
    pde_b2, mode3, states = [], [], {}
    prev = 0.0
    for t in times:
        u = evolve(u, V, k, prev, t, config) if t > prev else u
        prev = t
        amps = _mode_amplitudes(u, (1, -1, 3, -3), T)
        pde_b2.append(abs(amps[1]) ** 2)
        mode3.append(abs(amps[2]) ** 2 + abs(amps[3]) ** 2)
        states[float(t)] = (u, amps)
    pde_b2 = np.array(pde_b2)
    rabi = np.sin(T ** (-gamma) * times / 2) ** 2
    gaps, model_b2, pde_at = [], [], []
    for j, t in enumerate(model_times):
        uj, amps = states[float(t)]
        a, b = two_level_power(1.0, 0.0, lam, j)
        model = (a * np.exp(1j * grid.x) + b * np.exp(-1j * grid.x)) / math.sqrt(T)
        gaps.append(norm_of(grid, uj.values - model))
        model_b2.append(abs(b) ** 2)
        pde_at.append(abs(amps[1]) ** 2)
    return ResonanceDemo(
        T, gamma, k, N, d, times, pde_b2, rabi, model_times, np.array(model_b2), np.array(pde_at),
        np.array(gaps), np.array(mode3), float(eigen_error),
    )


# ------------------------------------------------------------ trap demo

@dataclass
class TrapDemo:
    T: float
    gamma: float
    lambda_coupling: float
    bound_state: bool
    ground_energy: float
    iterations: int
    moment0: float = float("nan")
    trapped_moment: float = float("nan")
    free_moment: float = float("nan")
    trapped_norm: float = float("nan")
    free_norm: float = float("nan")
    message: str = ""

    @property
    def trapped_ratio(self) -> float:
        return self.trapped_moment / self.moment0

    @property
    def free_ratio(self) -> float:
        return self.free_moment / self.moment0

    def report(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "T", "gamma", "lambda_coupling", "bound_state", "ground_energy", "iterations",
            "moment0", "trapped_moment", "free_moment", "trapped_norm", "free_norm", "message",
        )}
        if self.bound_state:
            out["trapped_ratio"] = self.trapped_ratio
            out["free_ratio"] = self.free_ratio
        return out


def second_moment(u: WaveFunction) -> float:
    w = np.abs(u.values) ** 2 * u.grid.dx
    mass = w.sum()
    c = np.sum(u.grid.x * w) / mass
    return float(np.sum((u.grid.x - c) ** 2 * w) / mass)


def ground_state(
    V: SpaceTimePotential, k: float = 1.0, dtau: float = 0.1, tol: float = 1e-10, max_iter: int = 200000,
    width: float | None = None,
) -> tuple[WaveFunction, float, int]:
    """Imaginary-time Strang iteration, normalised every step."""
    grid = V.grid
    v = np.real(V.at(0.0))
    width = width or grid.L / 50
    psi = np.exp(-grid.x**2 / (2 * width**2)).astype(complex)
    half = np.exp(-0.5 * dtau * v)
    kin = np.exp(-dtau * k * grid.xi**2)
    E_prev = math.inf
    f = WaveFunction(grid, psi, 0.0, k)
    for it in range(1, max_iter + 1):
        psi = half * np.fft.ifft(kin * np.fft.fft(half * psi))
        psi /= norm_of(grid, psi)
        f = WaveFunction(grid, psi, 0.0, k)
        E = energy(f, V, 0.0, k)
        if abs(E - E_prev) < tol:
            return f, E, it
        E_prev = E
    return f, E_prev, max_iter


def trap_demo(
    T: float = 256, gamma: float = 0.8, lambda_coupling: float = 30.0, *, q_profile: Callable = default_well,
    M: int | None = None, dt: float = 0.05, dtau: float = 0.1, k: float = 1.0,
) -> TrapDemo:
    """Ground state of the rescaled well, then trapped versus free evolution up to t = T."""
    grid = make_grid(T, M or default_samples(T))
    V = build_trap(grid, gamma, lambda_coupling, q_profile)
    if lambda_coupling == 0:
        return TrapDemo(T, gamma, lambda_coupling, False, 0.0, 0, message="no bound state: zero coupling")
    phi, E, it = ground_state(V, k, dtau)
    if not E < 0:
        return TrapDemo(T, gamma, lambda_coupling, False, E, it, message=f"no bound state: E = {E:.3g} >= 0")
    config = PropagatorConfig(dt=min(dt, max_stable_dt(grid, V)))
    trapped = evolve(phi, V, k, 0.0, T, config)
    free = free_propagate(phi, T, k)
    return TrapDemo(
        T, gamma, lambda_coupling, True, E, it, second_moment(phi), second_moment(trapped), second_moment(free),
        norm_of(grid, trapped.values), norm_of(grid, free.values),
    )


# --------------------------------------------------------------- k-scan

@dataclass
class ScanResult:
    ks: np.ndarray
    deviation: np.ndarray
    threshold: float

    @property
    def median(self) -> float:
        return float(np.median(self.deviation))

    @property
    def resonant(self) -> np.ndarray:
        return self.ks[self.deviation > self.threshold]

    @property
    def resonant_fraction(self) -> float:
        return float(np.mean(self.deviation > self.threshold))

    @property
    def peak(self) -> float:
        return float(self.ks[int(np.argmax(self.deviation))])


def deviation_from_free(f: WaveFunction, V: SpaceTimePotential, k: float, config: PropagatorConfig | None = None,
                        horizon: float | None = None) -> float:
    t1 = V.horizon if horizon is None else horizon
    u = evolve(f.replace(k=k, time_tag=0.0), V, k, 0.0, t1, config)
    return norm_of(f.grid, u.values - free_propagate(f, t1, k).values)


def scan_k(
    f: WaveFunction, V: SpaceTimePotential, interval=(0.3, 0.8), n_k: int = 33, *,
    config: PropagatorConfig | None = None, threshold: float = SCAN_THRESHOLD, jobs: int = 1,
    horizon: float | None = None,
) -> ScanResult:
    """D(k) = ||u(2 pi T, k) - free(2 pi T, k)|| on a uniform k-grid."""
    if n_k < 9:
        raise ValueError("n_k must be at least 9")
    a, b = interval
    if not 0 < a < b:
        raise ValueError("k-interval must be positive and increasing")
    ks = np.linspace(a, b, n_k)

    def work(k):
        return deviation_from_free(f, V, float(k), config, horizon)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            D = list(pool.map(work, ks))
    else:
        D = [work(k) for k in ks]
    return ScanResult(ks, np.array(D), threshold)


def write_scan_csv(path, result: ScanResult) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "deviation"])
        for k, d in zip(result.ks, result.deviation):
            w.writerow([f"{k:.17g}", f"{d:.17g}"])


def low_frequency_profile(grid, length: float) -> WaveFunction:
    """Normalised smooth bump length^(-1/2)-scaled over the middle of the domain."""
    v = mollified_indicator(grid.x / length, -0.25, 0.25, 0.2)
    return WaveFunction(grid, v / norm_of(grid, v))
