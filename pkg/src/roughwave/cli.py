"""Batch driver: flat key = value configs in, CSV/JSON/RWAV files out.

Config grammar, one assignment per line::

    # comment
    experiment = scan_k
    T = 2*pi*64          # products of numbers and the symbol pi
    k_interval = 0.3, 0.8

Blank lines and ``#`` comments are ignored.  Keys are case-sensitive and
unknown keys are rejected.  Exit codes: 0 success, 2 invalid config,
3 numerical guard tripped, 4 census budget exceeded.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import shutil
import sys
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy

from . import __version__
from .evolution import (
    PropagatorConfig, QuadratureError, StabilityError, approximation_product, duhamel_first_order, energy,
    evolve, free_propagate, max_stable_dt, one_collision,
)
from .field import WaveFunction, default_samples, make_grid, norm_of, write_snapshot
from .packets import DEFAULT_TUBE_C, analyze, analyze_many, synthesize, truncate
from .potential import (
    build_bump_lattice, build_cosine_resonant, build_trap, random_smooth_potential, zero_potential,
)
from .resonance import (
    BudgetExceeded, census_counts, low_frequency_profile, no_lattice_census, resonance_demo, scan_k,
    trap_demo, write_census_csv, write_scan_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BUDGET = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class NumericalGuard(RuntimeError):
    pass


# ------------------------------------------------------------------ values

def _number(text: str) -> float:
    value = 1.0
    for factor in text.replace(" ", "").split("*"):
        if factor == "pi":
            value *= math.pi
        elif factor.endswith("pi") and factor[:-2]:
            value *= float(factor[:-2]) * math.pi
        else:
            value *= float(factor)
    return value


def _as_float(text):
    return _number(text)


def _as_int(text):
    v = _number(text)
    if v != int(v):
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


def _as_floats(text):
    return [_number(t) for t in text.split(",") if t.strip()]


def _as_ints(text):
    return [_as_int(t) for t in text.split(",") if t.strip()]


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    parse.options = options
    return parse


def parse_config_text(text: str) -> dict[str, str]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


# -------------------------------------------------------------- experiments

@dataclass
class Experiment:
    name: str
    anchor: str
    params: dict  # key -> (parser, default); default None means required
    outputs: tuple
    runner: Callable = None
    validate: Callable = None

    @property
    def required(self) -> list[str]:
        return [k for k, (_, d) in self.params.items() if d is None]


@dataclass
class Context:
    out: "Staging"
    jobs: int
    seed: int
    summary: dict = field(default_factory=dict)


class Staging:
    """Collects outputs in a temp directory, then renames them into place."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.tmp = tempfile.mkdtemp(prefix=".staging-", dir=out_dir)
        self.names: list[str] = []

    def path(self, name: str) -> str:
        if name in self.names:
            raise ValueError(f"output {name} written twice")
        self.names.append(name)
        return os.path.join(self.tmp, name)

    def write_text(self, name: str, text: str) -> None:
        with open(self.path(name), "w", newline="") as fh:
            fh.write(text)

    def commit(self) -> list[dict]:
        listing = []
        for name in self.names:
            src = os.path.join(self.tmp, name)
            with open(src, "rb") as fh:
                data = fh.read()
            listing.append({"path": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})
        for name in self.names:
            os.replace(os.path.join(self.tmp, name), os.path.join(self.out_dir, name))
        self.discard()
        return listing

    def discard(self) -> None:
        shutil.rmtree(self.tmp, ignore_errors=True)


def _g(x) -> str:
    return f"{float(x):.17g}"


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else (str(v) if isinstance(v, (int, np.integer)) else _g(v))
                              for v in row))
    return "\n".join(lines) + "\n"


def _json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return str(v)
        return v
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _finite(name: str, *values) -> None:
    for v in values:
        if not np.all(np.isfinite(v)):
            raise NumericalGuard(f"{name} produced non-finite values")


def _torus_grid(T: float, M: int | None):
    """Grid whose domain length is T, which must be a multiple of 2 pi."""
    Tg = T / (2 * math.pi)
    if abs(Tg - round(Tg)) > 1e-9 * Tg:
        raise ConfigError(f"T = {T} must be a multiple of 2*pi for this experiment")
    Tg = int(round(Tg))
    return make_grid(Tg, M or default_samples(Tg))


def _random_state(grid, rng) -> WaveFunction:
    v = rng.normal(size=grid.M) + 1j * rng.normal(size=grid.M)
    return WaveFunction(grid, v / norm_of(grid, v))


def _initial(grid, kind: str, length: float) -> WaveFunction:
    if kind == "plane":
        return WaveFunction(grid, np.exp(1j * grid.x) / math.sqrt(length))
    return low_frequency_profile(grid, length)


# each runner takes (params, ctx) and fills ctx.summary

def run_frame_check(p, ctx: Context):
    grid = make_grid(p["T"], p["M"])
    rng = np.random.default_rng(ctx.seed)
    fs = [_random_state(grid, rng) for _ in range(p["trials"])]
    values = np.stack([f.values for f in fs], axis=1)
    ns, ells, star = analyze_many(grid, values, p["k"])
    eta = 1.0 / p["k"]
    rows, frame, recon = [], [], []
    for i, f in enumerate(fs):
        mass = float(np.sum(np.abs(star[:, :, i]) ** 2))
        norm2 = norm_of(grid, f.values) ** 2
        fe = abs(mass - eta / (2 * math.pi) * norm2) / (eta / (2 * math.pi) * norm2)
        back = synthesize(analyze(f, p["k"]))
        re = norm_of(grid, back.values - f.values) / norm_of(grid, f.values)
        frame.append(fe)
        recon.append(re)
        rows.append((i, fe, re))
    ctx.out.write_text("frame.csv", _csv(["trial", "frame_rel_error", "reconstruction_rel_error"], rows))
    analyze(fs[0], p["k"]).write_csv(ctx.out.path("coefficients.csv"))
    ctx.summary.update(frame_identity_rel_error=max(frame), reconstruction_rel_error=max(recon))


def _potential(p, grid, kind: str, seed: int, scale_T=None):
    if kind == "zero":
        return zero_potential(grid, p["gamma"])
    if kind in ("cosine", "cosine_moving"):
        return build_cosine_resonant(grid, p["gamma"], kind == "cosine_moving", scale_T=scale_T)
    if kind == "bump_lattice":
        return build_bump_lattice(grid, p["gamma"], seed=seed)
    if kind == "trap":
        return build_trap(grid, p["gamma"], p["lambda"], scale_T=scale_T)
    raise ConfigError(f"unknown potential {kind!r}")


def run_sim(p, ctx: Context):
    grid = make_grid(p["T"], p["M"] or default_samples(p["T"]))
    V = _potential(p, grid, p["potential"], ctx.seed)
    k = p["k"]
    t_end = p["t_end"] if p["t_end"] is not None else V.horizon
    dt = p["dt"] if p["dt"] is not None else max_stable_dt(grid, V)
    config = PropagatorConfig(dt=dt)
    f = _initial(grid, p["initial"], grid.L).replace(k=k)
    times = np.linspace(0.0, t_end, p["n_out"] + 1)
    u = f
    rows = []
    for a, b in zip(np.concatenate([[0.0], times[:-1]]), times):
        if b > a:
            u = evolve(u, V, k, a, b, config)
        dev = norm_of(grid, u.values - free_propagate(f, b, k).values)
        rows.append((b, dev, norm_of(grid, u.values), energy(u, V, b, k)))
    _finite("sim", u.values)
    ctx.out.write_text("deviation.csv", _csv(["t", "deviation", "norm", "energy"], rows))
    write_snapshot(ctx.out.path("final.rwav"), u)
    ctx.summary.update(
        max_deviation=max(r[1] for r in rows), norm_drift=max(abs(r[2] - 1) for r in rows),
        dt=dt, t_end=t_end,
    )


def run_duhamel_check(p, ctx: Context):
    grid = make_grid(p["T"], p["M"] or default_samples(p["T"]))
    k, t = p["k"], p["t"]
    rows = []
    time_ratios, amp_ratios = [], []
    for trial in range(p["trials"]):
        seed = ctx.seed + trial
        f = low_frequency_profile(grid, grid.L / 4).replace(k=k)
        f = WaveFunction(grid, f.values * np.exp(1j * 0.25 * grid.x), 0.0, k)

        def err(eps, tt):
            V = random_smooth_potential(grid, eps, band=0.5, seed=seed)
            config = PropagatorConfig(dt=min(p["dt"], tt / 8))
            u = evolve(f, V, k, 0.0, tt, config)
            d = duhamel_first_order(f, V, k, tt)
            return norm_of(grid, u.values - d.values)

        e1, e2, e3 = err(p["eps"], t), err(p["eps"], 2 * t), err(2 * p["eps"], t)
        rows.append((trial, e1, e2, e3))
        time_ratios.append(e2 / e1)
        amp_ratios.append(e3 / e1)
    ctx.out.write_text("duhamel.csv", _csv(["trial", "err", "err_double_t", "err_double_v"], rows))
    ctx.summary.update(time_ratio_median=float(np.median(time_ratios)), amplitude_ratio_median=float(np.median(amp_ratios)),
                       time_ratios=time_ratios, amplitude_ratios=amp_ratios)


def run_approx_product(p, ctx: Context):
    grid = _torus_grid(p["T"], p["M"])
    V = build_cosine_resonant(grid, p["gamma"], moving=False, scale_T=p["T"])
    f = _initial(grid, "plane", p["T"]).replace(k=p["k"])
    rows, finals = [], {}
    config = PropagatorConfig(dt=min(p["dt"], max_stable_dt(grid, V)))
    for N in p["N"]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            run = approximation_product(f, V, p["k"], N, config=config)
        for j, (t, d) in enumerate(zip(run.times, run.deviations), 1):
            rows.append((N, j, t, d))
        finals[N] = float(run.deviations[-1])
    ctx.out.write_text("product.csv", _csv(["N", "j", "t", "deviation"], rows))
    ns = sorted(finals)
    ratios = [finals[b] / finals[a] for a, b in zip(ns, ns[1:])]
    ctx.summary.update(final_deviation={str(n): finals[n] for n in ns}, doubling_ratios=ratios)


def run_collision_energy(p, ctx: Context):
    grid = make_grid(p["T"], p["M"])
    V = _potential(p, grid, p["potential"], ctx.seed)
    rng = np.random.default_rng(ctx.seed)
    mmax = max(1, int(p["delta"] * grid.T / 2))
    spec = np.zeros(grid.M, dtype=complex)
    idx = np.arange(-mmax, mmax + 1) % grid.M
    spec[idx] = rng.normal(size=len(idx)) + 1j * rng.normal(size=len(idx))
    v = np.fft.ifft(spec)
    f = WaveFunction(grid, v / norm_of(grid, v))
    etas = np.linspace(0.25, 0.5, p["n_eta"])
    rows = []
    # nodes from the truncation band; the window tails beyond it are below 1e-7
    vband = V.annulus[1] if V.annulus else 0.0
    for eta in etas:
        k = 1.0 / eta
        fo = synthesize(truncate(analyze(f, k), p["delta"]))
        band = DEFAULT_TUBE_C * p["delta"] + 2 / grid.kappa
        omega = k * (band + vband) ** 2 + 2.0
        nodes = p["nodes"] or int(math.ceil(V.horizon * omega / 0.5))
        q = one_collision(fo.replace(k=k), V, k, nodes=nodes)
        rows.append((eta, k, norm_of(grid, q.values) ** 2))
    vals = np.array([r[2] for r in rows])
    _finite("collision energy", vals)
    total = float(np.trapezoid(vals, etas) if hasattr(np, "trapezoid") else np.trapz(vals, etas))
    ctx.out.write_text("collision.csv", _csv(["eta", "k", "q_norm2"], rows))
    ctx.summary.update(collision_energy=total, reference_T_1_minus_gamma=V.scale_T ** (1 - p["gamma"]))


def run_census(p, ctx: Context):
    c = census_counts(
        p["kappa"], p["delta"], p["eps_prime"], slope_range=(p["slope_min"], p["slope_max"]),
        samples=p["samples"], seed=ctx.seed, tau=p["tau"], jobs=ctx.jobs,
    )
    write_census_csv(ctx.out.path("census.csv"), c)
    lo, hi = c.envelope_band()
    ctx.summary.update(
        fitted_C=c.fitted_C, max_total=c.max_total, mean_total=float(c.totals.mean()), envelope_min=lo,
        envelope_max=hi, observation1_C=c.observation1_C, gap_min=c.gap_min, gap_checked=c.gap_checked,
    )


def run_no_lattice(p, ctx: Context):
    r = no_lattice_census(
        p["kappa"], p["upsilon"], p["eps"], slope_range=(p["slope_min"], p["slope_max"]),
        base_samples=p["base_samples"], seed=ctx.seed, jobs=ctx.jobs,
        sep_constant=p["sep_constant"], slope_constant=p["slope_constant"],
    )
    ctx.out.write_text("no_lattice.csv", _csv(
        ["kappa", "upsilon", "eps", "N", "N_control", "N_tubes", "fitted_C"],
        [(r.kappa, r.upsilon, r.eps, r.N, r.N_control, r.N_tubes, r.fitted_C)],
    ))
    ctx.summary.update(N=r.N, N_control=r.N_control, N_tubes=r.N_tubes, fitted_C=r.fitted_C, pairs=r.pairs)


def run_resonance_demo(p, ctx: Context):
    d = resonance_demo(p["T"], p["gamma"], p["k"], dt=p["dt"])
    _finite("resonance demo", d.gaps, d.pde_b2)
    ctx.out.write_text("demo.json", _json(d.report()))
    ctx.out.write_text("transfer.csv", _csv(["t", "pde_b2", "rabi_b2"], zip(d.times, d.pde_b2, d.rabi_b2)))
    ctx.summary.update(max_gap=d.max_gap, transfer_error=d.transfer_error, mode3_constant=d.mode3_constant,
                       eigen_error=d.eigen_error)


def run_trap_demo(p, ctx: Context):
    r = trap_demo(p["T"], p["gamma"], p["lambda"], dt=p["dt"])
    ctx.out.write_text("trap.json", _json(r.report()))
    ctx.summary.update(r.report())


def run_scan_k(p, ctx: Context):
    kind = p["potential"]
    if kind == "bump_lattice":
        grid = make_grid(p["T"], p["M"] or default_samples(p["T"]))
        V = build_bump_lattice(grid, p["gamma"], seed=ctx.seed)
        f = low_frequency_profile(grid, 2 * grid.L)
    else:
        grid = _torus_grid(p["T"], p["M"])
        V = _potential(p, grid, kind, ctx.seed, scale_T=p["T"])
        f = low_frequency_profile(grid, p["T"])
    config = PropagatorConfig(dt=min(p["dt"], max_stable_dt(grid, V)))
    a, b = p["k_interval"]
    res = scan_k(f, V, (a, b), p["n_k"], config=config, threshold=p["threshold"], jobs=ctx.jobs)
    _finite("scan", res.deviation)
    write_scan_csv(ctx.out.path("scan.csv"), res)
    ctx.summary.update(median=res.median, peak_k=res.peak, peak_deviation=float(res.deviation.max()),
                       resonant_fraction=res.resonant_fraction, resonant_k=[float(k) for k in res.resonant])


def _check_interval(p):
    if len(p["k_interval"]) != 2:
        raise ConfigError("k_interval needs two values")
    a, b = p["k_interval"]
    if not 0 < a < b:
        raise ConfigError("k_interval must be positive and increasing")


F, I, FL, IL = _as_float, _as_int, _as_floats, _as_ints
TWO_PI = 2 * math.pi

EXPERIMENTS: dict[str, Experiment] = {e.name: e for e in [
    Experiment("frame_check", "exact Plancherel identity and reconstruction of the wave-packet frame",
               {"T": (F, 64.0), "M": (I, 1024), "k": (F, 2.5), "trials": (I, 10)},
               ("frame.csv", "coefficients.csv"), run_frame_check),
    Experiment("sim", "split-step evolution against exact free evolution",
               {"T": (F, None), "M": (I, 0), "k": (F, 1.0), "gamma": (F, 1.0),
                "potential": (_choice("zero", "cosine", "cosine_moving", "bump_lattice", "trap"), "zero"),
                "lambda": (F, 30.0), "t_end": (F, -1.0), "dt": (F, -1.0), "n_out": (I, 64),
                "initial": (_choice("bump", "plane"), "bump")},
               ("deviation.csv", "final.rwav"), run_sim),
    Experiment("duhamel_check", "quadratic error of the first-order Duhamel approximation",
               {"T": (F, 64.0), "M": (I, 0), "k": (F, 1.0), "t": (F, 0.2), "eps": (F, 0.1), "dt": (F, 0.002),
                "trials": (I, 5)},
               ("duhamel.csv",), run_duhamel_check),
    Experiment("approx_product", "product of free steps and windowed one-collision terms",
               {"T": (F, TWO_PI * 64), "M": (I, 0), "k": (F, 1.0), "gamma": (F, 0.8), "N": (IL, "64, 128"),
                "dt": (F, 0.1)},
               ("product.csv",), run_approx_product),
    Experiment("collision_energy", "eta-averaged energy of the one-collision operator on truncated data",
               {"T": (F, 64.0), "M": (I, 1024), "gamma": (F, 0.9), "delta": (F, 0.25), "n_eta": (I, 5),
                "nodes": (I, 0), "potential": (_choice("bump_lattice", "zero"), "bump_lattice")},
               ("collision.csv",), run_collision_energy),
    Experiment("census", "globally resonant forward tubes per row offset s and their envelope",
               {"kappa": (I, 16), "delta": (F, 0.1), "eps_prime": (F, 0.1), "slope_min": (F, 1.0),
                "slope_max": (F, 2.0), "samples": (I, 400), "tau": (F, 0.25)},
               ("census.csv",), run_census),
    Experiment("no_lattice", "non-parallel forward families resonating through two backward tubes",
               {"kappa": (I, 16), "upsilon": (F, 0.125), "eps": (F, 0.125), "slope_min": (F, 1.0),
                "slope_max": (F, 2.0), "base_samples": (I, 12), "sep_constant": (F, 0.5),
                "slope_constant": (F, 0.5)},
               ("no_lattice.csv",), run_no_lattice),
    Experiment("resonance_demo", "static cosine resonance against the two-level transfer model",
               {"T": (F, TWO_PI * 100), "gamma": (F, 0.75), "k": (F, 1.0), "dt": (F, 0.1)},
               ("demo.json", "transfer.csv"), run_resonance_demo),
    Experiment("trap_demo", "bound state of a rescaled well versus free spreading",
               {"T": (F, 256.0), "gamma": (F, 0.8), "lambda": (F, 30.0), "dt": (F, 0.05)},
               ("trap.json",), run_trap_demo),
    Experiment("scan_k", "deviation from free evolution across dispersion coefficients",
               {"T": (F, TWO_PI * 64), "M": (I, 0), "gamma": (F, 0.75),
                "potential": (_choice("cosine_moving", "cosine", "bump_lattice", "zero"), "cosine_moving"),
                "k_interval": (FL, "0.3, 0.8"), "n_k": (I, 33), "dt": (F, 0.2), "threshold": (F, 0.1)},
               ("scan.csv",), run_scan_k, _check_interval),
]}

# sentinel defaults meaning "derive from the grid"
_DERIVED = {"M": 0, "t_end": -1.0, "dt": -1.0, "nodes": 0}


def list_experiments() -> list[dict]:
    out = []
    for e in EXPERIMENTS.values():
        out.append({
            "name": e.name, "anchor": e.anchor, "required": e.required,
            "params": sorted(e.params), "outputs": list(e.outputs),
        })
    return out


def format_listing() -> str:
    rows = list_experiments()
    w = max(len(r["name"]) for r in rows)
    lines = []
    for r in rows:
        req = ", ".join(r["required"]) or "-"
        lines.append(f"{r['name']:<{w}}  {r['anchor']}")
        lines.append(f"{'':<{w}}  required: {req}; outputs: {', '.join(r['outputs'])}")
    return "\n".join(lines)


def load_config(raw: dict[str, str]) -> tuple[Experiment, dict, int]:
    if "experiment" not in raw:
        raise ConfigError("missing key 'experiment'")
    name = raw["experiment"]
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}")
    exp = EXPERIMENTS[name]
    unknown = sorted(set(raw) - set(exp.params) - {"experiment", "seed"})
    if unknown:
        raise ConfigError(f"unknown keys for {name}: {', '.join(unknown)}")
    params = {}
    for key, (parse, default) in exp.params.items():
        if key in raw:
            text = raw[key]
        elif default is None:
            raise ConfigError(f"missing required key {key!r}")
        elif isinstance(default, str):
            text = default
        else:
            params[key] = None if key in _DERIVED and default == _DERIVED[key] else default
            continue
        try:
            params[key] = parse(text)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
        if key in _DERIVED and params[key] == _DERIVED[key]:
            params[key] = None
    try:
        seed = _as_int(raw.get("seed", "0"))
    except ValueError as exc:
        raise ConfigError(f"bad seed: {exc}") from None
    if exp.validate:
        exp.validate(params)
    for key in ("T", "k", "dt", "t_end", "t", "eps"):
        if params.get(key) is not None and not params[key] > 0:
            raise ConfigError(f"{key} must be positive")
    return exp, params, seed


def run(config_path: str, out_dir: str, jobs: int = 1, seed: int | None = None) -> dict:
    """Run one experiment and return its record; raises on failure."""
    try:
        with open(config_path) as fh:
            raw = parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    exp, params, cfg_seed = load_config(raw)
    seed = cfg_seed if seed is None else seed
    if jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    staging = Staging(out_dir)
    ctx = Context(staging, jobs, seed)
    start = time.perf_counter()
    try:
        exp.runner(params, ctx)
        record = {
            "experiment": exp.name,
            "config": {"experiment": exp.name, "seed": seed, **{k: v for k, v in params.items()}},
            "versions": {"roughwave": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "wall_time": time.perf_counter() - start,
            "summary": ctx.summary,
        }
        record["artifacts"] = staging.commit()
    except BaseException:
        staging.discard()
        raise
    tmp = os.path.join(out_dir, ".run_record.json.tmp")
    with open(tmp, "w") as fh:
        fh.write(_json(record))
    os.replace(tmp, os.path.join(out_dir, "run_record.json"))
    return record


def _fail(code: int, kind: str, message: str) -> int:
    print(json.dumps({"status": "error", "kind": kind, "exit_code": code, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="roughwave", description="Run a roughwave experiment from a config file.")
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads for independent work items")
    parser.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    parser.add_argument("--list", action="store_true", help="list experiments and exit")
    args = parser.parse_args(argv)
    if args.list:
        print(format_listing())
        return EXIT_OK
    if not args.config:
        parser.print_usage(sys.stderr)
        return _fail(EXIT_CONFIG, "config", "--config is required")
    try:
        record = run(args.config, args.out, args.jobs, args.seed)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except BudgetExceeded as exc:
        return _fail(EXIT_BUDGET, "budget", str(exc))
    except (NumericalGuard, QuadratureError, StabilityError) as exc:
        return _fail(EXIT_NUMERIC, "numerical", str(exc))
    except ValueError as exc:
        # parameters outside a module's admissible range
        return _fail(EXIT_CONFIG, "config", str(exc))
    print(json.dumps({"status": "ok", "experiment": record["experiment"], "summary": _jsonable(record["summary"])}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
