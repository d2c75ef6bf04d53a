"""Kac-style direct simulation Monte Carlo for the inelastic Maxwell gas.

A finite ensemble of N velocities evolves by a pair-collision jump process:
every particle collides at unit rate, so pair events arrive at rate N/2. Time
is discretized into steps of length dt and each step draws a Poisson(N dt/2)
number of events; every event picks a uniform distinct (i, j), draws a sigma
direction from the angular density B(k.sigma)/(4 pi) on the sphere, and applies
the sigma-parameterized collision map shared with :mod:`maxcool.kinematics`.

Estimators recorded along the way: mean velocity, m2, m4, and the radial
empirical characteristic function (ECF) on a fixed x-grid, computed as an
average of cos(x d.v) over 64 fixed quasi-random directions d. Fisher
information is deliberately not estimated from particles; density-level
functionals live in :mod:`maxcool.realspace`.

Determinism: every random draw comes from counter-based streams keyed by
(seed, step index), with the initial sampling on stream 0. A (seed, config)
pair therefore fixes the whole trajectory bit-exactly, and replicas with
distinct seeds are independent.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kinematics
from .kinematics import RatePair, Restitution, _block_rng, _check_e, _swap_forward, _uniform_sphere

__all__ = [
    "Ensemble",
    "parse_initial_spec",
    "sample_initial",
    "run",
    "rescaled_estimates",
    "ecf",
    "fibonacci_directions",
    "save_series",
    "load_series",
]

# acceptance gate for the angular rejection sampler: expected acceptance is
# 1/Bmax because the uniform proposal averages B to its normalized mean 1
_MIN_ACCEPTANCE = 0.01
# safety pad on the grid estimate of sup B; only costs acceptance, never bias
_BMAX_PAD = 1.05
_SERIES_HEADER = re.compile(r"#\s*maxcool-dsmc\s+v1\s+x_grid=(.*)$")


@dataclass
class Ensemble:
    """Empirical velocity ensemble: N particles, current time, replica seed.

    The sample mean velocity is zero at initialization (sample_initial centers
    its draws) and stays at zero up to rounding because every collision event
    conserves the pair momentum exactly. `run` mutates the ensemble in place.
    """

    velocities: np.ndarray
    t: float = 0.0
    seed: int = 0
    e: float = 1.0
    collisions_applied: int = 0
    steps_taken: int = field(default=0, repr=False)

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(np.asarray(self.velocities, dtype=float))
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"velocities must have shape (N, 3), got {v.shape}")
        if v.shape[0] < 2:
            raise ValueError("ensemble needs at least 2 particles")
        if not np.all(np.isfinite(v)):
            raise ValueError("velocities must be finite")
        self.velocities = v
        self.e = _check_e(self.e)
        self.t = float(self.t)
        if self.t < 0.0:
            raise ValueError("time must be nonnegative")
        self.seed = int(self.seed)
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")

    @property
    def n(self) -> int:
        return self.velocities.shape[0]

    def moments(self):
        """Return (mean velocity, m2, m4) of the current ensemble."""
        sq = np.einsum("ij,ij->i", self.velocities, self.velocities)
        return self.velocities.mean(axis=0), float(sq.mean()), float((sq * sq).mean())

    def copy(self) -> "Ensemble":
        return Ensemble(self.velocities.copy(), t=self.t, seed=self.seed, e=self.e,
                        collisions_applied=self.collisions_applied,
                        steps_taken=self.steps_taken)


def parse_initial_spec(spec):
    """Normalize an initial-data spec to a dict.

    Accepts dicts like {"kind": "maxwellian", "theta": 1.0} or
    {"kind": "mixture", "p": .5, "theta1": .6, "theta2": 1.4}, or the string
    forms "maxwellian[:theta]" and "mixture:p,theta1,theta2" ("bimax" is an
    alias for "mixture"). Returns a dict with a "kind" key.
    """
    if isinstance(spec, str):
        name, _, rest = spec.partition(":")
        name = name.strip().lower()
        vals = [float(tok) for tok in rest.split(",") if tok.strip()] if rest else []
        if name == "maxwellian":
            if len(vals) > 1:
                raise ValueError("maxwellian spec takes one parameter: theta")
            spec = {"kind": "maxwellian", "theta": vals[0] if vals else 1.0}
        elif name in ("mixture", "bimax"):
            if len(vals) != 3:
                raise ValueError("mixture spec needs three parameters: p,theta1,theta2")
            spec = {"kind": "mixture", "p": vals[0], "theta1": vals[1], "theta2": vals[2]}
        else:
            raise ValueError(f"unknown initial spec kind {name!r}")
    try:
        kind = spec["kind"]
    except (TypeError, KeyError):
        raise ValueError("initial spec must be a string or a dict with a 'kind' key")
    if kind == "maxwellian":
        theta = float(spec.get("theta", 1.0))
        if theta <= 0.0:
            raise ValueError(f"theta must be positive, got {theta}")
        return {"kind": "maxwellian", "theta": theta}
    if kind in ("mixture", "bimax"):
        p = float(spec["p"])
        theta1 = float(spec["theta1"])
        theta2 = float(spec["theta2"])
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"mixture weight p must lie in [0, 1], got {p}")
        if theta1 <= 0.0 or theta2 <= 0.0:
            raise ValueError("mixture temperatures must be positive")
        return {"kind": "mixture", "p": p, "theta1": theta1, "theta2": theta2}
    raise ValueError(f"unknown initial spec kind {kind!r}")


def sample_initial(spec, N: int, seed: int, e: float = 1.0) -> Ensemble:
    """Draw N i.i.d. velocities from an initial spec, mean-center, return an Ensemble.

    spec: {"kind": "maxwellian", "theta": th} for an isotropic Gaussian, or
    {"kind": "mixture", "p": p, "theta1": a, "theta2": b} for a two-temperature
    Gaussian mixture (string shorthands accepted, see parse_initial_spec).
    Identical (spec, N, seed) give bit-identical ensembles. The empirical m2
    is checked against its target with a 5/sqrt(N) band; a miss only warns,
    since it is a legitimate (if rare) sampling fluctuation.
    """
    spec = parse_initial_spec(spec)
    N = int(N)
    if N < 2:
        raise ValueError("N must be at least 2")
    rng = _block_rng(int(seed), 0)
    draws = rng.standard_normal((N, 3))
    if spec["kind"] == "maxwellian":
        vel = draws * np.sqrt(spec["theta"])
        target_m2 = 3.0 * spec["theta"]
    else:
        cold = rng.random(N) < spec["p"]
        scale = np.where(cold, np.sqrt(spec["theta1"]), np.sqrt(spec["theta2"]))
        vel = draws * scale[:, None]
        target_m2 = 3.0 * (spec["p"] * spec["theta1"] + (1.0 - spec["p"]) * spec["theta2"])
    vel -= vel.mean(axis=0)
    ens = Ensemble(vel, t=0.0, seed=int(seed), e=e)
    _, m2, _ = ens.moments()
    band = 5.0 / np.sqrt(N)
    if abs(m2 - target_m2) > band:
        warnings.warn(
            f"empirical m2 = {m2:.6g} misses target {target_m2:.6g} "
            f"by more than 5/sqrt(N) = {band:.3g}",
            stacklevel=2,
        )
    return ens


@lru_cache(maxsize=8)
def fibonacci_directions(m: int = 64) -> np.ndarray:
    """m fixed quasi-random unit vectors (Fibonacci sphere lattice)."""
    if m < 1:
        raise ValueError("need at least one direction")
    i = np.arange(m, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / m
    golden = 0.5 * (1.0 + np.sqrt(5.0))
    azimuth = 2.0 * np.pi * i / golden
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    out = np.column_stack([rho * np.cos(azimuth), rho * np.sin(azimuth), z])
    out.setflags(write=False)
    return out


def _ecf_arrays(vel: np.ndarray, x_grid: np.ndarray, dirs: np.ndarray):
    # per-particle direction averages give an i.i.d. sample for the stderr
    proj = vel @ dirs.T
    n = vel.shape[0]
    est = np.empty(x_grid.size)
    err = np.empty(x_grid.size)
    for jx, x in enumerate(x_grid):
        per_particle = np.cos(x * proj).mean(axis=1)
        est[jx] = per_particle.mean()
        err[jx] = per_particle.std(ddof=1) / np.sqrt(n)
    return est, err


def _check_x_grid(x_grid) -> np.ndarray:
    x = np.asarray(x_grid, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("x_grid must be a nonempty 1-D array")
    if not np.all(np.isfinite(x)) or np.any(x < 0.0):
        raise ValueError("x_grid values must be finite and nonnegative")
    return x


def ecf(ens: Ensemble, x_grid) -> tuple:
    """Radial empirical characteristic function on x_grid.

    Returns (values, stderr): values[j] is the average over 64 fixed
    quasi-random directions d of (1/N) sum_i cos(x_j d.v_i); stderr[j] is the
    standard error of the per-particle direction averages. x = 0 gives
    exactly 1 with zero error.
    """
    x = _check_x_grid(x_grid)
    return _ecf_arrays(ens.velocities, x, fibonacci_directions(64))


def _conflict_free_run(idx: np.ndarray) -> int:
    """Length of the maximal event prefix whose particle indices are distinct."""
    flat = idx.ravel()
    order = np.argsort(flat, kind="stable")
    sv = flat[order]
    repeats = np.nonzero(sv[1:] == sv[:-1])[0]
    if repeats.size == 0:
        return idx.shape[0]
    first_slot = int(np.min(order[repeats + 1]))
    return max(first_slot // 2, 1)


def _rel_directions(vi: np.ndarray, wj: np.ndarray) -> np.ndarray:
    u = vi - wj
    norm = np.linalg.norm(u, axis=1, keepdims=True)
    k = np.divide(u, norm, out=np.zeros_like(u), where=norm > 0.0)
    # grazing pairs (v == w) collide trivially; any placeholder axis works
    k[norm[:, 0] == 0.0] = (0.0, 0.0, 1.0)
    return k


def _draw_sigma(rng: np.random.Generator, k: np.ndarray, pair: RatePair, bmax: float) -> np.ndarray:
    """Rejection-sample sigma ~ B(k.sigma)/(4 pi) with a uniform proposal."""
    m = k.shape[0]
    sigma = np.empty((m, 3))
    pending = np.arange(m)
    for _ in range(100_000):
        if pending.size == 0:
            return sigma
        cand = _uniform_sphere(rng, pending.size)
        s = np.einsum("ij,ij->i", k[pending], cand)
        accept = rng.random(pending.size) * bmax <= np.asarray(pair.B(s), dtype=float)
        sigma[pending[accept]] = cand[accept]
        pending = pending[~accept]
    raise RuntimeError("rejection sampler failed to terminate")  # pragma: no cover


def _apply_events(vel: np.ndarray, idx: np.ndarray, e: float,
                  rng: np.random.Generator, pair: RatePair, bmax: float) -> None:
    """Apply the events in order, vectorizing over conflict-free runs.

    Events within a conflict-free run touch pairwise-distinct particles, so
    the vectorized update is bit-identical to applying them one at a time.
    sigma draws happen run by run because the angular density depends on the
    current relative direction k, which earlier events may have changed.
    """
    start = 0
    total = idx.shape[0]
    while start < total:
        stop = start + _conflict_free_run(idx[start:])
        sel = idx[start:stop]
        vi = vel[sel[:, 0]]
        wj = vel[sel[:, 1]]
        if pair.is_constant:
            sigma = _uniform_sphere(rng, stop - start)
        else:
            sigma = _draw_sigma(rng, _rel_directions(vi, wj), pair, bmax)
        vp, wp, _, _ = _swap_forward(vi, wj, sigma, e)
        vel[sel[:, 0]] = vp
        vel[sel[:, 1]] = wp
        start = stop


def run(ens: Ensemble, t_max: float, dt: float, pair: RatePair = None,
        x_grid=None, record_every: int = None) -> dict:
    """Evolve the ensemble in place for a horizon t_max; return a time series.

    Each step of length dt draws Poisson(N dt/2) collision events (unit
    per-particle collision rate). pair defaults to the constant Maxwell rate;
    a non-constant B is rejection-sampled and rejected as unsuitable if the
    expected acceptance 1/sup(B) falls below 1%. Estimators are recorded every
    record_every steps (default: about 200 rows), always including the initial
    and final states; the ECF is recorded only when x_grid is given.

    Returns {"t", "m1", "m2", "m4", "n_particles", "e"} plus
    {"x_grid", "ecf", "ecf_stderr"} when x_grid is given.
    """
    if dt <= 0.0 or dt > 0.1:
        raise ValueError(f"dt must lie in (0, 0.1], got {dt}")
    if t_max <= 0.0:
        raise ValueError("t_max must be positive")
    pair = RatePair.maxwell_constant() if pair is None else pair
    bmax = 1.0
    if not pair.is_constant:
        sgrid = np.linspace(-1.0, 1.0, 4001)
        bmax = _BMAX_PAD * float(np.max(np.asarray(pair.B(sgrid), dtype=float)))
        if 1.0 / bmax < _MIN_ACCEPTANCE:
            raise ValueError(
                f"rejection acceptance 1/sup(B) = {1.0 / bmax:.2e} is below "
                f"{_MIN_ACCEPTANCE:.0%}: rate unsuitable for uniform-proposal sampling"
            )
    n_steps = max(int(round(t_max / dt)), 1)
    if abs(n_steps * dt - t_max) > 1e-9 * max(t_max, 1.0):
        warnings.warn(
            f"snapping horizon to {n_steps} steps of dt={dt} "
            f"(covers {n_steps * dt:.6g}, requested {t_max:.6g})",
            stacklevel=2,
        )
    if record_every is None:
        record_every = max(n_steps // 200, 1)
    record_every = int(record_every)
    if record_every < 1:
        raise ValueError("record_every must be a positive integer")
    x = _check_x_grid(x_grid) if x_grid is not None else None
    dirs = fibonacci_directions(64) if x is not None else None

    vel = ens.velocities
    n = ens.n
    t0 = ens.t
    rows = []

    def _record(step: int) -> None:
        m1, m2, m4 = ens.moments()
        row = [t0 + step * dt, m1, m2, m4]
        if x is not None:
            row.extend(_ecf_arrays(vel, x, dirs))
        rows.append(row)

    _record(0)
    for step in range(1, n_steps + 1):
        rng = _block_rng(ens.seed, 1 + ens.steps_taken + step)
        n_events = int(rng.poisson(0.5 * n * dt))
        if n_events:
            i = rng.integers(0, n, n_events)
            j = (i + rng.integers(1, n, n_events)) % n
            idx = np.column_stack([i, j])
            _apply_events(vel, idx, ens.e, rng, pair, bmax)
            ens.collisions_applied += n_events
        if step % record_every == 0 or step == n_steps:
            _record(step)

    ens.steps_taken += n_steps
    ens.t = t0 + n_steps * dt
    series = {
        "t": np.array([r[0] for r in rows]),
        "m1": np.array([r[1] for r in rows]),
        "m2": np.array([r[2] for r in rows]),
        "m4": np.array([r[3] for r in rows]),
        "n_particles": n,
        "e": ens.e,
    }
    if x is not None:
        series["x_grid"] = x.copy()
        series["ecf"] = np.array([r[4] for r in rows])
        series["ecf_stderr"] = np.array([r[5] for r in rows])
    return series


def rescaled_estimates(series: dict, e: float) -> dict:
    """Map a recorded series to the rescaled (constant-temperature) frame.

    Moments pick up factors e^{kEt}: m1 e^{Et}, m2 e^{2Et}, m4 e^{4Et}. The
    rescaled characteristic function at abscissa x equals the unscaled one at
    e^{Et} x, so the recorded ECF values are reused with per-row abscissae
    x_grid e^{-Et}, returned as "x_rescaled".
    """
    e = _check_e(e)
    big_e = Restitution(e).E
    t = np.asarray(series["t"], dtype=float)
    fac = np.exp(big_e * t)
    out = {
        "t": t.copy(),
        "m1": np.asarray(series["m1"], dtype=float) * fac[:, None],
        "m2": np.asarray(series["m2"], dtype=float) * fac**2,
        "m4": np.asarray(series["m4"], dtype=float) * fac**4,
    }
    for key in ("n_particles", "e"):
        if key in series:
            out[key] = series[key]
    if "ecf" in series:
        x = np.asarray(series["x_grid"], dtype=float)
        out["x_grid"] = x.copy()
        out["ecf"] = np.asarray(series["ecf"], dtype=float).copy()
        out["ecf_stderr"] = np.asarray(series["ecf_stderr"], dtype=float).copy()
        out["x_rescaled"] = x[None, :] / fac[:, None]
    return out


def save_series(path, series: dict) -> None:
    """Write a run series as CSV: t, m1x, m1y, m1z, m2, m4, ecf_x0, ...

    The header names the ECF x-grid. Standard errors are in-memory estimates
    and are not part of the interchange format.
    """
    has_ecf = "ecf" in series
    x = np.asarray(series["x_grid"], dtype=float) if has_ecf else np.empty(0)
    cols = ["t", "m1x", "m1y", "m1z", "m2", "m4"]
    cols += [f"ecf_x{i}" for i in range(x.size)]
    t = np.asarray(series["t"], dtype=float)
    body = [t[:, None], np.asarray(series["m1"], dtype=float),
            np.asarray(series["m2"], dtype=float)[:, None],
            np.asarray(series["m4"], dtype=float)[:, None]]
    if has_ecf:
        body.append(np.asarray(series["ecf"], dtype=float))
    table = np.hstack(body)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# maxcool-dsmc v1 x_grid=" + ",".join(f"{v:.17g}" for v in x) + "\n")
        fh.write(",".join(cols) + "\n")
        for row in table:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_series(path) -> dict:
    """Read a series written by save_series."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        match = _SERIES_HEADER.match(header)
        if not match:
            raise ValueError(f"unrecognized series header: {header!r}")
        x_text = match.group(1).strip()
        x = np.array([float(tok) for tok in x_text.split(",") if tok.strip()])
        line = fh.readline()  # column names; extra comment lines may precede
        while line.lstrip().startswith("#"):
            line = fh.readline()
        table = np.loadtxt(fh, delimiter=",", ndmin=2)
    expected = 6 + x.size
    if table.shape[1] != expected:
        raise ValueError(f"series has {table.shape[1]} columns, header implies {expected}")
    series = {"t": table[:, 0], "m1": table[:, 1:4], "m2": table[:, 4], "m4": table[:, 5]}
    if x.size:
        series["x_grid"] = x
        series["ecf"] = table[:, 6:]
    return series
