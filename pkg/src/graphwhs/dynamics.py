"""Time integration of the density/momentum flow with additive noise.

The state (rho, S) follows

    d rho = (dH0V/dS) dt,      dS = -(dH0V/drho) dt - sigma dW,

where H0V is the dominant energy plus the linear control potential.  The
noise energy is linear in rho with no S dependence, so the noise enters S
additively and the Stratonovich and Ito forms coincide; the drift is
integrated by an explicit midpoint (Heun) step, giving deterministic order
2 and strong order 1.

Boundary handling: the density drift is tangent to the simplex (mass is
conserved to rounding), but a large step can still push a component below
the configured floor.  Such a step is split in half recursively, with the
midpoint Brownian value drawn from a dedicated bridge stream so the coarse
path is refined rather than resampled, up to ``max_rejects`` levels; beyond
that the path reports a boundary escape.

Everything here is deterministic given (config, master seed): paths own
pre-assigned noise streams, batches advance paths in lockstep with
per-element arithmetic, and worker parallelism only chunks the path axis.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .energies import EnergySpec, dominant_array, gradient_arrays
from .graphs import Array, DensityState, DomainError, MomentumState
from .rng import RngStream, batch_increments


class BoundaryEscapeError(RuntimeError):
    """A path could not be kept inside the simplex within the reject budget."""

    def __init__(self, time: float, path_index: int, trajectory=None):
        super().__init__(f"path {path_index} escaped the interior near t={time:.6g}")
        self.time = time
        self.path_index = path_index
        self.trajectory = trajectory


class EscapeQuotaError(RuntimeError):
    """More than the tolerated fraction of ensemble paths escaped."""

    def __init__(self, escaped: int, total: int):
        super().__init__(f"{escaped} of {total} paths escaped the interior")
        self.escaped = escaped
        self.total = total


@dataclass(frozen=True)
class SdeConfig:
    energy: EnergySpec
    t0: float = 0.0
    T: float = 1.0
    dt: float = 1e-3
    control: object | None = None   # anything with value_at(t) -> vector
    boundary_floor: float = 1e-9
    max_rejects: int = 10

    def __post_init__(self):
        if not 0.0 <= self.t0 < self.T:
            raise DomainError("need 0 <= t0 < T")
        if self.dt <= 0.0:
            raise DomainError("dt must be positive")
        n = self.energy.graph.n
        if not 0.0 < self.boundary_floor < 1.0 / n:
            raise DomainError("boundary_floor must lie in (0, 1/n)")
        if not 0 <= self.max_rejects <= 10:
            raise DomainError("max_rejects must lie in [0, 10]")

    def control_value(self, t: float) -> Array | None:
        if self.control is None:
            return None
        return np.asarray(self.control.value_at(t), dtype=float)


@dataclass(frozen=True)
class Trajectory:
    """One realized path, including the noise that produced it."""

    times: Array        # (K+1,)
    rho_path: Array     # (K+1, n)
    s_path: Array       # (K+1, n)
    h0_path: Array      # dominant energy along the path
    h0v_path: Array     # dominant energy including the control potential
    dw_path: Array      # (K, n) Brownian increments per output interval
    seed: int
    path_index: int

    @property
    def n(self) -> int:
        return self.rho_path.shape[1]

    def to_csv(self, path) -> None:
        n = self.n
        header = (
            ["t"]
            + [f"rho_{i}" for i in range(n)]
            + [f"S_{i}" for i in range(n)]
            + ["H0", "H0V"]
        )
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for k in range(self.times.size):
                row = (
                    [repr(float(self.times[k]))]
                    + [repr(float(v)) for v in self.rho_path[k]]
                    + [repr(float(v)) for v in self.s_path[k]]
                    + [repr(float(self.h0_path[k])), repr(float(self.h0v_path[k]))]
                )
                writer.writerow(row)


def drift_field(energy: EnergySpec, V, rho: DensityState, x: MomentumState):
    """(d rho/dt, S-drift) for one state; the first component is mean-zero."""
    d_rho, d_x = gradient_arrays(energy, rho.rho, x.s)
    s_drift = -d_rho
    if V is not None:
        s_drift = s_drift - np.asarray(V, dtype=float)
    return d_x, s_drift


# ---------------------------------------------------------------------------
# stepping core (batched; scalar paths are 1-row batches)
# ---------------------------------------------------------------------------

def _drift_arrays(energy: EnergySpec, V, rho: Array, x: Array):
    d_rho, d_x = gradient_arrays(energy, rho, x)
    s_drift = -d_rho
    if V is not None:
        s_drift = s_drift - V
    return d_x, s_drift


def midpoint_step(energy: EnergySpec, floor: float, rho: Array, s: Array, V, dt: float, dw: Array):
    """One midpoint step on (..., n) states; flags rows leaving the interior."""
    f1r, f1s = _drift_arrays(energy, V, rho, s)
    rm = rho + 0.5 * dt * f1r
    sm = s + 0.5 * dt * f1s
    bad = rm.min(axis=-1) <= floor
    # Clamping only touches rows already flagged; their results are discarded.
    f2r, f2s = _drift_arrays(energy, V, np.clip(rm, floor, None), sm)
    new_rho = rho + dt * f2r
    new_s = s + dt * f2s - energy.sigma * dw
    bad = bad | (new_rho.min(axis=-1) <= floor)
    return new_rho, new_s, bad


class _SlotCounter:
    __slots__ = ("value",)

    def __init__(self):
        self.value = 0

    def take(self) -> int:
        self.value += 1
        return self.value - 1


def _advance_one(
    cfg: SdeConfig,
    rho: Array,
    s: Array,
    t: float,
    dt: float,
    dw: Array,
    stream: RngStream,
    step_index: int,
    slots: _SlotCounter,
    depth: int,
    path_index: int,
):
    """Advance a single path over [t, t+dt], splitting the step as needed."""
    V = cfg.control_value(t)
    new_rho, new_s, bad = midpoint_step(
        cfg.energy, cfg.boundary_floor, rho[None], s[None], V, dt, dw[None]
    )
    if not bad[0]:
        return new_rho[0], new_s[0]
    if depth >= cfg.max_rejects:
        raise BoundaryEscapeError(time=t, path_index=path_index)
    # Brownian bridge at the midpoint: W(t+dt/2) conditioned on the coarse
    # increment, so refinement never resamples the path already committed.
    xi = stream.bridge_normal(step_index, slots.take(), rho.size)
    e = 0.5 * math.sqrt(dt) * xi
    half = 0.5 * dw
    rho, s = _advance_one(
        cfg, rho, s, t, 0.5 * dt, half + e, stream, step_index, slots, depth + 1, path_index
    )
    return _advance_one(
        cfg, rho, s, t + 0.5 * dt, 0.5 * dt, half - e, stream, step_index, slots, depth + 1, path_index
    )


def _time_grid(cfg: SdeConfig):
    span = cfg.T - cfg.t0
    full = int(math.floor(span / cfg.dt + 1e-12))
    rem = span - full * cfg.dt
    if rem > 1e-12 * cfg.dt:
        steps = full + 1
        last_dt = rem
    else:
        steps = full
        last_dt = cfg.dt
    times = cfg.t0 + cfg.dt * np.arange(steps + 1)
    times[-1] = cfg.T
    return steps, last_dt, times


def _run_block(cfg: SdeConfig, rho0: Array, x0: Array, master_seed: int, path_ids: Array):
    """Advance paths path_ids[0]..path_ids[-1] in lockstep; returns raw arrays."""
    spec = cfg.energy
    n = spec.graph.n
    P = path_ids.size
    steps, last_dt, times = _time_grid(cfg)
    incs = batch_increments(
        master_seed, P, steps, n, cfg.dt, first_stream=int(path_ids[0])
    )
    if last_dt != cfg.dt and steps > 0:
        incs[:, -1, :] *= math.sqrt(last_dt / cfg.dt)

    rho = np.tile(np.asarray(rho0, dtype=float), (P, 1))
    s = np.tile(np.asarray(x0, dtype=float), (P, 1))
    rho_out = np.empty((P, steps + 1, n))
    s_out = np.empty((P, steps + 1, n))
    h0_out = np.empty((P, steps + 1))
    h0v_out = np.empty((P, steps + 1))
    alive = np.ones(P, dtype=bool)
    escape_time = np.full(P, np.nan)

    def record(k):
        rho_out[:, k] = rho
        s_out[:, k] = s
        h0 = dominant_array(spec, rho, s)
        h0_out[:, k] = h0
        V = cfg.control_value(times[k] if k < steps else times[-1])
        h0v_out[:, k] = h0 if V is None else h0 + rho @ V

    record(0)
    for k in range(steps):
        t = float(times[k])
        dt_k = last_dt if k == steps - 1 else cfg.dt
        V = cfg.control_value(t)
        dw = incs[:, k, :]
        new_rho, new_s, bad = midpoint_step(
            cfg.energy, cfg.boundary_floor, rho, s, V, dt_k, dw
        )
        if bad.any():
            for p in np.flatnonzero(bad & alive):
                stream = RngStream(master_seed, int(path_ids[p]))
                try:
                    new_rho[p], new_s[p] = _advance_one(
                        cfg, rho[p], s[p], t, dt_k, dw[p], stream, k,
                        _SlotCounter(), 0, int(path_ids[p]),
                    )
                except BoundaryEscapeError as err:
                    alive[p] = False
                    escape_time[p] = err.time
                    new_rho[p] = rho[p]
                    new_s[p] = s[p]
        rho = np.where(alive[:, None], new_rho, rho)
        s = np.where(alive[:, None], new_s, s)
        record(k + 1)
    return times, rho_out, s_out, h0_out, h0v_out, incs, alive, escape_time


def simulate(cfg: SdeConfig, rho0: DensityState, x0: MomentumState, rng: RngStream) -> Trajectory:
    """Integrate one path on [t0, T] driven by the given stream."""
    path_ids = np.array([rng.stream_id])
    times, rho_out, s_out, h0, h0v, incs, alive, escape_time = _run_block(
        cfg, rho0.rho, x0.s, rng.master_seed, path_ids
    )
    traj = Trajectory(
        times=times,
        rho_path=rho_out[0],
        s_path=s_out[0],
        h0_path=h0[0],
        h0v_path=h0v[0],
        dw_path=incs[0],
        seed=rng.master_seed,
        path_index=rng.stream_id,
    )
    if not alive[0]:
        raise BoundaryEscapeError(float(escape_time[0]), rng.stream_id, trajectory=traj)
    return traj


def step(cfg: SdeConfig, state, t: float, dt: float, rng: RngStream, step_index: int = 0):
    """One integrator step; standalone entry point used by transforms and tests."""
    rho, x = state
    n = rho.n
    z = rng.base_normals((step_index + 1) * n)[step_index * n:]
    dw = math.sqrt(dt) * z
    new_rho, new_s = _advance_one(
        cfg, rho.rho, x.s, t, dt, dw, rng, step_index, _SlotCounter(), 0, rng.stream_id
    )
    return DensityState(rho=new_rho, floor=min(cfg.boundary_floor, 1e-9)), MomentumState(s=new_s)


def simulate_batch(
    cfg: SdeConfig,
    rho0: DensityState,
    x0: MomentumState,
    n_paths: int,
    master_seed: int,
    workers: int | None = None,
    escape_quota: float = 0.01,
) -> list[Trajectory]:
    """Ensemble of paths on streams 0..n_paths-1; schedule-independent."""
    if n_paths < 1:
        raise DomainError("need at least one path")
    raw = batch_arrays(cfg, rho0, x0, n_paths, master_seed, workers)
    times, rho_out, s_out, h0, h0v, incs, alive, escape_time = raw
    escaped = int((~alive).sum())
    if escaped > escape_quota * n_paths:
        raise EscapeQuotaError(escaped, n_paths)
    out = []
    for p in range(n_paths):
        if not alive[p]:
            continue
        out.append(
            Trajectory(
                times=times,
                rho_path=rho_out[p],
                s_path=s_out[p],
                h0_path=h0[p],
                h0v_path=h0v[p],
                dw_path=incs[p],
                seed=master_seed,
                path_index=p,
            )
        )
    return out


def batch_arrays(
    cfg: SdeConfig,
    rho0: DensityState,
    x0: MomentumState,
    n_paths: int,
    master_seed: int,
    workers: int | None = None,
):
    """Raw ensemble arrays (times, rho, s, h0, h0v, increments, alive, escape_time).

    The heavy consumers (cost estimators, moment scans) work on these
    directly instead of per-path Trajectory objects.
    """
    ids = np.arange(n_paths)
    if not workers or workers <= 1 or n_paths == 1:
        return _run_block(cfg, rho0.rho, x0.s, master_seed, ids)
    chunks = np.array_split(ids, min(workers, n_paths))
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(
            pool.map(lambda c: _run_block(cfg, rho0.rho, x0.s, master_seed, c), chunks)
        )
    times = parts[0][0]
    merged = [np.concatenate([p[i] for p in parts], axis=0) for i in range(1, 8)]
    return (times, *merged)


# ---------------------------------------------------------------------------
# empirical regularity of the energy along paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegularityScan:
    horizons: Array
    moments: Array      # E sup_{r <= t0+Delta} |H0V(r) - H0V(t0)|^2 per horizon
    slope: float | None
    degenerate: bool


def regularity_scan(
    cfg: SdeConfig,
    rho0: DensityState,
    x0: MomentumState,
    horizons,
    n_paths: int,
    master_seed: int = 0,
    workers: int | None = None,
) -> RegularityScan:
    """Log-log slope of the second-moment modulus of H0V over short horizons."""
    horizons = np.sort(np.asarray(horizons, dtype=float))[::-1]
    if horizons.size < 4:
        raise DomainError("need at least four horizons")
    if np.any(horizons <= 0.0) or np.any(np.diff(horizons) >= 0.0):
        raise DomainError("horizons must be positive and strictly decreasing")
    span = float(horizons[0])
    scan_cfg = SdeConfig(
        energy=cfg.energy,
        t0=cfg.t0,
        T=cfg.t0 + span,
        dt=cfg.dt,
        control=cfg.control,
        boundary_floor=cfg.boundary_floor,
        max_rejects=cfg.max_rejects,
    )
    times, _, _, _, h0v, _, alive, _ = batch_arrays(
        scan_cfg, rho0, x0, n_paths, master_seed, workers
    )
    h0v = h0v[alive]
    dev2 = (h0v - h0v[:, :1]) ** 2
    run_sup = np.maximum.accumulate(dev2, axis=1)
    moments = np.empty(horizons.size)
    for i, delta in enumerate(horizons):
        k = int(np.searchsorted(times, cfg.t0 + delta + 1e-12 * span)) - 1
        moments[i] = run_sup[:, k].mean()
    degenerate = bool(np.all(moments <= 0.0))
    slope = None
    if not degenerate and np.all(moments > 0.0):
        slope = float(np.polyfit(np.log(horizons), np.log(moments), 1)[0])
    return RegularityScan(
        horizons=horizons, moments=moments, slope=slope, degenerate=degenerate
    )
