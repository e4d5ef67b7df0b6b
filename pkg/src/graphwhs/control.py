"""Costs, controls, the control Hamiltonian, and Monte-Carlo values.

Controls are ball-constrained piecewise-constant signals.  Two built-in cost
families keep the control dependence purely quadratic,

    F(t, rho, x, V) = c ||V||^2 + G(t, rho, x),

so the inner maximization

    Fhat(q) = sup_{||V|| <= ell} { <q, V> - F }
            = ||q||^2 / (4c)        if ||q|| <= 2 c ell
            = ell ||q|| - c ell^2   otherwise,     minus G,

is closed form; a projected-ascent fallback covers custom running costs.
The families:

* quadratic_control: G is a quadratic tracking penalty (possibly zero),
  h a quadratic terminal penalty.
* bounded_tracking: G = b (1 - exp(-||x - x*||^2 - ||rho - rho*||^2)) and a
  saturating terminal cost, so F and h are uniformly bounded.

Value estimates come from pathwise Monte Carlo over a parameterized control
class (an upper approximation of the adapted-control infimum), optimized
with common random numbers: every candidate reuses the same increment
streams, so comparisons are noise-free to first order and results are
deterministic given (config, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .dynamics import SdeConfig, batch_arrays
from .energies import EnergySpec, gradient_arrays
from .graphs import Array, DensityState, DomainError, MomentumState, ShapeError

QUADRATIC_CONTROL = "quadratic_control"
BOUNDED_TRACKING = "bounded_tracking"
FAMILIES = (QUADRATIC_CONTROL, BOUNDED_TRACKING)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ControlSignal:
    """Piecewise-constant control: values[i] on [breakpoints[i], breakpoints[i+1])."""

    breakpoints: Array  # (m+1,) increasing, spanning the horizon
    values: Array       # (m, n), each row inside the ell-ball
    ell: float

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        if bp.ndim != 1 or bp.size != vals.shape[0] + 1:
            raise ShapeError("need one more breakpoint than control pieces")
        if np.any(np.diff(bp) <= 0.0):
            raise DomainError("breakpoints must be strictly increasing")
        if self.ell <= 0.0:
            raise DomainError("control radius must be positive")
        norms = np.sqrt((vals**2).sum(axis=1))
        if np.any(norms > self.ell * (1.0 + 1e-12)):
            raise DomainError("control value outside the admissible ball")
        bp = bp.copy()
        bp.setflags(write=False)
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, V, t0: float, T: float, ell: float) -> "ControlSignal":
        return cls(breakpoints=np.array([t0, T]), values=np.atleast_2d(V), ell=ell)

    def value_at(self, t: float) -> Array:
        idx = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        idx = min(max(idx, 0), self.values.shape[0] - 1)
        return self.values[idx]


@dataclass(frozen=True)
class CostSpec:
    family: str = QUADRATIC_CONTROL
    control_coeff: float = 0.5
    target_rho: Array | None = None
    target_x: Array | None = None
    tracking_coeff: float = 0.0   # quadratic family's state penalty
    bound: float = 1.0            # bounded family's saturation height
    terminal_weight: float = 0.0
    terminal_offset: float = 0.0  # constant added to h (constant-solution diagnostics)
    custom_running: Callable | None = None  # F(t, rho, x, V); disables closed forms

    def __post_init__(self):
        family = str(self.family).lower()
        if family not in FAMILIES:
            raise DomainError(f"unknown cost family {self.family!r}")
        object.__setattr__(self, "family", family)
        if self.control_coeff <= 0.0:
            raise DomainError("control_coeff must be positive")
        if min(self.tracking_coeff, self.bound, self.terminal_weight) < 0.0:
            raise DomainError("cost weights must be nonnegative")

    def _deviation2(self, rho: Array, x: Array) -> Array:
        dev = np.zeros(np.shape(rho)[:-1])
        if self.target_rho is not None:
            dev = dev + ((rho - np.asarray(self.target_rho)) ** 2).sum(axis=-1)
        if self.target_x is not None:
            dev = dev + ((x - np.asarray(self.target_x)) ** 2).sum(axis=-1)
        return dev

    def state_cost(self, t, rho: Array, x: Array) -> Array:
        """G(t, rho, x): the control-independent part of F."""
        if self.family == QUADRATIC_CONTROL:
            return self.tracking_coeff * self._deviation2(rho, x)
        return self.bound * -np.expm1(-self._deviation2(rho, x))

    def terminal_cost(self, rho: Array, x: Array) -> Array:
        if self.family == QUADRATIC_CONTROL:
            return self.terminal_offset + self.terminal_weight * self._deviation2(rho, x)
        return self.terminal_offset + self.terminal_weight * -np.expm1(
            -self._deviation2(rho, x)
        )


def running_cost(spec: CostSpec, t, rho, x, V) -> float | Array:
    """F(t, rho, x, V); accepts raw arrays with leading batch dimensions."""
    rho = np.asarray(getattr(rho, "rho", rho), dtype=float)
    x = np.asarray(getattr(x, "s", x), dtype=float)
    V = np.asarray(V, dtype=float)
    if spec.custom_running is not None:
        return spec.custom_running(t, rho, x, V)
    out = spec.control_coeff * (V**2).sum(axis=-1) + spec.state_cost(t, rho, x)
    return float(out) if np.ndim(out) == 0 else out


def legendre_fhat(spec: CostSpec, t, rho, x, q, ell: float) -> float:
    """sup over the control ball of <q, V> - F(t, rho, x, V)."""
    if ell <= 0.0:
        raise DomainError("ball radius must be positive")
    rho = np.asarray(getattr(rho, "rho", rho), dtype=float)
    x = np.asarray(getattr(x, "s", x), dtype=float)
    q = np.asarray(q, dtype=float)
    if spec.custom_running is not None:
        return _fhat_ascent(spec, t, rho, x, q, ell)
    c = spec.control_coeff
    qn = float(np.sqrt((q**2).sum()))
    if qn <= 2.0 * c * ell:
        best = qn * qn / (4.0 * c)
    else:
        best = ell * qn - c * ell * ell
    return best - float(spec.state_cost(t, rho, x))


def fhat_on_norms(spec: CostSpec, qn: Array, ell: float) -> Array:
    """Closed-form Fhat as a function of ||q|| only (state part excluded)."""
    c = spec.control_coeff
    return np.where(qn <= 2.0 * c * ell, qn * qn / (4.0 * c), ell * qn - c * ell * ell)


def _fhat_ascent(spec: CostSpec, t, rho, x, q, ell, starts: int = 8, iters: int = 200) -> float:
    # Projected gradient ascent with numerical gradients; multi-start covers
    # nonconcave custom integrands.
    n = q.size
    rng = np.random.default_rng(12345)
    inits = [np.zeros(n), q / max(np.sqrt((q**2).sum()) / ell, 1.0)]
    while len(inits) < starts:
        v = rng.normal(size=n)
        inits.append(v * (ell * rng.random() / np.sqrt((v**2).sum())))

    def objective(v):
        return float(q @ v) - float(spec.custom_running(t, rho, x, v))

    best = -np.inf
    h = 1e-6
    for v in inits:
        v = v.copy()
        step_size = 0.5 * ell
        for _ in range(iters):
            grad = np.empty(n)
            for i in range(n):
                e = np.zeros(n)
                e[i] = h
                grad[i] = (objective(v + e) - objective(v - e)) / (2.0 * h)
            trial = v + step_size * grad
            nrm = np.sqrt((trial**2).sum())
            if nrm > ell:
                trial = trial * (ell / nrm)
            if objective(trial) > objective(v):
                v = trial
                step_size = min(step_size * 1.6, ell)
            else:
                step_size *= 0.5
                if step_size < 1e-12:
                    break
        best = max(best, objective(v))
    return best


def hamiltonian(
    cost: CostSpec,
    energy: EnergySpec,
    t,
    rho,
    x,
    p,
    q,
    Q: Array,
    ell: float,
) -> float:
    """<p, dH0/dx> - <q, dH0/drho> + 1/2 tr(sigma sigma^T Q) - Fhat(q)."""
    rho_arr = np.asarray(getattr(rho, "rho", rho), dtype=float)
    x_arr = np.asarray(getattr(x, "s", x), dtype=float)
    Q = np.asarray(Q, dtype=float)
    if not np.allclose(Q, Q.T, atol=1e-12):
        raise ShapeError("Q must be symmetric")
    d_rho, d_x = gradient_arrays(energy, rho_arr, x_arr)
    quad = 0.5 * float(energy.sigma**2 @ np.diag(Q))
    return (
        float(np.asarray(p) @ d_x)
        - float(np.asarray(q) @ d_rho)
        + quad
        - legendre_fhat(cost, t, rho_arr, x_arr, q, ell)
    )


def control_hamiltonian_integrand(
    cost: CostSpec, energy: EnergySpec, t, rho, x, p, q, Q: Array, V
) -> float:
    """The pre-infimum functional at one control value (brute-force oracle hook)."""
    rho_arr = np.asarray(getattr(rho, "rho", rho), dtype=float)
    x_arr = np.asarray(getattr(x, "s", x), dtype=float)
    d_rho, d_x = gradient_arrays(energy, rho_arr, x_arr)
    V = np.asarray(V, dtype=float)
    quad = 0.5 * float(energy.sigma**2 @ np.diag(np.asarray(Q)))
    return (
        float(np.asarray(p) @ d_x)
        - float(np.asarray(q) @ (d_rho + V))
        + quad
        + float(running_cost(cost, t, rho_arr, x_arr, V))
    )


# ---------------------------------------------------------------------------
# Monte-Carlo cost and value
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValueEstimate:
    value: float
    std_error: float
    n_paths: int
    control_class: str
    trace: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "std_error": self.std_error,
            "n_paths": self.n_paths,
            "control_class": self.control_class,
            "trace": self.trace,
        }


def _pathwise_costs(
    cost: CostSpec,
    cfg: SdeConfig,
    t: float,
    rho: DensityState,
    x: MomentumState,
    control: ControlSignal | None,
    n_paths: int,
    master_seed: int,
    workers=None,
) -> Array:
    run_cfg = replace(cfg, t0=t, control=control)
    times, rho_out, s_out, _, _, _, alive, _ = batch_arrays(
        run_cfg, rho, x, n_paths, master_seed, workers
    )
    rho_out = rho_out[alive]
    s_out = s_out[alive]
    total = np.zeros(rho_out.shape[0])
    # Left-rectangle quadrature of the running cost along each path.
    for k in range(times.size - 1):
        dt_k = float(times[k + 1] - times[k])
        V = np.zeros(rho.n) if control is None else control.value_at(float(times[k]))
        total += dt_k * running_cost(cost, float(times[k]), rho_out[:, k], s_out[:, k], V)
    total += cost.terminal_cost(rho_out[:, -1], s_out[:, -1])
    return total


def cost_functional(
    cost: CostSpec,
    cfg: SdeConfig,
    t: float,
    rho: DensityState,
    x: MomentumState,
    control: ControlSignal | None,
    n_paths: int,
    master_seed: int,
    workers=None,
) -> ValueEstimate:
    """MC estimate of the expected running-plus-terminal cost of one control."""
    total = _pathwise_costs(cost, cfg, t, rho, x, control, n_paths, master_seed, workers)
    value = float(total.mean())
    se = float(total.std(ddof=1) / math.sqrt(total.size)) if total.size > 1 else 0.0
    return ValueEstimate(
        value=value,
        std_error=se,
        n_paths=int(total.size),
        control_class="fixed control",
        trace={"seed": master_seed},
    )


def _golden_min(f, lo: float, hi: float, iters: int):
    """Golden-section minimum of f on [lo, hi]; returns (x, f(x), evals)."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    evals = 2
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
        evals += 1
    if fc <= fd:
        return c, fc, evals
    return d, fd, evals


def _class_breakpoints(control_class: dict, t: float, T: float) -> Array:
    if "breakpoints" in control_class:
        bp = np.asarray(control_class["breakpoints"], dtype=float)
        if abs(bp[0] - t) > 1e-12 or abs(bp[-1] - T) > 1e-12:
            raise DomainError("class breakpoints must span [t, T]")
        return bp
    m = int(control_class.get("m", 1))
    return np.linspace(t, T, m + 1)


def value_function_mc(
    cost: CostSpec,
    cfg: SdeConfig,
    t: float,
    rho: DensityState,
    x: MomentumState,
    control_class: dict,
    n_paths: int,
    master_seed: int,
    budget: int = 150,
    workers=None,
) -> ValueEstimate:
    """Upper approximation of the value function over a restricted class.

    The class is piecewise-constant open loop with ``m`` pieces (or explicit
    breakpoints).  Coordinates are optimized by golden section inside the
    ball slice given the other coordinates (cross-entropy would replace this
    beyond a few pieces; the classes used here stay small).  All candidates
    share increments through the fixed master seed.
    """
    ell = float(control_class.get("ell", getattr(cfg.control, "ell", 1.0)))
    bp = _class_breakpoints(control_class, t, cfg.T)
    m = bp.size - 1
    n = rho.n
    params = np.zeros((m, n))
    evals = 0

    def evaluate(vals) -> float:
        nonlocal evals
        evals += 1
        sig = ControlSignal(breakpoints=bp, values=vals, ell=ell)
        return float(
            _pathwise_costs(cost, cfg, t, rho, x, sig, n_paths, master_seed, workers).mean()
        )

    best = evaluate(params)
    flagged = False
    sweeps = int(control_class.get("sweeps", 2))
    iters = int(control_class.get("golden_iters", 14))
    for _ in range(sweeps):
        improved = False
        for piece in range(m):
            for axis in range(n):
                rest2 = float((params[piece] ** 2).sum() - params[piece, axis] ** 2)
                half = math.sqrt(max(ell * ell - rest2, 0.0))
                if half <= 0.0:
                    continue
                if evals + iters + 2 > budget:
                    flagged = True
                    break

                def f(v):
                    trial = params.copy()
                    trial[piece, axis] = v
                    return evaluate(trial)

                v_star, f_star, _ = _golden_min(f, -half, half, iters)
                if f_star < best - 1e-15:
                    params[piece, axis] = v_star
                    best = f_star
                    improved = True
            if flagged:
                break
        if flagged or not improved:
            break

    sig = ControlSignal(breakpoints=bp, values=params, ell=ell)
    costs = _pathwise_costs(cost, cfg, t, rho, x, sig, n_paths, master_seed, workers)
    se = float(costs.std(ddof=1) / math.sqrt(costs.size)) if costs.size > 1 else 0.0
    return ValueEstimate(
        value=float(costs.mean()),
        std_error=se,
        n_paths=int(costs.size),
        control_class=f"piecewise-constant m={m}, ell={ell}",
        trace={
            "seed": master_seed,
            "budget": budget,
            "evals": evals,
            "flagged": flagged,
            "breakpoints": bp.tolist(),
            "argmin": params.tolist(),
        },
    )


def bellman_gap(
    cost: CostSpec,
    cfg: SdeConfig,
    t: float,
    t_bar: float,
    rho: DensityState,
    x: MomentumState,
    control_class: dict,
    n_paths: int,
    master_seed: int,
    inner_paths: int | None = None,
    lattice_shape=(4, 4, 4),
    workers=None,
    return_detail: bool = False,
):
    """|U(t) - inf_V E[ integral_t^tbar F + U(tbar, state) ]| with nested MC.

    The inner value is evaluated on a small lattice covering the reachable
    cloud at t_bar and interpolated multilinearly (n = 2 states only).
    Returns (gap, combined standard error); with ``return_detail`` a dict of
    the intermediate estimates is appended.
    """
    n = rho.n
    if n != 2:
        raise DomainError("the nested lattice evaluation is specialized to n = 2")
    if not cfg.t0 <= t < t_bar <= cfg.T:
        raise DomainError("need t < t_bar <= T")
    inner_paths = inner_paths or max(n_paths // 4, 200)
    ell = float(control_class.get("ell", 1.0))

    outer_class = dict(control_class)
    outer_class["breakpoints"] = [t, t_bar, cfg.T]
    outer = value_function_mc(
        cost, cfg, t, rho, x, outer_class, n_paths, master_seed, workers=workers
    )

    # Reachable cloud at t_bar under a few probe controls fixes the lattice.
    seg_cfg = replace(cfg, t0=t, T=t_bar)
    probes = [None]
    for sign in (1.0, -1.0):
        probes.append(
            ControlSignal.constant(np.full(n, sign * ell / math.sqrt(n)), t, t_bar, ell)
        )
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    for sig in probes:
        pc = replace(seg_cfg, control=sig)
        _, rho_out, s_out, _, _, _, alive, _ = batch_arrays(
            pc, rho, x, min(n_paths, 400), master_seed
        )
        cloud = np.stack(
            [rho_out[alive, -1, 0], s_out[alive, -1, 0], s_out[alive, -1, 1]], axis=1
        )
        lo = np.minimum(lo, cloud.min(axis=0))
        hi = np.maximum(hi, cloud.max(axis=0))
    pad = 0.05 * (hi - lo) + 1e-6
    lo -= pad
    hi += pad
    lo[0] = max(lo[0], cfg.boundary_floor * 2.0)
    hi[0] = min(hi[0], 1.0 - cfg.boundary_floor * 2.0)

    axes = [np.linspace(lo[i], hi[i], lattice_shape[i]) for i in range(3)]
    inner_class = dict(control_class)
    inner_class.pop("breakpoints", None)
    inner_class["m"] = 1
    inner_values = np.empty(lattice_shape)
    inner_se_max = 0.0
    for a, r1 in enumerate(axes[0]):
        for b, x1 in enumerate(axes[1]):
            for c, x2 in enumerate(axes[2]):
                node_rho = DensityState(rho=np.array([r1, 1.0 - r1]))
                node_x = MomentumState(s=np.array([x1, x2]))
                est = value_function_mc(
                    cost, cfg, t_bar, node_rho, node_x, inner_class,
                    inner_paths, master_seed + 7_777_777, workers=workers,
                )
                inner_values[a, b, c] = est.value
                inner_se_max = max(inner_se_max, est.std_error)
    interp = RegularGridInterpolator(axes, inner_values, bounds_error=False, fill_value=None)

    def middle_objective(V1: Array) -> tuple[float, float]:
        sig = ControlSignal.constant(V1, t, t_bar, ell)
        run_cfg = replace(seg_cfg, control=sig)
        times, rho_out, s_out, _, _, _, alive, _ = batch_arrays(
            run_cfg, rho, x, n_paths, master_seed, workers
        )
        rho_out = rho_out[alive]
        s_out = s_out[alive]
        total = np.zeros(rho_out.shape[0])
        for k in range(times.size - 1):
            dt_k = float(times[k + 1] - times[k])
            total += dt_k * running_cost(
                cost, float(times[k]), rho_out[:, k], s_out[:, k], V1
            )
        pts = np.stack(
            [rho_out[:, -1, 0], s_out[:, -1, 0], s_out[:, -1, 1]], axis=1
        )
        total += interp(pts)
        se = float(total.std(ddof=1) / math.sqrt(total.size)) if total.size > 1 else 0.0
        return float(total.mean()), se

    params = np.zeros(n)
    best, best_se = middle_objective(params)
    for _ in range(2):
        improved = False
        for axis in range(n):
            rest2 = float((params**2).sum() - params[axis] ** 2)
            half = math.sqrt(max(ell * ell - rest2, 0.0))

            def f(v):
                trial = params.copy()
                trial[axis] = v
                return middle_objective(trial)[0]

            v_star, f_star, _ = _golden_min(f, -half, half, 12)
            if f_star < best - 1e-15:
                params[axis] = v_star
                best, best_se = middle_objective(params)
                improved = True
        if not improved:
            break

    gap = abs(outer.value - best)
    se = math.sqrt(outer.std_error**2 + best_se**2) + inner_se_max
    if return_detail:
        detail = {
            "outer": outer.to_dict(),
            "middle_value": best,
            "middle_se": best_se,
            "inner_se_max": inner_se_max,
            "lattice_lo": lo.tolist(),
            "lattice_hi": hi.tolist(),
        }
        return gap, se, detail
    return gap, se
