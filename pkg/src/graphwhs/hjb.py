"""Grid solver for the dynamic-programming PDE, energy cutoffs, convolutions.

The equation solved backward from the terminal cost is

    dU/dt + <p, dH0/dx> - <q, dH0/drho> + 1/2 tr(sigma sigma^T Q) - Fhat(q) = 0

on the two-vertex state space (t, rho_1, x_1, x_2), with p the projected
simplex derivative, q the x-gradient, Q the x-Hessian.  The scheme is
explicit and monotone under a time-step bound recorded on the grid:
sign-upwinded transport, central diffusion, and a central Fhat with
ell-scaled numerical viscosity dominating its Lipschitz constant.

The cutoff apparatus rescales the equation by phi(H0) where phi plateaus at
1 below a level R and at R^{-beta} above 2R.  Because dH0/dx sums to zero,
the projected and raw density gradients of phi(H0) are interchangeable
inside the mixed transport pairing; `truncation_identity_check` measures
exactly that cancellation.  The rescaled Hamiltonian of
`truncated_hamiltonian` agrees with the plain one wherever phi' = 0.

Sup-/inf-convolutions are separable Moreau envelopes over the grid metric
|t|^2 + ||rho||^2 + ||x||^2; they bound the input from above/below and are
theta-semiconvex/semiconcave by construction, which `semiconvexity_defect`
verifies discretely.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import expit

from ._kernels import hjb_layer, moreau_lines
from .control import CostSpec, _fhat_ascent, fhat_on_norms, hamiltonian
from .energies import EnergySpec, dominant_array, energy_gradients, gradient_arrays
from .graphs import Array, DensityState, DomainError, MomentumState, frechet_project


class CflError(ArithmeticError):
    """Requested time step exceeds the monotone-scheme bound."""


class NonFiniteError(ArithmeticError):
    """Solver produced a non-finite value; carries the offending layer."""

    def __init__(self, layer: int):
        super().__init__(f"non-finite value at time layer {layer}")
        self.layer = layer


# ---------------------------------------------------------------------------
# Smooth cutoff profile and the level-set truncation
# ---------------------------------------------------------------------------

# Unit profile: phi(s) = 1 for s <= 0, 0 for s >= 1, and in between the
# smooth blend  e^{-1/(1-s)} / (e^{-1/(1-s)} + e^{-1/s}),  evaluated in the
# overflow-safe logistic form  expit(1/s - 1/(1-s)).
# Measured once on a dense sample of the open unit interval; both derivative
# suprema sit near the midpoint (|phi'| peaks at 2).
PROFILE_DERIV_BOUND = 16.0


def _unit_profile(s: Array):
    s = np.asarray(s, dtype=float)
    inside = (s > 0.0) & (s < 1.0)
    sc = np.where(inside, s, 0.5)  # dummy midpoint keeps the arithmetic finite
    ce = 1.0 / (1.0 - sc) - 1.0 / sc
    val = expit(-ce)
    pq = val * (1.0 - val)
    c1 = 1.0 / (1.0 - sc) ** 2 + 1.0 / sc**2
    c2 = 2.0 / (1.0 - sc) ** 3 - 2.0 / sc**3
    d1 = -c1 * pq
    d2 = pq * (-c2 + c1 * c1 * (1.0 - 2.0 * val))
    val = np.where(inside, val, np.where(s <= 0.0, 1.0, 0.0))
    d1 = np.where(inside, d1, 0.0)
    d2 = np.where(inside, d2, 0.0)
    return val, d1, d2


@dataclass(frozen=True)
class TruncationFn:
    """Non-increasing energy cutoff: 1 below R, R^(-beta) above 2R."""

    R: float
    beta: float = 0.5

    def __post_init__(self):
        # R >= 1 keeps the decay plateau R^(-beta) at or below the inner
        # plateau 1, so the profile is genuinely non-increasing.
        if self.R < 1.0:
            raise DomainError("cutoff level must be at least 1")
        if not 0.0 < self.beta < 1.0:
            raise DomainError("decay exponent must lie in (0, 1)")

    @property
    def floor(self) -> float:
        return self.R ** (-self.beta)


def phi_eval(tr: TruncationFn, r):
    """Cutoff value and first two derivatives at energy level r.

    Levels at or below R (including negative ones, which unbounded-below
    interaction terms can produce) sit on the inner plateau.
    """
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise DomainError("energy level must be finite")
    s = (r - tr.R) / tr.R
    val, d1, d2 = _unit_profile(s)
    amp = 1.0 - tr.floor
    value = tr.floor + amp * val
    first = amp * d1 / tr.R
    second = amp * d2 / tr.R**2
    if value.ndim == 0:
        return float(value), float(first), float(second)
    return value, first, second


def truncation_identity_check(
    energy: EnergySpec,
    tr: TruncationFn,
    rho: DensityState,
    x: MomentumState,
    break_tangency: float = 0.0,
) -> float:
    """|<d_rho phi(H0), dH0/dx> - <d_x phi(H0), dH0/drho>| at one state.

    The first factor uses the projected (mean-zero) density gradient, the
    second the raw one; they pair identically against dH0/dx because that
    field sums to zero.  ``break_tangency`` adds a constant to dH0/dx to
    demonstrate the check is sensitive to exactly that property.
    """
    grads = energy_gradients(energy, rho, x)
    d_x = grads.d_x + break_tangency
    h0 = float(dominant_array(energy, rho.rho, x.s))
    _, phi1, _ = phi_eval(tr, h0)
    lhs = phi1 * float(frechet_project(grads.d_rho) @ d_x)
    rhs = phi1 * float(grads.d_rho @ d_x)
    return abs(lhs - rhs)


def _cutoff_state(energy: EnergySpec, tr: TruncationFn, rho, x):
    """phi(H0), its x-gradient and x-Hessian, plus the raw energy gradients."""
    rho_arr = np.asarray(getattr(rho, "rho", rho), dtype=float)
    x_arr = np.asarray(getattr(x, "s", x), dtype=float)
    h0 = float(dominant_array(energy, rho_arr, x_arr))
    phi0, phi1, phi2 = phi_eval(tr, h0)
    grads = energy_gradients(
        energy,
        rho if isinstance(rho, DensityState) else DensityState(rho=rho_arr),
        x if isinstance(x, MomentumState) else MomentumState(s=x_arr),
    )
    dphi_x = phi1 * grads.d_x
    hess_phi = phi2 * np.outer(grads.d_x, grads.d_x) + phi1 * grads.hess_x
    return h0, phi0, dphi_x, hess_phi, grads


def fhat_R(
    spec: CostSpec,
    energy: EnergySpec,
    tr: TruncationFn,
    t,
    rho,
    x,
    q: Array,
    U_value: float,
    ell: float,
) -> float:
    """sup over the control ball of <q - U dphi/dx, V> - phi(H0) F(t,rho,x,V)."""
    _, phi0, dphi_x, _, _ = _cutoff_state(energy, tr, rho, x)
    w = np.asarray(q, dtype=float) - U_value * dphi_x
    rho_arr = np.asarray(getattr(rho, "rho", rho), dtype=float)
    x_arr = np.asarray(getattr(x, "s", x), dtype=float)
    if spec.custom_running is not None:
        scaled = replace(
            spec,
            custom_running=lambda tt, rr, xx, V: phi0 * spec.custom_running(tt, rr, xx, V),
        )
        return _fhat_ascent(scaled, t, rho_arr, x_arr, w, ell)
    wn = float(np.sqrt((w**2).sum()))
    return float(fhat_on_norms(replace(spec, control_coeff=phi0 * spec.control_coeff),
                               np.asarray(wn), ell)) - phi0 * float(
        spec.state_cost(t, rho_arr, x_arr)
    )


def truncated_hamiltonian(
    spec: CostSpec,
    energy: EnergySpec,
    tr: TruncationFn,
    t,
    rho,
    x,
    U_value: float,
    p: Array,
    q: Array,
    Q: Array,
    ell: float,
) -> float:
    """Cutoff-rescaled Hamiltonian; equals `hamiltonian` on the inner plateau."""
    h0, phi0, dphi_x, hess_phi, grads = _cutoff_state(energy, tr, rho, x)
    if h0 >= 2.0 * tr.R:
        raise DomainError("state lies outside the cutoff domain (H0 >= 2R)")
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    Q = np.asarray(Q, dtype=float)
    sig2 = energy.sigma**2
    value = float(p @ grads.d_x) - float(q @ grads.d_rho)
    value += 0.5 * float(sig2 @ np.diag(Q))
    value -= float(sig2 @ (dphi_x * q)) / phi0
    value -= U_value * (
        0.5 * float(sig2 @ np.diag(hess_phi)) - float(sig2 @ dphi_x**2) / phi0
    )
    value -= fhat_R(spec, energy, tr, t, rho, x, q, U_value, ell)
    return value


# ---------------------------------------------------------------------------
# Grid, solver, residuals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimplexGrid:
    """Uniform tensor grid over (t, rho_1, x_1, x_2) for two vertices."""

    t_axis: Array
    rho1_axis: Array
    x1_axis: Array
    x2_axis: Array
    cfl: dict

    def __post_init__(self):
        for name in ("t_axis", "rho1_axis", "x1_axis", "x2_axis"):
            ax = np.asarray(getattr(self, name), dtype=float)
            if ax.ndim != 1 or ax.size < 2 or np.any(np.diff(ax) <= 0.0):
                raise DomainError(f"{name} must be increasing with >= 2 points")
            steps = np.diff(ax)
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
                raise DomainError(f"{name} must be uniform")
            ax = ax.copy()
            ax.setflags(write=False)
            object.__setattr__(self, name, ax)
        if self.rho1_axis[0] <= 0.0 or self.rho1_axis[-1] >= 1.0:
            raise DomainError("density axis must stay strictly interior")

    @property
    def spacings(self) -> tuple[float, float, float, float]:
        return (
            float(self.t_axis[1] - self.t_axis[0]),
            float(self.rho1_axis[1] - self.rho1_axis[0]),
            float(self.x1_axis[1] - self.x1_axis[0]),
            float(self.x2_axis[1] - self.x2_axis[0]),
        )

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.t_axis.size, self.rho1_axis.size, self.x1_axis.size, self.x2_axis.size)

    def nodes(self):
        """Dense (nr, n1, n2, 2) density and momentum node arrays."""
        RR, X1, X2 = np.meshgrid(self.rho1_axis, self.x1_axis, self.x2_axis, indexing="ij")
        rho_nodes = np.stack([RR, 1.0 - RR], axis=-1)
        x_nodes = np.stack([X1, X2], axis=-1)
        return rho_nodes, x_nodes

    @classmethod
    def build(
        cls,
        energy: EnergySpec,
        ell: float,
        T: float,
        shape=(33, 33, 33, 64),
        X: float = 1.0,
        rho_margin: float = 0.1,
        t0: float = 0.0,
    ) -> "SimplexGrid":
        if energy.graph.n != 2:
            raise DomainError("the grid solver is specialized to two vertices")
        # shape lists spatial axes first, time layers last.
        nr, n1, n2, nt = (int(v) for v in shape)
        grid = cls(
            t_axis=np.linspace(t0, T, nt),
            rho1_axis=np.linspace(rho_margin, 1.0 - rho_margin, nr),
            x1_axis=np.linspace(-X, X, n1),
            x2_axis=np.linspace(-X, X, n2),
            cfl={},
        )
        record = _cfl_record(grid, energy, ell)
        object.__setattr__(grid, "cfl", record)
        return grid


def _drift_fields(grid: SimplexGrid, energy: EnergySpec):
    rho_nodes, x_nodes = grid.nodes()
    d_rho, d_x = gradient_arrays(energy, rho_nodes, x_nodes)
    a_r = d_x[..., 0]
    b1 = -d_rho[..., 0]
    b2 = -d_rho[..., 1]
    return a_r, b1, b2


def _cfl_record(grid: SimplexGrid, energy: EnergySpec, ell: float) -> dict:
    dt, hr, h1, h2 = grid.spacings
    a_r, b1, b2 = _drift_fields(grid, energy)
    sig2 = energy.sigma**2
    denom = (
        np.abs(a_r).max() / hr
        + np.abs(b1).max() / h1
        + np.abs(b2).max() / h2
        + sig2[0] / h1**2
        + sig2[1] / h2**2
        + ell / h1
        + ell / h2
    )
    bound = 1.0 / denom if denom > 0.0 else np.inf
    return {
        "dt": dt,
        "dt_bound": float(bound),
        "cfl_number": float(dt * denom),
        "max_speed_rho": float(np.abs(a_r).max()),
        "max_speed_x": float(max(np.abs(b1).max(), np.abs(b2).max())),
        "ell": float(ell),
    }


def _fingerprint(obj) -> str:
    def clean(v):
        if isinstance(v, np.ndarray):
            return v.tolist()
        if callable(v):
            return "<callable>"
        if hasattr(v, "__dataclass_fields__"):
            return {k: clean(getattr(v, k)) for k in v.__dataclass_fields__}
        return v

    payload = json.dumps(clean(obj), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class GridValueFunction:
    grid: SimplexGrid
    values: Array  # (nt, nr, n1, n2)
    cost_spec: CostSpec | None
    energy: EnergySpec | None
    ell: float
    cfl: dict

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise DomainError("value array does not match the grid shape")
        if not np.isfinite(vals).all():
            raise DomainError("value function contains non-finite entries")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def axes(self):
        g = self.grid
        return (g.t_axis, g.rho1_axis, g.x1_axis, g.x2_axis)

    def evaluate(self, t: float, rho1: float, x1: float, x2: float) -> float:
        interp = RegularGridInterpolator(self.axes, self.values)
        return float(interp(np.array([[t, rho1, x1, x2]]))[0])

    def to_dir(self, path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        nt, nr, n1, n2 = self.grid.shape
        idx = np.indices((nr, n1, n2)).reshape(3, -1).T
        layer_files = []
        for k in range(nt):
            name = f"layer_{k:04d}.csv"
            layer_files.append(name)
            rows = np.column_stack([idx, self.values[k].reshape(-1)])
            np.savetxt(
                path / name,
                rows,
                fmt=("%d", "%d", "%d", "%.17g"),
                delimiter=",",
                header="rho1_index,x1_index,x2_index,value",
                comments="",
            )
        meta = {
            "schema": 1,
            "shape": list(self.grid.shape),
            "axes": {
                "t": self.grid.t_axis.tolist(),
                "rho1": self.grid.rho1_axis.tolist(),
                "x1": self.grid.x1_axis.tolist(),
                "x2": self.grid.x2_axis.tolist(),
            },
            "spacings": list(self.grid.spacings),
            "cfl": self.cfl,
            "ell": self.ell,
            "cost_hash": _fingerprint(self.cost_spec) if self.cost_spec else None,
            "energy_hash": _fingerprint(self.energy) if self.energy else None,
            "layer_files": layer_files,
        }
        (path / "metadata.json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def from_dir(cls, path, cost_spec=None, energy=None) -> "GridValueFunction":
        path = Path(path)
        meta = json.loads((path / "metadata.json").read_text())
        if cost_spec is not None and meta["cost_hash"] != _fingerprint(cost_spec):
            raise DomainError("cost spec does not match the stored fingerprint")
        if energy is not None and meta["energy_hash"] != _fingerprint(energy):
            raise DomainError("energy spec does not match the stored fingerprint")
        nt, nr, n1, n2 = meta["shape"]
        values = np.empty((nt, nr, n1, n2))
        for k, name in enumerate(meta["layer_files"]):
            rows = np.loadtxt(path / name, delimiter=",", skiprows=1)
            values[k].reshape(-1)[:] = rows[:, 3]
        grid = SimplexGrid(
            t_axis=np.asarray(meta["axes"]["t"]),
            rho1_axis=np.asarray(meta["axes"]["rho1"]),
            x1_axis=np.asarray(meta["axes"]["x1"]),
            x2_axis=np.asarray(meta["axes"]["x2"]),
            cfl=meta["cfl"],
        )
        return cls(
            grid=grid,
            values=values,
            cost_spec=cost_spec,
            energy=energy,
            ell=float(meta["ell"]),
            cfl=meta["cfl"],
        )


def hjb_solve_backward(
    grid: SimplexGrid,
    spec: CostSpec,
    energy: EnergySpec,
    ell: float,
    force_numpy: bool = False,
) -> GridValueFunction:
    """Backward sweep of the monotone explicit scheme from the terminal cost."""
    if spec.custom_running is not None:
        raise DomainError("the grid solver needs a closed-form control cost")
    if energy.graph.n != 2:
        raise DomainError("the grid solver is specialized to two vertices")
    record = _cfl_record(grid, energy, ell)
    dt, hr, h1, h2 = grid.spacings
    if record["cfl_number"] > 1.0 + 1e-12:
        raise CflError(
            "time step {dt:.3e} exceeds the monotonicity bound {b:.3e} "
            "(CFL number {c:.3f}); refine the time axis".format(
                dt=dt, b=record["dt_bound"], c=record["cfl_number"]
            )
        )
    a_r, b1, b2 = _drift_fields(grid, energy)
    rho_nodes, x_nodes = grid.nodes()
    sig2 = energy.sigma**2
    nt = grid.t_axis.size
    values = np.empty(grid.shape)
    values[nt - 1] = spec.terminal_cost(rho_nodes, x_nodes)
    for k in range(nt - 2, -1, -1):
        t_next = float(grid.t_axis[k + 1])
        g_field = np.broadcast_to(
            np.asarray(spec.state_cost(t_next, rho_nodes, x_nodes), dtype=float),
            values[k + 1].shape,
        ).copy()
        values[k] = hjb_layer(
            values[k + 1], a_r, b1, b2, g_field, sig2[0], sig2[1],
            hr, h1, h2, dt, ell, spec.control_coeff, force_numpy=force_numpy,
        )
        if not np.isfinite(values[k]).all():
            raise NonFiniteError(k)
    return GridValueFunction(
        grid=grid, values=values, cost_spec=spec, energy=energy, ell=ell, cfl=record
    )


@dataclass(frozen=True)
class ResidualReport:
    max_abs: float
    rms: float
    n_points: int
    sub_violations: int
    super_violations: int
    probe_tol: float


def hjb_residual(gvf: GridValueFunction, points, probe_tol: float | None = None) -> ResidualReport:
    """Centered-difference defect |dU/dt + H| plus quadratic-jet probes.

    ``points`` holds integer grid indices (k, i, j, l), each at least two
    cells from every boundary.  The probes perturb the discrete second-order
    jet by +/- eps * identity, emulating smooth functions touching the
    solution from above and below; violations are counted against
    ``probe_tol`` (default: the max defect itself, a self-calibrated
    truncation estimate).  Diagnostic evidence, not a proof: only two test
    functions per point are probed.
    """
    if gvf.cost_spec is None or gvf.energy is None:
        raise DomainError("residuals need the cost and energy attached")
    pts = np.atleast_2d(np.asarray(points, dtype=int))
    U = gvf.values
    nt, nr, n1, n2 = U.shape
    dt, hr, h1, h2 = gvf.grid.spacings
    lims = (nt, nr, n1, n2)
    if np.any(pts < 2) or np.any(pts >= np.array(lims) - 2):
        raise DomainError("sample points must sit >= 2 cells inside the grid")
    sig_sum = float((gvf.energy.sigma**2).sum())
    eps = min(h1, h2) ** 2
    resids = np.empty(pts.shape[0])
    for row, (k, i, j, l) in enumerate(pts):
        du_dt = (U[k + 1, i, j, l] - U[k - 1, i, j, l]) / (2.0 * dt)
        du_dr = (U[k, i + 1, j, l] - U[k, i - 1, j, l]) / (2.0 * hr)
        q = np.array([
            (U[k, i, j + 1, l] - U[k, i, j - 1, l]) / (2.0 * h1),
            (U[k, i, j, l + 1] - U[k, i, j, l - 1]) / (2.0 * h2),
        ])
        d11 = (U[k, i, j + 1, l] - 2.0 * U[k, i, j, l] + U[k, i, j - 1, l]) / h1**2
        d22 = (U[k, i, j, l + 1] - 2.0 * U[k, i, j, l] + U[k, i, j, l - 1]) / h2**2
        d12 = (
            U[k, i, j + 1, l + 1] - U[k, i, j + 1, l - 1]
            - U[k, i, j - 1, l + 1] + U[k, i, j - 1, l - 1]
        ) / (4.0 * h1 * h2)
        Q = np.array([[d11, d12], [d12, d22]])
        p = np.array([0.5 * du_dr, -0.5 * du_dr])
        rho = DensityState(rho=np.array([gvf.grid.rho1_axis[i], 1.0 - gvf.grid.rho1_axis[i]]))
        x = MomentumState(s=np.array([gvf.grid.x1_axis[j], gvf.grid.x2_axis[l]]))
        H = hamiltonian(
            gvf.cost_spec, gvf.energy, float(gvf.grid.t_axis[k]), rho, x, p, q, Q, gvf.ell
        )
        resids[row] = du_dt + H
    max_abs = float(np.abs(resids).max())
    tol = probe_tol if probe_tol is not None else max_abs
    # Touching from above adds +2 eps I to the jet Hessian; H is monotone in
    # Q through the nonnegative diffusion, so the probe shifts by eps sig_sum.
    sub_probe = resids + eps * sig_sum
    super_probe = resids - eps * sig_sum
    return ResidualReport(
        max_abs=max_abs,
        rms=float(np.sqrt((resids**2).mean())),
        n_points=int(pts.shape[0]),
        sub_violations=int((sub_probe < -tol).sum()),
        super_violations=int((super_probe > tol).sum()),
        probe_tol=float(tol),
    )


# ---------------------------------------------------------------------------
# Sup-/inf-convolutions
# ---------------------------------------------------------------------------

def _axis_weights(ndim: int, weights) -> np.ndarray:
    if weights is None:
        return np.ones(ndim)
    w = np.asarray(weights, dtype=float)
    if w.size != ndim or np.any(w <= 0.0):
        raise DomainError("need one positive metric weight per axis")
    return w


def metric_weights_for_value(n: int = 2) -> tuple:
    """Axis weights (t, rho_1, x...) realizing |t|^2 + ||rho||^2 + ||x||^2.

    The density contributes through all n coordinates; for n = 2 the rho_1
    axis therefore carries weight 2.
    """
    return (1.0, float(n)) + (1.0,) * n


def sup_convolution(values: Array, axes, theta: float, weights=None,
                    force_numpy: bool = False) -> Array:
    """max over grid points w of values(w) - sum_z c_z (z - w)^2 / (2 theta)."""
    if not 0.0 < theta:
        raise DomainError("theta must be positive")
    out = np.array(values, dtype=float, copy=True)
    w = _axis_weights(out.ndim, weights)
    for axis in range(out.ndim):
        coords = np.asarray(axes[axis], dtype=float)
        if coords.size != out.shape[axis]:
            raise DomainError("axis coordinates do not match the value shape")
        moved = np.moveaxis(out, axis, -1)
        flat = moved.reshape(-1, coords.size)
        flat = moreau_lines(flat, coords, w[axis], theta, force_numpy=force_numpy)
        out = np.moveaxis(flat.reshape(moved.shape), -1, axis)
    return out


def inf_convolution(values: Array, axes, theta: float, weights=None,
                    force_numpy: bool = False) -> Array:
    """min over grid points w of values(w) + sum_z c_z (z - w)^2 / (2 theta)."""
    return -sup_convolution(-np.asarray(values, dtype=float), axes, theta,
                            weights, force_numpy=force_numpy)


def semiconvexity_defect(conv: Array, axes, theta: float, weights=None) -> float:
    """Smallest second difference of conv + ||z||^2/(2 theta) along grid lines.

    Nonnegative (up to rounding) for sup-convolution output; negate the
    input to test semiconcavity of inf-convolution output.
    """
    conv = np.asarray(conv, dtype=float)
    w = _axis_weights(conv.ndim, weights)
    worst = np.inf
    for axis in range(conv.ndim):
        coords = np.asarray(axes[axis], dtype=float)
        shape = [1] * conv.ndim
        shape[axis] = coords.size
        g = conv + w[axis] * coords.reshape(shape) ** 2 / (2.0 * theta)
        m = coords.size
        if m < 3:
            continue
        hi = g.take(range(2, m), axis=axis)
        mid = g.take(range(1, m - 1), axis=axis)
        lo = g.take(range(0, m - 2), axis=axis)
        worst = min(worst, float((hi - 2.0 * mid + lo).min()))
    return worst
