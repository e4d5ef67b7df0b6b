"""Finite weighted graphs and the discrete Wasserstein calculus on them.

Conventions
-----------
* Vertices are 0..n-1.  Edge weights live in a dense symmetric matrix
  ``omega`` with zero diagonal; ``omega[i, j] > 0`` iff {i, j} is an edge.
  Graphs must be connected.  Dense storage caps n at 64.
* Densities rho are strictly interior points of the probability simplex;
  construction rejects components at or below a floor (default 1e-9),
  because the Fisher-type energies blow up at the boundary.
* Edge fields are skew-symmetric n x n matrices supported on edges
  (``v[i, j] = -v[j, i]``, zero off-edge).
* A probability weight g is a symmetric mean evaluated on the endpoint
  densities of an edge: arithmetic, logarithmic, or harmonic.  It satisfies
  min <= g <= max, positive homogeneity, and concavity; the logarithmic
  mean is evaluated through log1p of the relative gap, with a midpoint
  branch when the arguments nearly coincide.
* The graph gradient is (grad phi)_{ij} = sqrt(omega_ij) (phi_i - phi_j),
  the weighted divergence is (div_rho v)_i = sum_j sqrt(omega_ij) v_ji
  g_ij(rho), and the mobility inner product is
  <u, v>_rho = 1/2 sum_{(i,j)} u_ij v_ij g_ij(rho) over ordered edge pairs.
  With the Euclidean pairing <phi, w> these satisfy the integration-by-parts
  identity <grad phi, v>_rho = -<phi, div_rho v>.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np
from scipy import integrate

Array = np.ndarray

EPS_FLOOR = 1e-9
MAX_DENSE_N = 64

AVERAGE = "average"
LOGARITHMIC = "logarithmic"
HARMONIC = "harmonic"
WEIGHT_KINDS = (AVERAGE, LOGARITHMIC, HARMONIC)


class GraphError(ValueError):
    pass


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


def _readonly(a: Array) -> Array:
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# data model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Graph:
    """Undirected connected weighted graph with dense symmetric weights."""

    n: int
    omega: Array

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        if om.shape != (self.n, self.n):
            raise ShapeError(f"weight matrix must be ({self.n}, {self.n})")
        if self.n < 1 or self.n > MAX_DENSE_N:
            raise GraphError(f"vertex count must be in [1, {MAX_DENSE_N}]")
        if not np.array_equal(om, om.T):
            raise GraphError("weights must be exactly symmetric")
        if np.any(np.diag(om) != 0.0):
            raise GraphError("self-loops are not allowed")
        if np.any(om < 0.0):
            raise GraphError("weights must be nonnegative")
        object.__setattr__(self, "omega", _readonly(om))
        if not self._connected():
            raise GraphError("graph must be connected")

    def _connected(self) -> bool:
        # Plain BFS on the adjacency mask.
        seen = np.zeros(self.n, dtype=bool)
        stack = [0]
        seen[0] = True
        adj = self.omega > 0.0
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(adj[i]):
                if not seen[j]:
                    seen[j] = True
                    stack.append(int(j))
        return bool(seen.all())

    @property
    def edges(self) -> list[tuple[int, int]]:
        """Unordered edges as (i, j) with i < j."""
        ii, jj = np.nonzero(np.triu(self.omega, k=1))
        return list(zip(ii.tolist(), jj.tolist()))

    @property
    def edge_mask(self) -> Array:
        return self.omega > 0.0

    @property
    def sqrt_omega(self) -> Array:
        return np.sqrt(self.omega)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int, float]]) -> "Graph":
        om = np.zeros((n, n))
        for i, j, w in edges:
            if i == j:
                raise GraphError("self-loops are not allowed")
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"edge ({i}, {j}) out of range")
            om[i, j] = om[j, i] = float(w)
        return cls(n=n, omega=om)

    @classmethod
    def from_json(cls, text: str) -> "Graph":
        """Parse ``{"n": int, "edges": [[i, j, weight], ...]}`` (0-based)."""
        doc = json.loads(text)
        return cls.from_edges(int(doc["n"]), [tuple(e) for e in doc["edges"]])

    @classmethod
    def load(cls, path) -> "Graph":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def to_json(self) -> str:
        doc = {"n": self.n, "edges": [[i, j, self.omega[i, j]] for i, j in self.edges]}
        return json.dumps(doc)


@dataclass(frozen=True)
class DensityState:
    """Strictly interior point of the probability simplex."""

    rho: Array
    floor: float = EPS_FLOOR

    def __post_init__(self):
        r = np.asarray(self.rho, dtype=float)
        if r.ndim != 1:
            raise ShapeError("rho must be a vector")
        if not np.all(np.isfinite(r)):
            raise DomainError("rho must be finite")
        if abs(r.sum() - 1.0) > 1e-12:
            raise DomainError(f"rho must sum to 1 (got {r.sum()!r})")
        if np.any(r < self.floor):
            raise DomainError(f"rho has a component below the floor {self.floor}")
        # The one-vertex simplex is the single point (1.0); otherwise interior.
        if r.size > 1 and np.any(r >= 1.0):
            raise DomainError("rho must be strictly interior")
        object.__setattr__(self, "rho", _readonly(r))

    @property
    def n(self) -> int:
        return self.rho.size


@dataclass(frozen=True)
class MomentumState:
    """Euclidean momentum / phase vector."""

    s: Array

    def __post_init__(self):
        v = np.asarray(self.s, dtype=float)
        if v.ndim != 1:
            raise ShapeError("s must be a vector")
        if not np.all(np.isfinite(v)):
            raise DomainError("s must be finite")
        object.__setattr__(self, "s", _readonly(v))

    @property
    def n(self) -> int:
        return self.s.size


@dataclass(frozen=True)
class EdgeField:
    """Skew-symmetric matrix supported on the edge set of a graph."""

    values: Array
    graph: Graph

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        n = self.graph.n
        if v.shape != (n, n):
            raise ShapeError(f"edge field must be ({n}, {n})")
        if not np.array_equal(v, -v.T):
            raise ShapeError("edge field must be exactly skew-symmetric")
        if np.any(v[~self.graph.edge_mask] != 0.0):
            raise ShapeError("edge field supported off the edge set")
        object.__setattr__(self, "values", _readonly(v))


@dataclass(frozen=True)
class ProbabilityWeight:
    """Symmetric mean g(t, r) used as edge mobility.

    ``tolerance`` is the relative threshold below which the logarithmic kind
    switches to its equal-argument series branch.
    """

    kind: str = AVERAGE
    tolerance: float = 1e-8

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in WEIGHT_KINDS:
            raise DomainError(f"unknown weight kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)


# ---------------------------------------------------------------------------
# probability weights
# ---------------------------------------------------------------------------

def weight_eval(w: ProbabilityWeight, t, r):
    """Evaluate g(t, r) elementwise for nonnegative arguments."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(t < 0.0) or np.any(r < 0.0):
        raise DomainError("probability weights take nonnegative arguments")
    if w.kind == AVERAGE:
        out = 0.5 * (t + r)
    elif w.kind == HARMONIC:
        s = t + r
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(t * r > 0.0, 2.0 * t * r / np.where(s > 0.0, s, 1.0), 0.0)
    else:
        # Logarithmic mean (t - r) / (log t - log r); the limit is the
        # midpoint (through second order) when the arguments nearly agree,
        # and 0 when either argument vanishes.  log1p of the gap over the
        # smaller argument is exactly symmetric and fully accurate right up
        # to the midpoint branch (the gap itself is exact by Sterbenz).
        hi = np.maximum(t, r)
        lo = np.minimum(t, r)
        near = hi - lo <= w.tolerance * hi
        pos = lo > 0.0
        diff = np.where(pos & ~near, hi - lo, 0.0)
        safe_lo = np.where(pos & ~near, lo, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = diff / np.log1p(diff / safe_lo)
        out = np.where(near, 0.5 * (t + r), out)
        out = np.where(pos, out, 0.0)
    return out if out.ndim else float(out)


def weight_partial(w: ProbabilityWeight, t, r):
    """Analytic partials (dg/dt, dg/dr) for strictly positive arguments."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(t <= 0.0) or np.any(r <= 0.0):
        raise DomainError("weight partials need strictly positive arguments")
    if w.kind == AVERAGE:
        gt = np.full(np.broadcast(t, r).shape, 0.5)
        gr = gt.copy()
    elif w.kind == HARMONIC:
        s = t + r
        gt = 2.0 * r**2 / s**2
        gr = 2.0 * t**2 / s**2
    else:
        hi = np.maximum(t, r)
        near = np.abs(t - r) <= w.tolerance * hi
        safe_t = np.where(near, 1.0, t)
        safe_r = np.where(near, 2.0, r)
        L = np.log(safe_t / safe_r)
        g = (safe_t - safe_r) / L
        gt = (1.0 - g / safe_t) / L
        gr = (g / safe_r - 1.0) / L
        # Series branch: g_t = 1/2 - x/6 + O(x^2), x = (t - r)/(t + r).
        x = (t - r) / (t + r)
        gt = np.where(near, 0.5 - x / 6.0, gt)
        gr = np.where(near, 0.5 + x / 6.0, gr)
    if gt.ndim:
        return gt, gr
    return float(gt), float(gr)


def weight_matrix(G: Graph, w: ProbabilityWeight, rho: Array) -> Array:
    """g_ij(rho) on edges, zero elsewhere; rho is a raw vector here."""
    g = weight_eval(w, rho[:, None], rho[None, :])
    return np.where(G.edge_mask, g, 0.0)


# ---------------------------------------------------------------------------
# first-order calculus
# ---------------------------------------------------------------------------

def graph_gradient(G: Graph, phi: Array) -> EdgeField:
    """(grad phi)_{ij} = sqrt(omega_ij) (phi_i - phi_j) on edges."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (G.n,):
        raise ShapeError("phi must have one entry per vertex")
    vals = G.sqrt_omega * (phi[:, None] - phi[None, :])
    return EdgeField(values=np.where(G.edge_mask, vals, 0.0), graph=G)


def divergence(G: Graph, w: ProbabilityWeight, rho: DensityState, v: EdgeField) -> Array:
    """(div_rho v)_i = sum_{j ~ i} sqrt(omega_ij) v_ji g_ij(rho); mean-zero."""
    if v.graph is not G and not np.array_equal(v.graph.omega, G.omega):
        raise ShapeError("edge field built on a different graph")
    g = weight_matrix(G, w, rho.rho)
    return (G.sqrt_omega * v.values.T * g).sum(axis=1)


def rho_inner(G: Graph, w: ProbabilityWeight, rho: DensityState, u: EdgeField, v: EdgeField) -> float:
    """Mobility inner product <u, v>_rho (both edge orientations summed)."""
    g = weight_matrix(G, w, rho.rho)
    return 0.5 * float((u.values * v.values * g).sum())


def frechet_project(grad: Array) -> Array:
    """Remove the mean: the simplex-tangent part of a Euclidean gradient."""
    grad = np.asarray(grad, dtype=float)
    return grad - grad.mean()


# ---------------------------------------------------------------------------
# Monge-Kantorovich distance
# ---------------------------------------------------------------------------

class PathResult(NamedTuple):
    value: float
    path: Array          # (steps + 1, n) densities
    action_trace: Array  # action after each accepted descent step
    converged: bool


def _mobility_laplacian(G: Graph, w: ProbabilityWeight, rho: Array) -> Array:
    g = weight_matrix(G, w, rho)
    a = G.omega * g
    return np.diag(a.sum(axis=1)) - a


def _interval_action(G, w, mid: Array, vel: Array):
    # Least-squares velocity recovery: restrict to gradient fields, i.e.
    # solve L(mid) phi = vel on the mean-zero subspace.  Divergence-free
    # components are rho-orthogonal to gradients, so this is the
    # minimum-action edge field compatible with the continuity equation.
    L = _mobility_laplacian(G, w, mid)
    phi = np.linalg.lstsq(L, vel, rcond=None)[0]
    return float(phi @ vel), phi


def _kinetic_rho_partial(G: Graph, w: ProbabilityWeight, rho: Array, phi: Array) -> Array:
    # d/d rho_a of sum_edges omega (phi_i - phi_j)^2 g_ij(rho).
    gt, _ = weight_partial(w, rho[:, None], rho[None, :])
    diff2 = (phi[:, None] - phi[None, :]) ** 2
    return (np.where(G.edge_mask, G.omega * diff2 * gt, 0.0)).sum(axis=1)


def wasserstein_path(
    G: Graph,
    w: ProbabilityWeight,
    rho0: DensityState,
    rho1: DensityState,
    steps: int = 32,
    iters: int = 300,
    floor: float = EPS_FLOOR,
) -> PathResult:
    """Locally minimized discrete action between two interior densities.

    The path is parameterized on a uniform grid; each interval recovers its
    velocity potential in least squares and contributes dt * <v, v>_mid to
    the action.  Interior nodes descend along the analytic action gradient
    (projected onto the simplex tangent) with backtracking; iterates that
    leave the interior are rejected by the line search.
    """
    if steps < 8:
        raise DomainError("need at least 8 path steps")
    n = G.n
    if rho0.n != n or rho1.n != n:
        raise ShapeError("densities must match the graph size")
    if np.allclose(rho0.rho, rho1.rho, atol=1e-15):
        path = np.tile(rho0.rho, (steps + 1, 1))
        return PathResult(0.0, path, np.zeros(1), True)

    dt = 1.0 / steps
    tgrid = np.linspace(0.0, 1.0, steps + 1)
    path = (1.0 - tgrid)[:, None] * rho0.rho + tgrid[:, None] * rho1.rho

    def action_and_potentials(p):
        total = 0.0
        phis = np.empty((steps, n))
        for k in range(steps):
            mid = 0.5 * (p[k] + p[k + 1])
            vel = (p[k + 1] - p[k]) / dt
            a_k, phis[k] = _interval_action(G, w, mid, vel)
            total += dt * a_k
        return total, phis

    action, phis = action_and_potentials(path)
    initial_action = action
    trace = [action]
    step_size = 0.25
    stationary = False
    for _ in range(iters):
        # Envelope-theorem gradient of the action in the interior nodes:
        # the velocity part telescopes through the potentials, the mobility
        # part differentiates g through the interval midpoints.
        grad = np.zeros((steps + 1, n))
        for k in range(steps):
            mid = 0.5 * (path[k] + path[k + 1])
            dL = _kinetic_rho_partial(G, w, mid, phis[k])
            grad[k] += -2.0 * phis[k] - 0.5 * dt * dL
            grad[k + 1] += 2.0 * phis[k] - 0.5 * dt * dL
        grad[0] = grad[-1] = 0.0
        grad[1:-1] -= grad[1:-1].mean(axis=1, keepdims=True)
        gnorm2 = float((grad**2).sum())
        if gnorm2 <= 1e-18:
            stationary = True
            break
        accepted = False
        while step_size > 1e-14:
            trial = path - step_size * grad
            if trial[1:-1].min() > floor:
                trial_action, trial_phis = action_and_potentials(trial)
                if trial_action < action - 1e-4 * step_size * gnorm2:
                    path, action, phis = trial, trial_action, trial_phis
                    trace.append(action)
                    step_size = min(4.0 * step_size, 1.0)
                    accepted = True
                    break
            step_size *= 0.5
        if not accepted:
            # Armijo exhausted: at a numerical stationary point.
            stationary = True
            break

    converged = stationary or action < initial_action or initial_action == 0.0
    return PathResult(math.sqrt(max(action, 0.0)), path, np.asarray(trace), converged)


def wasserstein_distance(
    G: Graph,
    w: ProbabilityWeight,
    rho0: DensityState,
    rho1: DensityState,
    steps: int = 32,
    iters: int = 300,
) -> float:
    """Monge-Kantorovich distance upper bound from the optimized path action."""
    res = wasserstein_path(G, w, rho0, rho1, steps=steps, iters=iters)
    if not res.converged:
        warnings.warn("path descent failed to reduce the linear-path action", RuntimeWarning)
    return res.value


def two_node_distance_oracle(w: ProbabilityWeight, omega: float, a: float, b: float) -> float:
    """|int_a^b dr / sqrt(omega g(r, 1-r))| by adaptive quadrature.

    Independent ground truth for two-vertex graphs, where the continuity
    equation leaves a single scalar velocity and the action integral
    collapses to a one-dimensional length.
    """
    if not (0.0 < a < 1.0 and 0.0 < b < 1.0):
        raise DomainError("endpoints must be interior")
    if omega <= 0.0:
        raise DomainError("edge weight must be positive")
    if a == b:
        return 0.0

    def integrand(r):
        return 1.0 / math.sqrt(omega * weight_eval(w, r, 1.0 - r))

    val, err = integrate.quad(integrand, a, b, limit=200)
    if not np.isfinite(val) or err > 1e-8 * max(1.0, abs(val)):
        raise ArithmeticError("quadrature failed to converge")
    return abs(val)
