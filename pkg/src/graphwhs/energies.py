"""Energy functionals on the graph simplex and their analytic derivatives.

The dominant energy is assembled from a kinetic term, a Fisher-type barrier,
and either a polynomial interaction or a negative-entropy term:

    H0(rho, x) = K(rho, x) + fisher_coeff * I(rho) + W(rho)        (polynomial)
    H0(rho, x) = K(rho, x) + fisher_coeff * I(rho) - L(rho)        (log-entropy)

with an optional linear control potential <V, rho> on top.  Conventions:

* K(rho, x) = 1/2 sum_{unordered edges} omega_ij (x_i - x_j)^2 g_ij(rho).
  This normalization makes the analytic gradients below literally the
  Euclidean partials of the scalar energies (finite-difference tested):
      dK/dx_a   = sum_j omega_aj (x_a - x_j) g_aj(rho)   (mean-zero),
      dK/drho_a = 1/2 sum_j omega_aj (x_a - x_j)^2 dg/dt(rho_a, rho_j).
* I(rho) = 1/2 sum_i sum_{j ~ i} omega_ij |log rho_i - log rho_j|^2 gl_ij
  with gl the logarithmic mean of (rho_i, rho_j); per unordered edge this
  collapses to omega_ij (rho_i - rho_j)(log rho_i - log rho_j).  The edge
  coupling of the barrier reuses omega (no separate tilde weights).
* W(rho) = 1/2 sum_{(i,j) in E} W_ij rho_i rho_j over ordered edge pairs;
  entries of the interaction matrix off the edge set are ignored.
* L(rho) = sum_i (rho_i log rho_i - rho_i).

Array-level helpers at the bottom take raw ndarrays with arbitrary leading
batch dimensions; the typed operations wrap them for single states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .graphs import (
    Array,
    DensityState,
    DomainError,
    Graph,
    MomentumState,
    ProbabilityWeight,
    LOGARITHMIC,
    ShapeError,
    weight_eval,
    weight_partial,
)

POLYNOMIAL_INTERACTION = "polynomial_interaction"
LOGARITHMIC_ENTROPY = "logarithmic_entropy"
VARIANTS = (POLYNOMIAL_INTERACTION, LOGARITHMIC_ENTROPY)

_LOG_MEAN = ProbabilityWeight(kind=LOGARITHMIC)


class VariantError(ValueError):
    pass


@dataclass(frozen=True)
class EnergySpec:
    """Which dominant energy to use, and its coefficients."""

    graph: Graph
    variant: str = POLYNOMIAL_INTERACTION
    weight: ProbabilityWeight = field(default_factory=ProbabilityWeight)
    interaction: Array | None = None
    fisher_coeff: float = 0.125
    sigma: Array | None = None
    # The barrier couples through the same omega as the kinetic term; kept
    # as an explicit (frozen) switch so the assumption is visible.
    tilde_weight_coupling: bool = True

    def __post_init__(self):
        n = self.graph.n
        variant = str(self.variant).lower().replace("-", "_")
        if variant not in VARIANTS:
            raise VariantError(f"unknown energy variant {self.variant!r}")
        object.__setattr__(self, "variant", variant)
        if self.fisher_coeff < 0.0:
            raise DomainError("fisher_coeff must be nonnegative")
        if not self.tilde_weight_coupling:
            raise DomainError("only the omega-coupled barrier is supported")
        w = self.interaction
        if w is None:
            w = np.zeros((n, n))
        w = np.asarray(w, dtype=float)
        if w.shape != (n, n):
            raise ShapeError(f"interaction matrix must be ({n}, {n})")
        if not np.array_equal(w, w.T):
            raise ShapeError("interaction matrix must be symmetric")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "interaction", w)
        s = self.sigma
        if s is None:
            s = np.zeros(n)
        s = np.asarray(s, dtype=float)
        if s.shape != (n,):
            raise ShapeError(f"sigma must have length {n}")
        if not np.all(np.isfinite(s)):
            raise DomainError("sigma must be finite")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)


class EnergyGradients(NamedTuple):
    d_rho: Array   # Euclidean partial dH0/drho (unprojected)
    d_x: Array     # dH0/dx, sums to zero
    hess_x: Array  # second x-derivative, a weighted graph Laplacian


# ---------------------------------------------------------------------------
# scalar energies
# ---------------------------------------------------------------------------

def kinetic_energy(spec: EnergySpec, rho: DensityState, x: MomentumState) -> float:
    return float(kinetic_array(spec, rho.rho, x.s))


def fisher_information(spec: EnergySpec, rho: DensityState) -> float:
    return float(fisher_array(spec, rho.rho))


def entropy(rho: DensityState) -> float:
    r = rho.rho
    return float((r * np.log(r) - r).sum())


def interaction_potential(spec: EnergySpec, rho: DensityState) -> float:
    if spec.variant != POLYNOMIAL_INTERACTION:
        raise VariantError("interaction potential is a polynomial-variant term")
    r = rho.rho
    wm = np.where(spec.graph.edge_mask, spec.interaction, 0.0)
    return 0.5 * float(r @ wm @ r)


def control_potential(V, rho: DensityState) -> float:
    V = np.asarray(V, dtype=float)
    if V.shape != rho.rho.shape:
        raise ShapeError("control potential needs one entry per vertex")
    return float(V @ rho.rho)


def dominant_energy(
    spec: EnergySpec, rho: DensityState, x: MomentumState, V=None
) -> float:
    """H0, plus the linear control potential when a control is supplied."""
    total = float(dominant_array(spec, rho.rho, x.s))
    if V is not None:
        total += control_potential(V, rho)
    return total


def energy_gradients(spec: EnergySpec, rho: DensityState, x: MomentumState) -> EnergyGradients:
    """Analytic first derivatives of H0 and its x-Hessian."""
    d_rho, d_x = gradient_arrays(spec, rho.rho, x.s)
    g = sym_weight_matrix(spec.graph, spec.weight, rho.rho)
    a = spec.graph.omega * g
    hess = np.diag(a.sum(axis=1)) - a
    return EnergyGradients(d_rho=d_rho, d_x=d_x, hess_x=hess)


# ---------------------------------------------------------------------------
# array core (leading batch dimensions allowed)
# ---------------------------------------------------------------------------

def sym_weight_matrix(G: Graph, w: ProbabilityWeight, rho: Array) -> Array:
    """Edge-masked g_ij(rho), exactly symmetric (upper triangle mirrored)."""
    g = weight_eval(w, rho[..., :, None], rho[..., None, :])
    g = np.where(G.edge_mask, g, 0.0)
    g = np.triu(g, k=1)
    return g + np.swapaxes(g, -1, -2)


def kinetic_array(spec: EnergySpec, rho: Array, x: Array) -> Array:
    g = sym_weight_matrix(spec.graph, spec.weight, rho)
    diff = x[..., :, None] - x[..., None, :]
    return 0.25 * (spec.graph.omega * diff**2 * g).sum(axis=(-1, -2))


def fisher_array(spec: EnergySpec, rho: Array) -> Array:
    # Per unordered edge omega (rho_i - rho_j)(log rho_i - log rho_j); the
    # log-mean mobility cancels one log difference.
    lr = np.log(rho)
    term = (rho[..., :, None] - rho[..., None, :]) * (lr[..., :, None] - lr[..., None, :])
    return 0.5 * (spec.graph.omega * np.where(spec.graph.edge_mask, term, 0.0)).sum(axis=(-1, -2))


def dominant_array(spec: EnergySpec, rho: Array, x: Array) -> Array:
    total = kinetic_array(spec, rho, x) + spec.fisher_coeff * fisher_array(spec, rho)
    if spec.variant == POLYNOMIAL_INTERACTION:
        wm = np.where(spec.graph.edge_mask, spec.interaction, 0.0)
        total = total + 0.5 * np.einsum("...i,ij,...j->...", rho, wm, rho)
    else:
        total = total - (rho * np.log(rho) - rho).sum(axis=-1)
    return total


def gradient_arrays(spec: EnergySpec, rho: Array, x: Array):
    """(dH0/drho, dH0/dx) for raw state arrays of shape (..., n)."""
    G = spec.graph
    mask = G.edge_mask
    g = sym_weight_matrix(G, spec.weight, rho)
    xdiff = x[..., :, None] - x[..., None, :]
    flux = G.omega * xdiff * g
    d_x = flux.sum(axis=-1)

    gt, _ = weight_partial(spec.weight, rho[..., :, None], rho[..., None, :])
    gt = np.where(mask, gt, 0.0)
    d_rho = 0.5 * (G.omega * xdiff**2 * gt).sum(axis=-1)

    lr = np.log(rho)
    ldiff = lr[..., :, None] - lr[..., None, :]
    rdiff = rho[..., :, None] - rho[..., None, :]
    barrier = np.where(mask, G.omega * (ldiff + rdiff / rho[..., :, None]), 0.0)
    d_rho = d_rho + spec.fisher_coeff * barrier.sum(axis=-1)

    if spec.variant == POLYNOMIAL_INTERACTION:
        wm = np.where(mask, spec.interaction, 0.0)
        d_rho = d_rho + rho @ wm.T
    else:
        d_rho = d_rho - lr
    return d_rho, d_x


def fisher_rho_partial(spec: EnergySpec, rho: Array) -> Array:
    """d I / d rho alone (used by barrier diagnostics)."""
    G = spec.graph
    lr = np.log(rho)
    ldiff = lr[..., :, None] - lr[..., None, :]
    rdiff = rho[..., :, None] - rho[..., None, :]
    term = np.where(G.edge_mask, G.omega * (ldiff + rdiff / rho[..., :, None]), 0.0)
    return term.sum(axis=-1)
