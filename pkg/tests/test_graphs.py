import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphwhs.graphs import (
    AVERAGE,
    HARMONIC,
    LOGARITHMIC,
    DensityState,
    DomainError,
    EdgeField,
    Graph,
    GraphError,
    MomentumState,
    ProbabilityWeight,
    ShapeError,
    divergence,
    frechet_project,
    graph_gradient,
    rho_inner,
    two_node_distance_oracle,
    wasserstein_distance,
    weight_eval,
    weight_matrix,
    weight_partial,
)

positive = st.floats(min_value=1e-3, max_value=1e3)


def triangle():
    return Graph.from_edges(3, [(0, 1, 1.0), (1, 2, 2.0), (0, 2, 0.5)])


# ---------------------------------------------------------------------------
# construction and validation
# ---------------------------------------------------------------------------

def test_from_edges_roundtrip():
    G = triangle()
    assert G.edges == [(0, 1), (0, 2), (1, 2)]
    assert Graph.from_json(G.to_json()).omega.tolist() == G.omega.tolist()


def test_graph_rejects_self_loop_range_and_disconnection():
    with pytest.raises(GraphError):
        Graph.from_edges(3, [(0, 0, 1.0)])
    with pytest.raises(GraphError):
        Graph.from_edges(3, [(0, 3, 1.0)])
    with pytest.raises(GraphError):
        Graph.from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)])
    with pytest.raises(GraphError):
        Graph.from_edges(2, [(0, 1, -1.0)])


def test_density_state_guards():
    with pytest.raises(DomainError):
        DensityState(rho=np.array([0.5, 0.6]))
    with pytest.raises(DomainError):
        DensityState(rho=np.array([1.0, 0.0]))
    with pytest.raises(ShapeError):
        DensityState(rho=np.array([[0.5, 0.5]]))
    r = DensityState(rho=np.array([0.25, 0.75]))
    assert r.n == 2 and not r.rho.flags.writeable


def test_edge_field_guards():
    G = triangle()
    with pytest.raises(ValueError):
        EdgeField(values=np.ones((3, 3)), graph=G)  # not skew
    v = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    assert EdgeField(values=v, graph=G).values[1, 0] == -1.0


def test_invalid_weight_kind():
    with pytest.raises(DomainError):
        ProbabilityWeight("geometric")


# ---------------------------------------------------------------------------
# weight means
# ---------------------------------------------------------------------------

def test_weight_frozen_values():
    assert weight_eval(ProbabilityWeight(AVERAGE), 0.25, 0.75) == 0.5
    assert weight_eval(ProbabilityWeight(HARMONIC), 0.25, 0.75) == pytest.approx(0.375)
    # Logarithmic mean of (1/4, 3/4) is (1/2) / log 3.
    got = weight_eval(ProbabilityWeight(LOGARITHMIC), 0.25, 0.75)
    assert got == pytest.approx(0.5 / math.log(3.0), rel=1e-14)
    assert weight_eval(ProbabilityWeight(LOGARITHMIC), 0.0, 0.75) == 0.0


@pytest.mark.parametrize("kind", [AVERAGE, LOGARITHMIC, HARMONIC])
@given(t=positive, r=positive, lam=st.floats(min_value=1e-2, max_value=1e2))
@settings(max_examples=60, deadline=None)
def test_weight_axioms(kind, t, r, lam):
    w = ProbabilityWeight(kind)
    g = weight_eval(w, t, r)
    assert weight_eval(w, r, t) == pytest.approx(g, rel=1e-12, abs=1e-300)
    assert min(t, r) * (1 - 1e-12) <= g <= max(t, r) * (1 + 1e-12)
    assert weight_eval(w, lam * t, lam * r) == pytest.approx(lam * g, rel=1e-11)


@pytest.mark.parametrize("kind", [AVERAGE, LOGARITHMIC, HARMONIC])
@given(t=positive, r=positive, t2=positive, r2=positive)
@settings(max_examples=60, deadline=None)
def test_weight_midpoint_concavity(kind, t, r, t2, r2):
    w = ProbabilityWeight(kind)
    lhs = weight_eval(w, 0.5 * (t + t2), 0.5 * (r + r2))
    rhs = 0.5 * (weight_eval(w, t, r) + weight_eval(w, t2, r2))
    assert lhs >= rhs - 1e-11 * max(1.0, lhs)


def test_logarithmic_branch_is_smooth():
    # Values just inside and outside the midpoint branch must agree closely.
    w = ProbabilityWeight(LOGARITHMIC)
    t = 1.0
    inside = weight_eval(w, t, t * (1 + 0.5e-8))
    outside = weight_eval(w, t, t * (1 + 2e-8))
    assert abs(inside - outside) < 1e-7
    assert weight_eval(w, t, t) == t


@pytest.mark.parametrize("kind", [AVERAGE, LOGARITHMIC, HARMONIC])
def test_weight_partial_matches_finite_differences(kind):
    w = ProbabilityWeight(kind)
    rng = np.random.default_rng(5)
    h = 1e-7
    for _ in range(25):
        t, r = rng.uniform(0.05, 2.0, 2)
        gt, gr = weight_partial(w, t, r)
        fd_t = (weight_eval(w, t + h, r) - weight_eval(w, t - h, r)) / (2 * h)
        fd_r = (weight_eval(w, t, r + h) - weight_eval(w, t, r - h)) / (2 * h)
        assert gt == pytest.approx(fd_t, rel=2e-6, abs=2e-7)
        assert gr == pytest.approx(fd_r, rel=2e-6, abs=2e-7)


def test_weight_partial_near_diagonal_uses_series():
    w = ProbabilityWeight(LOGARITHMIC)
    gt, gr = weight_partial(w, 1.0, 1.0 + 1e-10)
    assert gt == pytest.approx(0.5, abs=1e-9)
    assert gr == pytest.approx(0.5, abs=1e-9)


def test_weight_matrix_is_edge_masked():
    G = Graph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)])
    M = weight_matrix(G, ProbabilityWeight(AVERAGE), np.array([0.2, 0.3, 0.5]))
    assert M[0, 2] == 0.0 and M[2, 0] == 0.0
    assert M[0, 1] == pytest.approx(0.25)
    assert np.array_equal(M, M.T)


# ---------------------------------------------------------------------------
# calculus
# ---------------------------------------------------------------------------

def test_gradient_divergence_integration_by_parts():
    rng = np.random.default_rng(17)
    G = triangle()
    w = ProbabilityWeight(LOGARITHMIC)
    rho = DensityState(rho=np.array([0.5, 0.3, 0.2]))
    for _ in range(20):
        phi = rng.normal(size=3)
        raw = rng.normal(size=(3, 3))
        ups = EdgeField(values=np.where(G.edge_mask, raw - raw.T, 0.0), graph=G)
        lhs = rho_inner(G, w, rho, graph_gradient(G, phi), ups)
        rhs = float(phi @ divergence(G, w, rho, ups))
        assert lhs == pytest.approx(-rhs, abs=1e-12)


def test_divergence_is_mean_zero():
    G = triangle()
    rho = DensityState(rho=np.array([0.6, 0.25, 0.15]))
    v = graph_gradient(G, np.array([1.0, -2.0, 0.5]))
    div = divergence(G, ProbabilityWeight(HARMONIC), rho, v)
    assert div.sum() == pytest.approx(0.0, abs=1e-14)


def test_frechet_project_removes_mean():
    g = np.array([3.0, -1.0, 1.0])
    p = frechet_project(g)
    assert p.sum() == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(p - p.mean(), p)


def test_gradient_of_constant_vanishes():
    G = triangle()
    assert np.all(graph_gradient(G, np.full(3, 2.5)).values == 0.0)


# ---------------------------------------------------------------------------
# transport distance
# ---------------------------------------------------------------------------

def test_two_node_average_distance_closed_form():
    # Arithmetic mean of (r, 1-r) is constantly 1/2, so the length element
    # is sqrt(2) dr and the distance is sqrt(2) |b - a|.
    G = Graph.from_edges(2, [(0, 1, 1.0)])
    w = ProbabilityWeight(AVERAGE)
    a, b = 0.3, 0.6
    d = wasserstein_distance(
        G, w, DensityState(rho=np.array([a, 1 - a])), DensityState(rho=np.array([b, 1 - b])),
        steps=24, iters=400,
    )
    assert d == pytest.approx(math.sqrt(2.0) * 0.3, abs=5e-4)
    assert two_node_distance_oracle(w, 1.0, a, b) == pytest.approx(math.sqrt(2.0) * 0.3, rel=1e-10)


def test_distance_oracle_guards():
    w = ProbabilityWeight(AVERAGE)
    with pytest.raises(DomainError):
        two_node_distance_oracle(w, 1.0, 0.0, 0.5)
    with pytest.raises(DomainError):
        two_node_distance_oracle(w, -1.0, 0.3, 0.5)
    assert two_node_distance_oracle(w, 1.0, 0.4, 0.4) == 0.0


def test_distance_is_symmetric_and_scales_with_omega():
    G4 = Graph.from_edges(2, [(0, 1, 4.0)])
    w = ProbabilityWeight(HARMONIC)
    a = DensityState(rho=np.array([0.2, 0.8]))
    b = DensityState(rho=np.array([0.7, 0.3]))
    d_ab = wasserstein_distance(G4, w, a, b, steps=16, iters=200)
    d_ba = wasserstein_distance(G4, w, b, a, steps=16, iters=200)
    assert d_ab == pytest.approx(d_ba, rel=1e-6)
    # Quadrupling omega halves the length element.
    assert two_node_distance_oracle(w, 4.0, 0.2, 0.7) == pytest.approx(
        0.5 * two_node_distance_oracle(w, 1.0, 0.2, 0.7), rel=1e-12
    )
