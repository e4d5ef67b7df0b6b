import math

import numpy as np
import pytest

from graphwhs.energies import (
    LOGARITHMIC_ENTROPY,
    POLYNOMIAL_INTERACTION,
    EnergySpec,
    VariantError,
    control_potential,
    dominant_array,
    dominant_energy,
    energy_gradients,
    entropy,
    fisher_information,
    fisher_rho_partial,
    gradient_arrays,
    interaction_potential,
    kinetic_energy,
    sym_weight_matrix,
)
from graphwhs.graphs import (
    DensityState,
    DomainError,
    Graph,
    HARMONIC,
    MomentumState,
    ProbabilityWeight,
    ShapeError,
)


def pair_graph():
    return Graph.from_edges(2, [(0, 1, 1.0)])


def path3():
    return Graph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.5)])


# ---------------------------------------------------------------------------
# frozen scalar values
# ---------------------------------------------------------------------------

def test_kinetic_two_node_quarter():
    spec = EnergySpec(graph=pair_graph())
    rho = DensityState(rho=np.array([0.5, 0.5]))
    x = MomentumState(s=np.array([1.0, 0.0]))
    assert kinetic_energy(spec, rho, x) == pytest.approx(0.25, rel=1e-15)


def test_fisher_two_node_closed_form():
    spec = EnergySpec(graph=pair_graph())
    rho = DensityState(rho=np.array([0.25, 0.75]))
    assert fisher_information(spec, rho) == pytest.approx(0.5 * math.log(3.0), rel=1e-14)


def test_entropy_uniform():
    rho = DensityState(rho=np.array([0.5, 0.5]))
    assert entropy(rho) == pytest.approx(math.log(0.5) - 1.0, rel=1e-15)


def test_interaction_half():
    W = np.array([[0.0, 2.0], [2.0, 0.0]])
    spec = EnergySpec(graph=pair_graph(), interaction=W)
    rho = DensityState(rho=np.array([0.5, 0.5]))
    assert interaction_potential(spec, rho) == pytest.approx(0.5, rel=1e-15)


def test_control_potential_is_linear_pairing():
    rho = DensityState(rho=np.array([0.25, 0.75]))
    assert control_potential(np.array([1.0, 0.2]), rho) == pytest.approx(0.4)
    with pytest.raises(ShapeError):
        control_potential(np.array([1.0]), rho)


def test_dominant_energy_assembles_terms():
    W = np.array([[0.0, 2.0], [2.0, 0.0]])
    spec = EnergySpec(graph=pair_graph(), interaction=W, fisher_coeff=0.125)
    rho = DensityState(rho=np.array([0.25, 0.75]))
    x = MomentumState(s=np.array([1.0, 0.0]))
    expected = (
        kinetic_energy(spec, rho, x)
        + 0.125 * fisher_information(spec, rho)
        + interaction_potential(spec, rho)
    )
    assert dominant_energy(spec, rho, x) == pytest.approx(expected, rel=1e-14)
    assert dominant_energy(spec, rho, x, V=np.array([1.0, 0.2])) == pytest.approx(
        expected + 0.4, rel=1e-14
    )


def test_entropy_variant_subtracts_entropy():
    spec = EnergySpec(graph=pair_graph(), variant=LOGARITHMIC_ENTROPY)
    rho = DensityState(rho=np.array([0.3, 0.7]))
    x = MomentumState(s=np.zeros(2))
    expected = 0.125 * fisher_information(spec, rho) - entropy(rho)
    assert dominant_energy(spec, rho, x) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(VariantError):
        interaction_potential(spec, rho)


def test_interaction_entries_off_edges_are_ignored():
    W = np.zeros((3, 3))
    W[0, 2] = W[2, 0] = 5.0   # (0, 2) is not an edge of the path
    spec = EnergySpec(graph=path3(), interaction=W)
    rho = DensityState(rho=np.array([0.3, 0.4, 0.3]))
    assert interaction_potential(spec, rho) == 0.0


# ---------------------------------------------------------------------------
# spec validation
# ---------------------------------------------------------------------------

def test_spec_guards():
    with pytest.raises(VariantError):
        EnergySpec(graph=pair_graph(), variant="quartic")
    with pytest.raises(ShapeError):
        EnergySpec(graph=pair_graph(), interaction=np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(ShapeError):
        EnergySpec(graph=pair_graph(), sigma=np.ones(3))
    with pytest.raises(DomainError):
        EnergySpec(graph=pair_graph(), fisher_coeff=-0.1)
    with pytest.raises(DomainError):
        EnergySpec(graph=pair_graph(), tilde_weight_coupling=False)
    # Hyphenated variant names normalize.
    spec = EnergySpec(graph=pair_graph(), variant="Logarithmic-Entropy")
    assert spec.variant == LOGARITHMIC_ENTROPY


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("variant", [POLYNOMIAL_INTERACTION, LOGARITHMIC_ENTROPY])
@pytest.mark.parametrize("kind", ["average", "logarithmic", "harmonic"])
def test_gradients_match_finite_differences(variant, kind):
    rng = np.random.default_rng(23)
    G = path3()
    raw = rng.normal(size=(3, 3))
    spec = EnergySpec(
        graph=G,
        variant=variant,
        weight=ProbabilityWeight(kind),
        interaction=(raw + raw.T) / 2,
    )
    rho = np.array([0.25, 0.45, 0.3])
    x = rng.normal(size=3)
    d_rho, d_x = gradient_arrays(spec, rho, x)
    h = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd_r = (dominant_array(spec, rho + e, x) - dominant_array(spec, rho - e, x)) / (2 * h)
        fd_x = (dominant_array(spec, rho, x + e) - dominant_array(spec, rho, x - e)) / (2 * h)
        assert d_rho[i] == pytest.approx(fd_r, rel=1e-6, abs=1e-8)
        assert d_x[i] == pytest.approx(fd_x, rel=1e-6, abs=1e-8)


def test_momentum_gradient_is_tangent():
    rng = np.random.default_rng(3)
    spec = EnergySpec(graph=path3(), weight=ProbabilityWeight(HARMONIC))
    for _ in range(20):
        raw = rng.dirichlet(np.ones(3))
        rho = np.maximum(raw, 0.05)
        rho /= rho.sum()
        _, d_x = gradient_arrays(spec, rho, rng.normal(size=3))
        assert abs(d_x.sum()) <= 1e-14


def test_hessian_is_weighted_laplacian():
    spec = EnergySpec(graph=path3())
    rho = DensityState(rho=np.array([0.2, 0.5, 0.3]))
    x = MomentumState(s=np.array([0.4, -0.1, 0.6]))
    grads = energy_gradients(spec, rho, x)
    H = grads.hess_x
    assert np.allclose(H, H.T)
    assert np.allclose(H.sum(axis=1), 0.0, atol=1e-15)
    assert np.all(np.linalg.eigvalsh(H) >= -1e-12)
    # Matches the finite difference of d_x, and is x-independent.
    h = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (gradient_arrays(spec, rho.rho, x.s + e)[1]
              - gradient_arrays(spec, rho.rho, x.s - e)[1]) / (2 * h)
        assert np.allclose(H[i], fd, atol=1e-9)


def test_fisher_partial_matches_finite_differences():
    spec = EnergySpec(graph=path3())
    rho = np.array([0.3, 0.25, 0.45])
    part = fisher_rho_partial(spec, rho)
    h = 1e-7
    from graphwhs.energies import fisher_array

    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (fisher_array(spec, rho + e) - fisher_array(spec, rho - e)) / (2 * h)
        assert part[i] == pytest.approx(fd, rel=1e-6)


def test_array_core_broadcasts_over_batches():
    rng = np.random.default_rng(11)
    spec = EnergySpec(graph=path3(), interaction=np.eye(3) * 0.0)
    rho = rng.dirichlet(np.ones(3), size=7)
    rho = np.maximum(rho, 0.05)
    rho /= rho.sum(axis=-1, keepdims=True)
    x = rng.normal(size=(7, 3))
    batch_r, batch_x = gradient_arrays(spec, rho, x)
    batch_h0 = dominant_array(spec, rho, x)
    for k in range(7):
        one_r, one_x = gradient_arrays(spec, rho[k], x[k])
        assert np.array_equal(batch_r[k], one_r)
        assert np.array_equal(batch_x[k], one_x)
        assert batch_h0[k] == dominant_array(spec, rho[k], x[k])


def test_sym_weight_matrix_is_exactly_symmetric():
    spec = EnergySpec(graph=path3(), weight=ProbabilityWeight("logarithmic"))
    g = sym_weight_matrix(spec.graph, spec.weight, np.array([0.31, 0.17, 0.52]))
    assert np.array_equal(g, g.T)
    assert g[0, 2] == 0.0
