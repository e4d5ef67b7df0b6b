import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphwhs.control import (
    BOUNDED_TRACKING,
    QUADRATIC_CONTROL,
    ControlSignal,
    CostSpec,
    ValueEstimate,
    bellman_gap,
    control_hamiltonian_integrand,
    cost_functional,
    fhat_on_norms,
    hamiltonian,
    legendre_fhat,
    running_cost,
    value_function_mc,
)
from graphwhs.dynamics import SdeConfig
from graphwhs.energies import EnergySpec
from graphwhs.graphs import (
    DensityState,
    DomainError,
    Graph,
    MomentumState,
    ShapeError,
)


def pair_graph():
    return Graph.from_edges(2, [(0, 1, 1.0)])


def plain_cost(c: float = 0.5) -> CostSpec:
    return CostSpec(control_coeff=c)


def noiseless_cfg(T: float = 0.25, dt: float = 0.025) -> SdeConfig:
    spec = EnergySpec(graph=pair_graph(), sigma=np.zeros(2))
    return SdeConfig(energy=spec, T=T, dt=dt)


# ---------------------------------------------------------------------------
# signals and cost specs
# ---------------------------------------------------------------------------

def test_signal_validation():
    with pytest.raises(ShapeError):
        ControlSignal(breakpoints=[0.0, 1.0], values=[[0.1, 0.0], [0.0, 0.1]], ell=1.0)
    with pytest.raises(DomainError):
        ControlSignal(breakpoints=[0.0, 1.0, 1.0], values=np.zeros((2, 2)), ell=1.0)
    with pytest.raises(DomainError):
        ControlSignal(breakpoints=[0.0, 1.0], values=[[0.0, 0.0]], ell=0.0)
    with pytest.raises(DomainError):
        ControlSignal(breakpoints=[0.0, 1.0], values=[[1.0, 1.0]], ell=1.0)


def test_signal_piece_selection():
    sig = ControlSignal(
        breakpoints=[0.0, 1.0, 2.0], values=[[0.1, 0.0], [0.0, 0.2]], ell=1.0
    )
    # [b_i, b_{i+1}) pieces; queries past either end clip to the outer piece.
    assert np.array_equal(sig.value_at(-1.0), [0.1, 0.0])
    assert np.array_equal(sig.value_at(0.999), [0.1, 0.0])
    assert np.array_equal(sig.value_at(1.0), [0.0, 0.2])
    assert np.array_equal(sig.value_at(5.0), [0.0, 0.2])
    with pytest.raises(ValueError):
        sig.values[0, 0] = 9.0


def test_cost_spec_guards():
    with pytest.raises(DomainError):
        CostSpec(family="free_lunch")
    with pytest.raises(DomainError):
        CostSpec(control_coeff=0.0)
    with pytest.raises(DomainError):
        CostSpec(tracking_coeff=-1.0)
    with pytest.raises(DomainError):
        CostSpec(bound=-0.5)
    assert CostSpec(family="Bounded_Tracking").family == BOUNDED_TRACKING


def test_state_and_terminal_costs():
    rho = np.array([0.75, 0.25])
    x = np.array([1.0, -1.0])
    dev2 = 2 * 0.25**2 + 2.0  # squared deviation from both targets
    quad = CostSpec(
        family=QUADRATIC_CONTROL,
        tracking_coeff=2.0,
        target_rho=np.array([0.5, 0.5]),
        target_x=np.zeros(2),
        terminal_weight=1.0,
        terminal_offset=0.7,
    )
    assert quad.state_cost(0.0, rho, x) == pytest.approx(2.0 * dev2, rel=1e-14)
    assert quad.terminal_cost(rho, x) == pytest.approx(0.7 + dev2, rel=1e-14)
    bdd = CostSpec(
        family=BOUNDED_TRACKING,
        bound=3.0,
        target_rho=np.array([0.5, 0.5]),
        target_x=np.zeros(2),
        terminal_weight=2.0,
        terminal_offset=0.1,
    )
    sat = -math.expm1(-dev2)
    assert bdd.state_cost(0.0, rho, x) == pytest.approx(3.0 * sat, rel=1e-14)
    assert bdd.terminal_cost(rho, x) == pytest.approx(0.1 + 2.0 * sat, rel=1e-14)
    # Saturation caps the bounded family at its height.
    assert bdd.state_cost(0.0, rho, np.array([50.0, -50.0])) <= 3.0
    assert bdd.state_cost(0.0, rho, np.array([2.0, -2.0])) < 3.0


def test_running_cost_frozen_and_batched():
    spec = plain_cost()
    rho = np.array([0.5, 0.5])
    x = np.zeros(2)
    assert running_cost(spec, 0.0, rho, x, np.array([0.6, 0.8])) == pytest.approx(
        0.5, rel=1e-15
    )
    V = np.array([[0.6, 0.8], [0.0, 0.0], [1.0, 0.0]])
    out = running_cost(spec, 0.0, np.tile(rho, (3, 1)), np.tile(x, (3, 1)), V)
    assert np.allclose(out, [0.5, 0.0, 0.5], rtol=1e-15)


# ---------------------------------------------------------------------------
# the ball-constrained Legendre transform
# ---------------------------------------------------------------------------

def test_fhat_frozen_values():
    spec = plain_cost()
    rho = np.array([0.5, 0.5])
    x = np.zeros(2)
    # ||q|| = 1 sits exactly on the switch 2 c ell; both branches give 1/2.
    assert legendre_fhat(spec, 0.0, rho, x, np.array([0.6, 0.8]), 1.0) == pytest.approx(
        0.5, rel=1e-15
    )
    assert legendre_fhat(spec, 0.0, rho, x, np.array([3.0, 4.0]), 1.0) == pytest.approx(
        4.5, rel=1e-15
    )
    with pytest.raises(DomainError):
        legendre_fhat(spec, 0.0, rho, x, np.zeros(2), 0.0)
    # The state part enters with a minus sign and no transform.
    tracked = CostSpec(tracking_coeff=1.0, target_x=np.zeros(2))
    shift = legendre_fhat(tracked, 0.0, rho, np.array([1.0, -1.0]), np.array([3.0, 4.0]), 1.0)
    assert shift == pytest.approx(4.5 - 2.0, rel=1e-14)


def test_fhat_on_norms_matches_vector_form():
    spec = plain_cost(c=0.7)
    rho = np.array([0.5, 0.5])
    x = np.zeros(2)
    qn = np.array([0.0, 0.3, 1.4, 1.4000001, 5.0])
    ell = 1.0
    table = fhat_on_norms(spec, qn, ell)
    for norm, expect in zip(qn, table):
        got = legendre_fhat(spec, 0.0, rho, x, np.array([norm, 0.0]), ell)
        assert got == pytest.approx(expect, rel=1e-14, abs=1e-300)
    # Continuous across the quadratic/linear switch and convex in between.
    kink = 2.0 * 0.7 * ell
    lo, hi = fhat_on_norms(spec, np.array([kink - 1e-9, kink + 1e-9]), ell)
    assert hi - lo == pytest.approx(0.0, abs=1e-8)
    grid = np.linspace(0.0, 4.0, 401)
    vals = fhat_on_norms(spec, grid, ell)
    assert np.all(np.diff(vals) >= -1e-15)
    assert np.all(np.diff(vals, 2) >= -1e-12)


def test_fhat_lipschitz_in_q():
    spec = plain_cost(c=0.4)
    rho = np.array([0.5, 0.5])
    x = np.zeros(2)
    ell = 1.3
    rng = np.random.default_rng(42)
    for _ in range(300):
        q1 = rng.normal(0.0, 2.0, 2)
        q2 = rng.normal(0.0, 2.0, 2)
        f1 = legendre_fhat(spec, 0.0, rho, x, q1, ell)
        f2 = legendre_fhat(spec, 0.0, rho, x, q2, ell)
        gap = float(np.linalg.norm(q1 - q2))
        assert abs(f1 - f2) <= ell * gap * (1.0 + 1e-12) + 1e-12


@given(
    q1=st.floats(-5.0, 5.0),
    q2=st.floats(-5.0, 5.0),
    v1=st.floats(-1.0, 1.0),
    v2=st.floats(-1.0, 1.0),
)
@settings(max_examples=80, deadline=None)
def test_fhat_dominates_every_candidate(q1, q2, v1, v2):
    spec = plain_cost()
    rho = np.array([0.5, 0.5])
    x = np.zeros(2)
    ell = 1.0
    q = np.array([q1, q2])
    V = np.array([v1, v2])
    nrm = float(np.linalg.norm(V))
    if nrm > ell:
        V *= ell / nrm * (1.0 - 1e-12)
    candidate = float(q @ V) - running_cost(spec, 0.0, rho, x, V)
    assert legendre_fhat(spec, 0.0, rho, x, q, ell) >= candidate - 1e-10


def test_fhat_ascent_agrees_with_closed_form():
    # Same quadratic integrand routed through the numeric fallback.
    c = 0.5
    custom = CostSpec(custom_running=lambda t, rho, x, V: c * float((V**2).sum()))
    closed = plain_cost(c=c)
    rho = np.array([0.5, 0.5])
    x = np.zeros(2)
    for q in (np.array([0.3, -0.2]), np.array([0.6, 0.8]), np.array([-2.0, 1.5])):
        a = legendre_fhat(custom, 0.0, rho, x, q, 1.0)
        b = legendre_fhat(closed, 0.0, rho, x, q, 1.0)
        assert a == pytest.approx(b, abs=1e-6)


# ---------------------------------------------------------------------------
# the control Hamiltonian
# ---------------------------------------------------------------------------

def ball_lattice(ell: float, per_axis: int = 81, ring: int = 720):
    """Brute-force candidate controls: a masked grid plus a boundary ring."""
    ax = np.linspace(-ell, ell, per_axis)
    V1, V2 = np.meshgrid(ax, ax, indexing="ij")
    pts = np.stack([V1.ravel(), V2.ravel()], axis=1)
    pts = pts[(pts**2).sum(axis=1) <= ell * ell]
    theta = np.linspace(0.0, 2.0 * math.pi, ring, endpoint=False)
    boundary = ell * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return np.vstack([pts, boundary])


@pytest.mark.parametrize("q", [np.array([0.4, -0.3]), np.array([3.0, 4.0])])
def test_hamiltonian_is_ball_infimum(q):
    cost = CostSpec(control_coeff=0.5, tracking_coeff=0.3, target_x=np.zeros(2))
    energy = EnergySpec(graph=pair_graph(), sigma=np.array([0.2, 0.2]))
    rho = DensityState(rho=np.array([0.35, 0.65]))
    x = MomentumState(s=np.array([0.4, -0.2]))
    p = np.array([0.3, -0.1])
    Q = np.array([[2.0, 0.3], [0.3, 1.0]])
    ell = 1.0
    ham = hamiltonian(cost, energy, 0.0, rho, x, p, q, Q, ell)
    vals = [
        control_hamiltonian_integrand(cost, energy, 0.0, rho, x, p, q, Q, V)
        for V in ball_lattice(ell)
    ]
    brute = min(vals)
    assert ham <= brute + 1e-12
    assert ham >= brute - 1e-3
    # The minimizer the transform encodes must achieve the same value.
    qn = float(np.linalg.norm(q))
    V_star = q / (2.0 * cost.control_coeff) if qn <= ell else q * (ell / qn)
    at_star = control_hamiltonian_integrand(cost, energy, 0.0, rho, x, p, q, Q, V_star)
    assert at_star == pytest.approx(ham, abs=1e-12)


def test_hamiltonian_quadratic_term_and_guard():
    cost = plain_cost()
    energy = EnergySpec(graph=pair_graph(), sigma=np.array([0.2, 0.2]))
    rho = DensityState(rho=np.array([0.35, 0.65]))
    x = MomentumState(s=np.array([0.4, -0.2]))
    p = np.array([0.3, -0.1])
    q = np.array([0.2, 0.5])
    Q = np.array([[2.0, 0.3], [0.3, 1.0]])
    base = hamiltonian(cost, energy, 0.0, rho, x, p, q, np.zeros((2, 2)), 1.0)
    lifted = hamiltonian(cost, energy, 0.0, rho, x, p, q, Q, 1.0)
    assert lifted - base == pytest.approx(0.5 * (0.04 * 2.0 + 0.04 * 1.0), rel=1e-12)
    with pytest.raises(ShapeError):
        hamiltonian(cost, energy, 0.0, rho, x, p, q, np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0)


# ---------------------------------------------------------------------------
# Monte-Carlo cost and value estimates
# ---------------------------------------------------------------------------

def test_cost_functional_noiseless_constant():
    cfg = noiseless_cfg()
    cost = CostSpec(control_coeff=0.5, terminal_offset=0.7)
    rho = DensityState(rho=np.array([0.35, 0.65]))
    x = MomentumState(s=np.array([0.4, -0.2]))
    est = cost_functional(cost, cfg, 0.0, rho, x, None, 3, 99)
    # No targets and no control: only the terminal constant remains (the
    # mean picks up one rounding of 2.1 even though every path is 0.7).
    assert est.value == pytest.approx(0.7, abs=1e-15)
    assert est.std_error <= 1e-15
    assert est.n_paths == 3
    d = est.to_dict()
    assert set(d) == {"value", "std_error", "n_paths", "control_class", "trace"}
    assert d["control_class"] == "fixed control"
    assert d["trace"]["seed"] == 99

    V = np.array([0.6, 0.0])
    sig = ControlSignal.constant(V, 0.0, cfg.T, 1.0)
    with_ctrl = cost_functional(cost, cfg, 0.0, rho, x, sig, 3, 99)
    # Left-rectangle sums of a constant integrand telescope to c ||V||^2 T.
    assert with_ctrl.value == pytest.approx(0.7 + 0.5 * 0.36 * cfg.T, abs=1e-13)


def test_value_function_mc_deterministic_and_bounded_by_zero_control():
    spec = EnergySpec(graph=pair_graph(), sigma=np.array([0.2, 0.2]))
    cfg = SdeConfig(energy=spec, T=0.1, dt=5e-3)
    cost = CostSpec(
        family=BOUNDED_TRACKING,
        control_coeff=0.5,
        target_rho=np.array([0.5, 0.5]),
        target_x=np.zeros(2),
        terminal_weight=1.0,
    )
    rho = DensityState(rho=np.array([0.35, 0.65]))
    x = MomentumState(s=np.array([0.4, -0.2]))
    klass = {"ell": 1.0, "m": 1}
    a = value_function_mc(cost, cfg, 0.0, rho, x, klass, 16, 7)
    b = value_function_mc(cost, cfg, 0.0, rho, x, klass, 16, 7)
    assert a.value == b.value and a.std_error == b.std_error
    assert a.control_class.startswith("piecewise-constant")
    assert a.trace["breakpoints"] == [0.0, 0.1]
    assert not a.trace["flagged"]
    # Optimization starts from the zero signal and only ever improves on it.
    zero = ControlSignal(breakpoints=[0.0, 0.1], values=np.zeros((1, 2)), ell=1.0)
    baseline = cost_functional(cost, cfg, 0.0, rho, x, zero, 16, 7)
    assert a.value <= baseline.value + 1e-15


def test_value_class_nesting():
    spec = EnergySpec(graph=pair_graph(), sigma=np.array([0.2, 0.2]))
    cfg = SdeConfig(energy=spec, T=0.1, dt=5e-3)
    cost = CostSpec(
        family=BOUNDED_TRACKING,
        control_coeff=0.5,
        target_rho=np.array([0.5, 0.5]),
        target_x=np.zeros(2),
        terminal_weight=1.0,
    )
    rho = DensityState(rho=np.array([0.35, 0.65]))
    x = MomentumState(s=np.array([0.4, -0.2]))
    one = value_function_mc(cost, cfg, 0.0, rho, x, {"ell": 1.0, "m": 1}, 32, 11, budget=5000)
    two = value_function_mc(cost, cfg, 0.0, rho, x, {"ell": 1.0, "m": 2}, 32, 11, budget=5000)
    # Refining the class can only help up to optimizer slack (shared paths).
    assert two.value <= one.value + 3.0 * (one.std_error + two.std_error) + 1e-9


def test_class_breakpoints_must_span_horizon():
    cfg = noiseless_cfg(T=0.1, dt=5e-3)
    cost = plain_cost()
    rho = DensityState(rho=np.array([0.35, 0.65]))
    x = MomentumState(s=np.array([0.4, -0.2]))
    with pytest.raises(DomainError):
        value_function_mc(
            cost, cfg, 0.0, rho, x, {"ell": 1.0, "breakpoints": [0.0, 0.05]}, 4, 1
        )


def test_budget_flagging():
    spec = EnergySpec(graph=pair_graph(), sigma=np.array([0.2, 0.2]))
    cfg = SdeConfig(energy=spec, T=0.05, dt=5e-3)
    cost = benchmarkish_cost()
    rho = DensityState(rho=np.array([0.35, 0.65]))
    x = MomentumState(s=np.array([0.4, -0.2]))
    est = value_function_mc(cost, cfg, 0.0, rho, x, {"ell": 1.0, "m": 2}, 8, 5, budget=3)
    assert est.trace["flagged"]
    assert est.trace["evals"] <= 3


def benchmarkish_cost() -> CostSpec:
    return CostSpec(
        family=BOUNDED_TRACKING,
        control_coeff=0.5,
        target_rho=np.array([0.5, 0.5]),
        target_x=np.zeros(2),
        terminal_weight=1.0,
    )


# ---------------------------------------------------------------------------
# dynamic-programming gap
# ---------------------------------------------------------------------------

def test_bellman_gap_guards():
    spec3 = EnergySpec(
        graph=Graph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]), sigma=np.zeros(3)
    )
    cfg3 = SdeConfig(energy=spec3, T=0.1, dt=5e-3)
    cost = plain_cost()
    with pytest.raises(DomainError):
        bellman_gap(
            cost, cfg3, 0.0, 0.05,
            DensityState(rho=np.array([0.3, 0.4, 0.3])),
            MomentumState(s=np.zeros(3)),
            {"ell": 1.0, "m": 1}, 8, 1,
        )
    cfg2 = noiseless_cfg(T=0.1, dt=5e-3)
    rho = DensityState(rho=np.array([0.35, 0.65]))
    x = MomentumState(s=np.array([0.4, -0.2]))
    with pytest.raises(DomainError):
        bellman_gap(cost, cfg2, 0.05, 0.05, rho, x, {"ell": 1.0, "m": 1}, 8, 1)
    with pytest.raises(DomainError):
        bellman_gap(cost, cfg2, 0.0, 0.2, rho, x, {"ell": 1.0, "m": 1}, 8, 1)


def test_bellman_gap_small_run():
    spec = EnergySpec(graph=pair_graph(), sigma=np.array([0.2, 0.2]))
    cfg = SdeConfig(energy=spec, T=0.1, dt=5e-3)
    cost = benchmarkish_cost()
    rho = DensityState(rho=np.array([0.35, 0.65]))
    x = MomentumState(s=np.array([0.4, -0.2]))
    klass = {"ell": 1.0, "m": 1}
    gap, se, detail = bellman_gap(
        cost, cfg, 0.0, 0.05, rho, x, klass, 60, 21,
        inner_paths=50, lattice_shape=(3, 3, 3), return_detail=True,
    )
    assert gap >= 0.0 and np.isfinite(gap)
    assert se > 0.0
    assert set(detail) >= {
        "outer", "middle_value", "middle_se", "inner_se_max", "lattice_lo", "lattice_hi"
    }
    assert detail["lattice_lo"][0] >= 2.0 * cfg.boundary_floor
    assert detail["lattice_hi"][0] <= 1.0 - 2.0 * cfg.boundary_floor
    pair = bellman_gap(
        cost, cfg, 0.0, 0.05, rho, x, klass, 60, 21,
        inner_paths=50, lattice_shape=(3, 3, 3),
    )
    assert pair == (gap, se)
