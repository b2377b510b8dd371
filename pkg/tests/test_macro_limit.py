import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from hookean_mkv import macro_limit as ml
from hookean_mkv.chain_dynamics import BinGrid, ChainParams, init_ensemble
from hookean_mkv.errors import GridMismatch, StabilityViolation
from hookean_mkv.geometry import ConvexDomain

LINE = ConvexDomain.box([-1.0], [1.0])


def test_rouse_small_chains():
    r2 = ml.build_rouse(2)
    np.testing.assert_array_equal(r2.B, [[-1, 0], [1, -1], [0, 1]])
    np.testing.assert_array_equal(r2.R, [[2, -1], [-1, 2]])
    np.testing.assert_allclose(r2.eigenvalues, [1, 3], atol=1e-15)
    r1 = ml.build_rouse(1)
    np.testing.assert_array_equal(r1.R, [[2]])
    with pytest.raises(ValueError):
        ml.build_rouse(0)


@pytest.mark.parametrize("J", range(1, 9))
def test_rouse_eigenvalues(J):
    r = ml.build_rouse(J)
    np.testing.assert_allclose(np.linalg.eigvalsh(r.R), r.eigenvalues, atol=1e-12)
    Bd, Rd = r.block(2)
    np.testing.assert_array_equal(Rd, Bd.T @ Bd)


def test_change_of_variables_round_trip_bulk():
    rng = np.random.default_rng(0)
    r = rng.uniform(-1, 1, size=(100000, 4, 2))
    q, x = ml.change_of_variables(r)
    assert np.max(np.abs(ml.inverse_change_of_variables(q, x) - r)) <= 1e-14


@given(st.integers(1, 5), st.integers(1, 3), st.data())
def test_change_of_variables_is_bijective(J, d, data):
    r = data.draw(arrays(float, (J + 1, d), elements=st.floats(-10, 10)))
    q, x = ml.change_of_variables(r)
    np.testing.assert_allclose(ml.inverse_change_of_variables(q, x), r, atol=1e-12)
    q2, x2 = ml.change_of_variables(ml.inverse_change_of_variables(q, x))
    np.testing.assert_allclose(q2, q, atol=1e-12)
    np.testing.assert_allclose(x2, x, atol=1e-12)


def test_config_maxwellian_normalised():
    M = ml.ConfigMaxwellian(1, 2, 0.7)
    q = np.zeros((1, 2))
    assert M(q) == pytest.approx(1 / (2 * np.pi * 0.7))
    s = np.linspace(-8, 8, 801)
    g = M(np.stack(np.meshgrid(s, s, indexing="ij"), -1)[..., None, :])
    assert g.sum() * (s[1] - s[0]) ** 2 == pytest.approx(1.0, abs=1e-9)


# -- limit equation for η --------------------------------------------------------

@pytest.fixture(scope="module")
def eta_grid():
    return ml.EtaGrid.from_domain(LINE, 1, 32)


def test_eta_grid_geometry(eta_grid):
    assert eta_grid.shape == (32, 32)
    assert eta_grid.cell_volume == pytest.approx((2 / 32) ** 2)
    u = ml.uniform_eta(eta_grid, (np.array([-1.0]), np.array([-0.03])))
    assert u.mass == pytest.approx(1.0)
    assert np.count_nonzero(u.values[:, -1]) == 0
    assert 0 < u.values[15, 15] < u.values[0, 0]              # partially covered cell


def test_eta_mass_positivity_and_max_principle(eta_grid):
    rng = np.random.default_rng(1)
    eta = ml.MacroDensity(eta_grid, rng.random(eta_grid.shape))
    op = ml.assemble_eta_operator(eta_grid, 1.0, drift=False)
    dt = 0.9 * ml.eta_stability_bound(op)
    lo, hi = eta.values.min(), eta.values.max()
    m0 = eta.mass
    for _ in range(200):
        eta = ml.step_eta(eta, op, dt)
        assert eta.values.min() >= lo - 1e-14 and eta.values.max() <= hi + 1e-14
    assert eta.mass == pytest.approx(m0, rel=1e-12)


def test_eta_with_flow_keeps_mass_and_sign(eta_grid):
    def u(x, t):
        return np.column_stack([np.cos(3 * x[:, 0]) * 4])
    eta = ml.uniform_eta(eta_grid, (np.array([-1.0]), np.array([0.0])))
    out, snaps = ml.run_eta(eta, 1.0, 0.2, u=u, record_times=[0.1])
    assert [s.t for s in snaps] == [0.1] and out.t == 0.2
    assert out.mass == pytest.approx(1.0, abs=1e-12)
    assert out.values.min() >= 0.0


def test_discrete_gibbs_is_stationary_and_attracting(eta_grid):
    g = ml.gibbs_eta(eta_grid, 1.0)
    op = ml.assemble_eta_operator(eta_grid, 1.0)
    assert np.max(np.abs(ml.eta_rhs(g.values, op))) <= 1e-11 * g.values.max()
    out, _ = ml.run_eta(ml.uniform_eta(eta_grid), 1.0, 5.0)
    assert np.abs(out.values - g.values).sum() * eta_grid.cell_volume <= 5e-2


def test_eta_stability_violation(eta_grid):
    op = ml.assemble_eta_operator(eta_grid, 1.0)
    with pytest.raises(StabilityViolation):
        ml.step_eta(ml.uniform_eta(eta_grid), op, 2 * ml.eta_stability_bound(op))


def test_coarsen_preserves_mass(eta_grid):
    eta = ml.gibbs_eta(eta_grid, 1.0)
    c = eta.coarsen(8)
    assert c.shape == (4, 4)
    assert c.sum() == pytest.approx(1.0)


# -- classical configuration-space equation -------------------------------------

@pytest.fixture(scope="module")
def xq():
    return ml.XQGrid.from_domain(LINE, 1, 16, 24)


def test_maxwellian_is_equilibrium(xq):
    _, q = xq.mesh()
    psi = ml.ConfigMaxwellian(1, 1)(q)
    assert np.max(np.abs(ml.classical_fp_rhs(psi, xq, 1.0))) <= 1e-13 * psi.max()


def test_factorised_state_reduces_to_centre_diffusion(xq):
    x, q = xq.mesh()
    psi = (1 + 0.5 * np.cos(np.pi * x[..., 0])) * ml.ConfigMaxwellian(1, 1)(q)
    rhs = ml.classical_fp_rhs(psi, xq, 1.0)
    np.testing.assert_allclose(rhs, ml.x_transport_rhs(psi, xq, 1.0), atol=1e-13)
    # 1-D centre diffusion with coefficient β/(J+1)
    xc = xq.x_centers(0)
    lap = -0.5 * np.pi ** 2 * 0.5 * np.cos(np.pi * xc)
    dens = ml.q_integral(rhs, xq) / ml.q_integral(np.ones_like(psi) * ml.ConfigMaxwellian(1, 1)(q), xq)
    assert np.max(np.abs(dens - lap)[2:-2]) < 0.05


def test_classical_rhs_conserves_mass_with_flow(xq):
    rng = np.random.default_rng(2)
    psi = rng.random(xq.shape)

    def u(x, t):
        return np.sin(np.pi * x)

    def grad_u(x, t):
        return (np.pi * np.cos(np.pi * x))[:, :, None]
    rhs = ml.classical_fp_rhs(psi, xq, 1.0, u=u, grad_u=grad_u)
    assert abs(rhs.sum()) <= 1e-11 * np.abs(rhs).sum()


# -- operator identity -------------------------------------------------------------

@pytest.mark.parametrize("J,d", [(1, 1), (2, 2), (3, 1)])
def test_operator_identity(J, d):
    pts = np.random.default_rng(J * 10 + d).uniform(-1, 1, (4, J + 1, d))
    const = ml.operator_identity_check(J, d, lambda r: 3.0, pts, h=1e-3)
    assert const["max_err"] == 0.0 and np.all(const["lhs"] == 0)
    spring = ml.operator_identity_check(J, d, lambda r: np.sum((r[1] - r[0]) ** 2), pts, h=1e-3)
    np.testing.assert_allclose(spring["lhs"], 4 * d, atol=1e-6)
    np.testing.assert_allclose(spring["rhs"], 4 * d, atol=1e-6)
    A = np.random.default_rng(5).normal(size=((J + 1) * d,) * 2)

    def quad(r):
        z = r.ravel()
        return z @ A @ z + z.sum()
    assert ml.operator_identity_check(J, d, quad, pts, h=1e-3)["max_err"] <= 1e-6


# -- equilibration metrics -------------------------------------------------------------

def test_ensemble_metrics_near_equilibrium():
    p = ChainParams(J=1, d=1, eps=0.5)
    e = init_ensemble(p, LINE, 200000, 0)
    bins = BinGrid.for_chains(LINE, p, 4)
    eg = ml.EtaGrid.from_domain(LINE, 1, 8)
    m = ml.ensemble_metrics(e, p, bins, ml.uniform_eta(eg))
    assert 0.0 <= m.velocity_l1 < 0.03
    assert abs(m.second_moment_sq) < 1e-3
    assert m.spatial_l1 < 0.03
    with pytest.raises(GridMismatch):
        ml.ensemble_metrics(e, p, bins, ml.uniform_eta(ml.EtaGrid.from_domain(LINE, 1, 6)))


def test_metrics_detect_wrong_temperature():
    p = ChainParams(J=1, d=1, eps=0.5)
    e = init_ensemble(p, LINE, 50000, 1)
    e.v *= 2.0
    m = ml.ensemble_metrics(e, p, BinGrid.for_chains(LINE, p, 4))
    assert m.velocity_l1 > 0.3
    assert math.isnan(m.spatial_l1)
    # ℙ = 4β in every bin: ‖ℙ - β ϱ̄ 𝕀‖² = Σ_bins (3 ϱ̄)² · vol · 2
    vol = (2 / 4) ** 2
    assert m.second_moment_sq == pytest.approx(2 * 9 / (16 * vol ** 2) * vol, rel=0.1)


def test_space_time_average():
    s = [ml.EquilibrationMetrics(0.1, 1.0, 4.0, 0.0), ml.EquilibrationMetrics(0.2, 3.0, 0.0, 2.0)]
    m = ml.space_time_metrics(s)
    assert (m.t, m.velocity_l1, m.second_moment_sq, m.spatial_l1) == (0.2, 2.0, 2.0, 1.0)
    assert m.second_moment == pytest.approx(math.sqrt(2))
    with pytest.raises(ValueError):
        ml.space_time_metrics([])
