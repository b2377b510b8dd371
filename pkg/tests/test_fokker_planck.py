import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from hookean_mkv import fokker_planck as fp
from hookean_mkv.chain_dynamics import BinGrid, ChainParams, init_ensemble, run_ensemble
from hookean_mkv.errors import GridMismatch, GridTooCoarse, StabilityViolation
from hookean_mkv.geometry import ConvexDomain
from hookean_mkv.macro_limit import EtaGrid, MacroDensity, uniform_eta

LINE = ConvexDomain.box([-1.0], [1.0])
UNIT = ConvexDomain.box([-0.5], [0.5])
LEFT = (np.array([-1.0]), np.array([0.0]))


@pytest.fixture(scope="module")
def grid():
    return fp.PhaseGrid(LINE, 12, 16, 6.0, 1.0)


def _left_field(grid, eps):
    eg = EtaGrid.from_domain(grid.domain, 1, grid.n_r)
    return fp.field_from_eta(grid, uniform_eta(eg, LEFT).values, eps)


def test_maxwellian_quadrature_mass():
    g = fp.PhaseGrid(LINE, 4, 32, 6.0, 1.0)
    mx = fp.Maxwellian(1.0)
    assert abs(mx.g(g.v_centers).sum() * g.h_v - 1.0) < 1e-8
    v = np.array([[0.3, -1.2], [2.0, 0.1]])
    assert mx(v[None]) == pytest.approx(np.prod(mx.g(v.ravel())))


def test_phase_grid_validation():
    with pytest.raises(ValueError):
        fp.PhaseGrid(LINE, 8, 16, 5.0, 1.0)          # V_max below 6√β
    with pytest.raises(ValueError):
        fp.PhaseGrid(ConvexDomain.box([-1, -1], [1, 1]), 8, 16)
    with pytest.raises(GridTooCoarse):
        fp.assemble_fp_operator(fp.PhaseGrid(LINE, 8, 6, 6.0), 0.5)
    g = fp.PhaseGrid(LINE, 8, 16)
    np.testing.assert_array_equal(g.v_centers, -g.v_centers[::-1])


def test_constant_field_conserves_mass_exactly(grid):
    op = fp.assemble_fp_operator(grid, 0.5)
    out = op.apply(np.ones(grid.shape))
    assert abs(np.sum(out * op.cell_weights)) < 1e-14


def test_v_diffusion_of_linear_profile_is_second_order():
    beta = 1.3
    errs = []
    for n_v in (128, 256, 512):
        g = fp.PhaseGrid(LINE, 2, n_v, 6 * math.sqrt(beta), beta)
        v = g.v_centers
        out = fp.v_diffusion_apply(v, v, g.v_faces, beta)
        inner = np.abs(v) < 3.0
        errs.append(np.max(np.abs(out[inner] + v[inner] / beta)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.9) and rates[-1] > rates[0]


def test_alpha_zero_has_no_position_diffusion(grid):
    rng = np.random.default_rng(0)
    m = rng.random(grid.shape)
    alpha = 0.05
    op0 = fp.assemble_fp_operator(grid, 0.5, alpha=0.0)
    op1 = fp.assemble_fp_operator(grid, 0.5, alpha=alpha)
    diff = fp.transport_increment(op1, m, 1.0) - fp.transport_increment(op0, m, 1.0)
    lap = np.zeros_like(m)
    for ax in (0, 1):
        dm = np.diff(m, axis=ax)
        lo = [slice(None)] * 4
        hi = [slice(None)] * 4
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        lap[tuple(lo)] += dm
        lap[tuple(hi)] -= dm
    np.testing.assert_allclose(diff, alpha / grid.h_r ** 2 * lap, atol=1e-13)


def test_gibbs_state_is_stationary(grid):
    f0 = fp.gibbs_field(grid, 0.5)
    op = fp.assemble_fp_operator(grid, 0.5)
    dt = 2 * 0.9 * op.stability_bound()
    f, _ = fp.run_fp(f0, op, dt, 50, record_every=0)
    assert np.abs(f.cell_mass() - f0.cell_mass()).sum() < 1e-12


def test_vanishing_coefficients_leave_density_unchanged(grid):
    f0 = _left_field(grid, 1e200)
    op = fp.assemble_fp_operator(grid, 1e200)
    f = fp.step_fp(f0, op, 0.1)
    np.testing.assert_allclose(f.rho_hat, f0.rho_hat, rtol=1e-14, atol=1e-14)


def test_mass_and_nonnegativity_over_many_steps(grid):
    f0 = _left_field(grid, 0.25)
    op = fp.assemble_fp_operator(grid, 0.25)
    dt = 2 * 0.9 * op.stability_bound()
    _, hist = fp.run_fp(f0, op, dt, 300, record_every=1)
    assert max(abs(h["mass"] - 1.0) for h in hist) <= 1e-10
    assert min(h["min_rho_hat"] for h in hist) >= 0.0


def test_point_reflection_and_bead_exchange_symmetry(grid):
    rng = np.random.default_rng(3)
    rho = rng.random(grid.shape)
    rho = rho + rho[::-1, ::-1, ::-1, ::-1]                 # (r, v) ↦ (-r, -v)
    rho = rho + rho.transpose(1, 0, 3, 2)                   # bead exchange
    f = fp.DensityField(grid, rho, 0.5)
    f.rho_hat /= f.mass
    op = fp.assemble_fp_operator(grid, 0.5)
    dt = 2 * 0.9 * op.stability_bound()
    f, _ = fp.run_fp(f, op, dt, 40, record_every=0)
    r = f.rho_hat
    np.testing.assert_allclose(r, r[::-1, ::-1, ::-1, ::-1], rtol=1e-10)
    np.testing.assert_allclose(r, r.transpose(1, 0, 3, 2), rtol=1e-10)


def test_wall_flux_keeps_reflected_velocity_pairs(grid):
    # a density even in v at the walls stays even there to scheme order
    f = fp.gibbs_field(grid, 0.5)
    f.rho_hat *= (1 + 0.5 * np.cos(np.pi * grid.r_centers))[:, None, None, None]
    f.rho_hat /= f.mass
    op = fp.assemble_fp_operator(grid, 0.5)
    dt = 2 * 0.9 * op.stability_bound()
    g, _ = fp.run_fp(f, op, dt, 5, record_every=0)
    wall = g.rho_hat[0]
    odd = np.abs(wall - wall[:, ::-1]).max() / wall.max()
    assert odd < 10 * (grid.h_r + grid.h_v) ** 2


def test_stability_and_grid_checks(grid):
    op = fp.assemble_fp_operator(grid, 0.5)
    f = fp.gibbs_field(grid, 0.5)
    with pytest.raises(StabilityViolation):
        fp.step_fp(f, op, 3 * op.stability_bound())
    other = fp.PhaseGrid(LINE, 8, 16)
    with pytest.raises(GridMismatch):
        fp.step_fp(fp.gibbs_field(other, 0.5), op, 1e-4)


def test_entropy_examples():
    g = fp.PhaseGrid(UNIT, 8, 32, 6.0, 1.0)
    one = fp.DensityField(g, np.ones(g.shape), 0.5)
    assert fp.relative_entropy(one) == 0.0
    e = fp.DensityField(g, np.full(g.shape, math.e), 0.5)
    m_quad = g.maxwellian_cells().sum() * g.h_v ** 2
    assert fp.relative_entropy(e) == pytest.approx(m_quad, rel=1e-14)
    assert m_quad == pytest.approx(1.0, abs=1e-8)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        np.testing.assert_array_equal(fp.entropy_density(np.array([0.0, 1.0])), [1.0, 0.0])


def test_entropy_is_nonnegative(grid):
    rng = np.random.default_rng(5)
    f = fp.DensityField(grid, rng.random(grid.shape) * 3, 0.5)
    assert fp.relative_entropy(f) >= 0.0
    assert fp.gibbs_relative_entropy(f) >= 0.0


def test_fisher_information_examples(grid):
    const = fp.DensityField(grid, np.full(grid.shape, 0.7), 0.5)
    assert fp.fisher_dissipation(const) == 0.0
    g = fp.PhaseGrid(LINE, 2, 400, 6.0, 1.0)
    rho = 1 + 0.1 * np.sin(g.v_centers)
    num = fp.v_fisher(rho, g.v_faces, 1.0)

    def integrand(v):
        return math.exp(-v * v / 2) / math.sqrt(2 * math.pi) * (0.1 * math.cos(v)) ** 2 / (1 + 0.1 * math.sin(v))
    exact = quad(integrand, -6, 6)[0]
    assert abs(num - exact) <= 1e-4 * exact
    rng = np.random.default_rng(6)
    assert fp.fisher_dissipation(fp.DensityField(grid, rng.random(grid.shape), 0.5)) >= 0.0


def test_moments_of_local_equilibrium(grid):
    eta = np.random.default_rng(7).random((grid.n_r, grid.n_r))
    f = fp.field_from_eta(grid, eta, 0.5)
    mom = fp.moments(f)
    assert mom.rho_bar.sum() * grid.h_r ** 2 == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_array_equal(mom.flux, 0.0)
    target = grid.beta * mom.rho_bar[..., None, None] * np.eye(2)
    np.testing.assert_allclose(mom.second, target, rtol=0, atol=1e-6 * mom.rho_bar.max())
    np.testing.assert_array_equal(mom.second, np.swapaxes(mom.second, -1, -2))


def test_metrics_vanish_on_manufactured_equilibrium(grid):
    eta = uniform_eta(EtaGrid.from_domain(LINE, 1, grid.n_r), LEFT)
    f = fp.field_from_eta(grid, eta.values, 0.5)
    m = fp.density_metrics(f, eta)
    assert m.velocity_l1 < 1e-8             # truncated Maxwellian quadrature
    assert m.second_moment < 1e-6
    assert m.spatial_l1 < 1e-12
    with pytest.raises(GridMismatch):
        fp.density_metrics(f, uniform_eta(EtaGrid.from_domain(LINE, 1, grid.n_r * 2)))


def test_energy_inequality_report(grid):
    f0 = _left_field(grid, 0.5)
    f0.rho_hat *= (1 + 0.3 * grid.v_centers / 3)[None, None, :, None]
    f0.rho_hat /= f0.mass
    op = fp.assemble_fp_operator(grid, 0.5)
    dt = 2 * 0.9 * op.stability_bound()
    _, hist = fp.run_fp(f0, op, dt, 100, record_every=1)
    rep = fp.check_energy_inequality(hist, grid, 0.5)
    assert rep["holds"]
    assert rep["constant"] == pytest.approx(16 * 2 * 1 * 2.0 ** 2)
    assert hist[0]["entropy"] == pytest.approx(fp.relative_entropy(f0))
    G = np.array([h["gibbs_entropy"] for h in hist])
    assert np.all(np.diff(G) <= 1e-12 * G[:-1])
    intD = np.array(rep["lhs"]) - np.array([h["entropy"] for h in hist])
    assert np.all(np.diff(intD) >= 0)


@pytest.mark.slow
def test_spatial_marginal_agrees_with_particles_and_converges():
    eps = 0.5
    p = ChainParams(J=1, d=1, eps=eps)
    hist = 0.0
    for seed in range(2):
        e = init_ensemble(p, LINE, 100000, seed, region=LEFT)
        e, _ = run_ensemble(e, p, LINE, 0.0025, 100)
        bins = BinGrid.for_chains(LINE, p, 4)
        hist = hist + np.bincount(bins.index(e.r.reshape(-1, 2)), minlength=16).reshape(4, 4) / (2 * e.N)
    dists = []
    for n_r in (8, 16, 32):
        g = fp.PhaseGrid(LINE, n_r, 24, 6.0, 1.0)
        op = fp.assemble_fp_operator(g, eps)
        n = int(math.ceil(0.25 / (2 * 0.9 * op.stability_bound())))
        f, _ = fp.run_fp(_left_field(g, eps), op, 0.25 / n, n, record_every=0)
        k = n_r // 4
        dists.append(np.abs(fp.spatial_marginal(f).reshape(4, k, 4, k).sum(axis=(1, 3)) - hist).sum())
    assert dists[0] > dists[1] > dists[2]
    assert dists[2] < 0.035
