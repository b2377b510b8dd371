"""End-to-end acceptance criteria at desk scale.

Run with ``pytest tests/test_acceptance.py -v``; a PASS/FAIL line per
criterion is printed in the terminal summary.
"""
import math
from pathlib import Path

import numpy as np
import pytest

from hookean_mkv import fokker_planck as fp
from hookean_mkv.chain_dynamics import ChainParams, Ensemble, init_ensemble, run_ensemble
from hookean_mkv.config import config_from_dict, load_config
from hookean_mkv.geometry import ConfigurationDomain, ConvexDomain
from hookean_mkv.harness import (coupled_iteration, identity_verification,
                                 oseen_verification, run_scenario, centre_reduction_check)
from hookean_mkv.macro_limit import EtaGrid, gibbs_eta, run_eta, uniform_eta
from hookean_mkv.stress import (fluid_grid, gauss_legendre_quadrature, gaussian_psi,
                                kramers_from_ensemble, kramers_macro, stress_bound)

pytestmark = pytest.mark.acceptance

LINE = ConvexDomain.box([-1.0], [1.0])
LEFT = (np.array([-1.0]), np.array([0.0]))
SWEEP = [0.5, 0.25, 0.125]
CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _sweep_config(**kinetic):
    return config_from_dict({
        "seed": 7, "eps_sweep": SWEEP, "domain": {"kind": "box", "dim": 1, "extents": [[-1.0, 1.0]]},
        "chain": {"J": 1, "d": 1, "beta": 1.0, "H": 1.0}, "macro": {"n": 32},
        "kinetic": {"dt": 0.002, "init_region": [[-1.0, 0.0]], **kinetic},
    })


@pytest.fixture(scope="module")
def equilibration_run(tmp_path_factory):
    cfg = _sweep_config(N=50000, T=2.0, record_every=50, n_bins=4)
    return run_scenario(cfg, "simulate-kinetic", tmp_path_factory.mktemp("c3"))


@pytest.fixture(scope="module")
def agreement_run(tmp_path_factory):
    cfg = config_from_dict({**_sweep_config(N=50000, T=1.0, record_every=0, n_bins=8).to_dict(),
                            "replicates": 8, "seed": 1000})
    return run_scenario(cfg, "simulate-kinetic", tmp_path_factory.mktemp("c4"))


def _left_field(grid, eps):
    eg = EtaGrid.from_domain(grid.domain, 1, grid.n_r)
    return fp.field_from_eta(grid, uniform_eta(eg, LEFT).values, eps)


def test_criterion_01_mass_conservation(criterion):
    grid = fp.PhaseGrid(LINE, 24, 32, 6.0, 1.0)
    op = fp.assemble_fp_operator(grid, 0.5, u=lambda x, t: 0.5 * np.sin(np.pi * x))
    _, hist = fp.run_fp(_left_field(grid, 0.5), op, 2 * 0.9 * op.stability_bound(), 1000, record_every=10)
    err = max(abs(h["mass"] - 1.0) for h in hist)
    criterion(1, err <= 1e-10, f"max |mass - 1| = {err:.2e} over 1000 steps (tol 1e-10)")


def test_criterion_02_gibbs_stationarity(criterion):
    grid = fp.PhaseGrid(LINE, 24, 32, 6.0, 1.0)
    g0 = fp.gibbs_field(grid, 0.5)
    op = fp.assemble_fp_operator(grid, 0.5)
    n = math.ceil(1.0 / (2 * 0.9 * op.stability_bound()))
    g1, _ = fp.run_fp(g0, op, 1.0 / n, n, record_every=0)
    d_fp = float(np.abs(g1.cell_mass() - g0.cell_mass()).sum())
    eg = EtaGrid.from_domain(LINE, 1, 32)
    e0 = gibbs_eta(eg, 1.0)
    e1, _ = run_eta(e0, 1.0, 1.0)
    d_eta = float(np.abs(e1.values - e0.values).sum() * eg.cell_volume)
    criterion(2, d_fp <= 1e-3 and d_eta <= 1e-3,
              f"L1 drift over T=1: FP {d_fp:.2e}, eta {d_eta:.2e} (tol 1e-3)")


def test_criterion_03_momentum_equilibration(criterion, equilibration_run):
    st = [equilibration_run["eps"][format(e, "g")]["space_time"] for e in SWEEP]
    a = [s["velocity_l1"] for s in st]
    b = [s["second_moment"] for s in st]
    ratios = [b[k + 1] / b[k] for k in range(2)]
    ok_a = a[0] > a[1] > a[2]
    ok_b = all(0.35 <= r <= 1.0 for r in ratios)
    criterion(3, ok_a and ok_b,
              f"velocity L1 {np.round(a, 4).tolist()} strictly decreasing={ok_a}; "
              f"|P - beta rho I| {np.round(b, 4).tolist()} ratios {np.round(ratios, 3).tolist()} "
              f"in [0.35, 1.0]={ok_b}")


def test_criterion_04_kinetic_to_macro(criterion, agreement_run):
    fin = [agreement_run["eps"][format(e, "g")]["final"] for e in SWEEP]
    d = [f["spatial_l1"] for f in fin]
    se = [f["spatial_l1_std"] / math.sqrt(8) for f in fin]
    ok = all(d[k + 1] <= d[k] + 2 * math.hypot(se[k], se[k + 1]) for k in range(2))
    criterion(4, ok, f"spatial L1 at T=1 {np.round(d, 4).tolist()} +- {np.round(se, 4).tolist()} (8 replicates)")


def test_criterion_05_stress_bound(criterion, equilibration_run, agreement_run):
    flags = {**equilibration_run["assertions"], **{f"c4_{k}": v for k, v in agreement_run["assertions"].items()}}
    cfg = load_config(CONFIGS / "coupled.yaml")
    res = coupled_iteration(cfg)
    bound = stress_bound(cfg.chain, cfg.domain)
    worst = max(h["K_max"] for h in res.history)
    ok = all(flags.values()) and all(h["K_ok"] for h in res.history)
    criterion(5, ok, f"symmetric, PSD and |K|_F <= {bound:g} in every emitted field "
                     f"({len(flags)} sweep checks, {len(res.history)} coupled exchanges, max {worst:.3f})")


def test_criterion_06_kramers_closure(criterion):
    worst_q = 0.0
    for J, d in [(1, 1), (1, 2), (2, 1), (2, 2)]:
        beta, H = 0.7, 1.3
        half = 3.0 * math.sqrt(beta)                    # D covers ±6√β
        D = ConfigurationDomain(ConvexDomain.box([-half] * d, [half] * d))
        K = kramers_macro(gaussian_psi(beta), gauss_legendre_quadrature(D, J, 24), H=H)[0]
        worst_q = max(worst_q, float(np.abs(K - J * H * beta * np.eye(d)).max() / (J * H * beta)))

    # springs drawn from the truncated Maxwellian on D
    J, d, beta, H = 2, 2, 0.7, 1.3
    half = 3.0 * math.sqrt(beta)
    rng = np.random.default_rng(11)
    q = math.sqrt(beta) * rng.standard_normal((400000, J, d))
    q = q[np.all(np.abs(q) <= 2 * half, axis=(1, 2))][:200000]
    r = np.concatenate([np.zeros((len(q), 1, d)), np.cumsum(q, axis=1)], axis=1)
    r -= r.mean(axis=1, keepdims=True)
    p = ChainParams(J=J, d=d, beta=beta, H=H)
    big = ConvexDomain.box([-50.0] * d, [50.0] * d)
    Ks = kramers_from_ensemble(Ensemble(r=r, v=np.zeros_like(r), seed=0), p, fluid_grid(big, 1))
    z_sample = float(np.max(np.abs(Ks.tensor[0] - J * H * beta * np.eye(d)) / Ks.stderr[0]))

    # chains equilibrated by the overdamped SDE in a box whose walls are never reached
    e = init_ensemble(p, big, 100000, 12, region=(np.full(d, -0.5), np.full(d, 0.5)), velocities="zero")
    e, _ = run_ensemble(e, p, big, 0.001, 4000, mode="overdamped")
    Ke = kramers_from_ensemble(e, p, fluid_grid(big, 1))
    z_sde = float(np.max(np.abs(Ke.tensor[0] - J * H * beta * np.eye(d)) / Ke.stderr[0]))
    criterion(6, worst_q <= 1e-4 and z_sample <= 4 and z_sde <= 4,
              f"quadrature rel err {worst_q:.1e} (tol 1e-4); ensemble deviation {z_sample:.2f} SE "
              f"(sampled), {z_sde:.2f} SE (SDE) (tol 4)")


def test_criterion_07_oseen(criterion):
    rep = oseen_verification()
    ok = rep["rates"][-1] >= 1.8 and rep["max_div"] <= 1e-10 and rep["energy_max_increase"] <= 0.0
    criterion(7, ok, f"MMS rates {np.round(rep['rates'], 3).tolist()} (need >= 1.8 for 32->64); "
                     f"max div {rep['max_div']:.1e}; max energy increase {rep['energy_max_increase']:.1e}")


def test_criterion_08_rouse(criterion):
    rouse = identity_verification(n_points=1)["rouse"]
    ok = all(r["exact"] for r in rouse) and all(r["eig_err"] <= 1e-12 for r in rouse)
    criterion(8, ok, f"closed form exact for J<=8; max eigenvalue error {max(r['eig_err'] for r in rouse):.1e}")


def test_criterion_09_operator_identity(criterion):
    ident = identity_verification(n_points=5)["identity"]
    worst = max(r["max_err"] for r in ident)
    criterion(9, worst <= 1e-6, f"max discrepancy {worst:.1e} over J in 1..3, d in 1..2 (tol 1e-6)")


def test_criterion_10_centre_of_mass_reduction(criterion):
    res = [centre_reduction_check(J, d) for J, d in [(1, 1), (1, 2), (2, 1)]]
    worst = max(r["max_err"] for r in res)
    criterion(10, worst <= 1e-6, f"max |q-integrated rhs - centre operator| {worst:.1e} (tol 1e-6)")


def test_criterion_11_entropy_monotone(criterion):
    grid = fp.PhaseGrid(LINE, 24, 32, 6.0, 1.0)
    op = fp.assemble_fp_operator(grid, 0.5)
    n = math.ceil(1.0 / (2 * 0.9 * op.stability_bound()))
    _, hist = fp.run_fp(_left_field(grid, 0.5), op, 1.0 / n, n, record_every=1)
    G = np.array([h["gibbs_entropy"] for h in hist])
    excess = float(np.max(np.diff(G) - 1e-12 * np.abs(G[:-1])))
    criterion(11, excess <= 0.0, f"{n} steps, entropy {G[0]:.3f} -> {G[-1]:.4f}, "
                                 f"largest increment beyond budget {excess:.1e}")
