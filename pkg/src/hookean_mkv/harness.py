"""Experiment orchestration: scenarios, micro-macro coupling and reports.

Every scenario writes into its output directory

* ``manifest.json``: configuration echo, ``git describe``, seed, backend;
* scenario outputs (CSV diagnostics, binary field dumps);
* ``summary.json``: headline numbers plus an ``assertions`` map.

A run succeeds iff every entry of ``assertions`` is true.
"""
from __future__ import annotations

import json
import logging
import math
import subprocess
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, _accel
from . import io as hio
from .chain_dynamics import (BinGrid, ChainParams, Ensemble, empirical_moments, init_ensemble,
                             run_ensemble, step_kinetic, step_overdamped)
from .config import SimConfig
from .errors import ConfigError, GridMismatch, HookeanMKVError
from .fokker_planck import (PhaseGrid, assemble_fp_operator, check_energy_inequality, field_from_eta,
                            gibbs_field, run_fp, spatial_marginal)
from .geometry import ConvexDomain
from .macro_limit import (EtaGrid, XQGrid, build_rouse, classical_fp_rhs, ensemble_metrics, gibbs_eta,
                          operator_identity_check, q_integral, run_eta, uniform_eta, x_transport_rhs,
                          space_time_metrics)
from .oseen import (DIV_TOL, FlowGrid, FlowParams, OseenSolver, VelocityField, initial_field, mms_error,
                    oseen_step, run_flow, sample_velocity)
from .stress import fluid_grid, kramers_from_ensemble, stress_bound

log = logging.getLogger(__name__)

MASS_TOL = 1e-10


def entropy_budget(e):
    """Round-off allowance for one entropy increment: relative ``1e-12``
    plus an absolute floor for states already at equilibrium."""
    return 1e-12 * np.abs(e) + 1e-14


class RunFailed(HookeanMKVError):
    """An in-run assertion failed; the summary has been written."""


# -- shared plumbing -------------------------------------------------------------------

def git_describe() -> str:
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, timeout=10, cwd=Path(__file__).resolve().parent)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return res.stdout.strip() or "unknown"


def write_manifest(out: Path, cfg: SimConfig, command: str) -> Path:
    return hio.write_json(out / "manifest.json", {
        "command": command,
        "config": cfg.to_dict(),
        "git_describe": git_describe(),
        "seed": cfg.seed,
        "package_version": __version__,
        "backend": _accel.BACKEND,
    })


def _region(region, domain: ConvexDomain):
    """Config region ``[[lo, hi], ...]`` in physical coordinates to the
    centred frame used internally."""
    if region is None:
        return None
    arr = np.asarray(region, dtype=float)
    if arr.shape != (domain.dim, 2):
        raise ConfigError("init_region", f"expected {domain.dim} [lo, hi] pairs")
    return arr[:, 0] - domain.shift, arr[:, 1] - domain.shift


def _n_steps(T: float, dt: float) -> int:
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ConfigError("dt", f"dt={dt:g} does not divide T={T:g}")
    return n


def _eps_tag(eps: float) -> str:
    return format(eps, "g").replace(".", "p")


# -- kinetic -------------------------------------------------------------------------------

def simulate_kinetic(cfg: SimConfig, out: Path) -> dict:
    """SDE ensembles over the ε sweep with equilibration metrics against ``η``."""
    seed = cfg.require_seed()
    dom = cfg.domain
    kc = cfg.kinetic
    region = _region(kc.init_region, dom)
    steps = _n_steps(kc.T, kc.dt)
    every = kc.record_every or max(steps, 1)
    rec_idx = list(range(0, steps + 1, every))
    rec_t = [i * kc.dt for i in rec_idx]
    assertions: dict[str, bool] = {}
    per_eps: dict[str, dict] = {}
    for eps in cfg.eps_values:
        params = replace(cfg.chain, eps=eps)
        bins = BinGrid.for_chains(dom, params, kc.n_bins)
        eta_snaps = _eta_reference(cfg, params, region, rec_t)
        fgrid = fluid_grid(dom, kc.n_bins)
        bound = stress_bound(params, dom)
        finals, avgs, rows, moms, stresses = [], [], [], [], []
        stress_ok = True
        marginal = None
        for rep in range(cfg.replicates):
            ens = init_ensemble(params, dom, kc.N, seed + rep, region, kc.velocities)
            series = []

            def cb(e: Ensemble, rep=rep, series=series):
                nonlocal stress_ok
                k = len(series)
                eta = eta_snaps[k] if eta_snaps is not None else None
                m = ensemble_metrics(e, params, bins, eta)
                series.append(m)
                rows.append({"replicate": rep, **m.as_dict()})
                K = kramers_from_ensemble(e, params, fgrid)
                chk = K.check_invariants(bound)
                stress_ok &= chk["symmetric"] and chk["psd"] and chk["within_bound"]
                if rep == 0:
                    moms.append(empirical_moments(e, params, bins))
                    stresses.append(K)
            final, snaps = run_ensemble(ens, params, dom, kc.dt, steps, mode=kc.mode, record_every=every,
                                        callback=cb, max_reflections=kc.max_reflections)
            if rep == 0:
                counts = np.bincount(bins.index(final.r.reshape(final.N, -1)), minlength=int(np.prod(bins.shape)))
                marginal = (counts / final.N).reshape(bins.shape)
                if kc.write_snapshots:
                    hio.write_snapshots_csv(out / f"snapshots_eps{_eps_tag(eps)}.csv", snaps or [final])
            finals.append(series[-1])
            avgs.append(space_time_metrics(series[1:] if len(series) > 1 else series))
        tag = _eps_tag(eps)
        hio.write_records_csv(out / f"metrics_eps{tag}.csv", rows)
        hio.write_moments_csv(out / f"moments_eps{tag}.csv", moms)
        hio.write_stress_csv(out / f"stress_eps{tag}.csv", stresses)
        hio.write_field(out / f"marginal_eps{tag}.fld", marginal, kind="bead_histogram",
                        lo=bins.lo, hi=bins.hi, n=bins.n, t=kc.T, eps=eps)
        per_eps[format(eps, "g")] = {
            "final": _mean_std([m.as_dict() for m in finals]),
            "space_time": _mean_std([m.as_dict() for m in avgs]),
            "replicates": cfg.replicates,
        }
        assertions[f"stress_bound_eps{tag}"] = bool(stress_ok)
    hio.write_json(out / "metrics.json", per_eps)
    return {"scenario": "kinetic", "eps": per_eps, "assertions": assertions}


def _eta_reference(cfg: SimConfig, params: ChainParams, region, times):
    """``η`` snapshots at ``times`` for the kinetic initial datum, or None if
    the bead-space grid would be too large."""
    dom = cfg.domain
    n = cfg.macro.n
    ndim = params.n_beads * params.d
    if dom.kind != "box" or n ** ndim > 2_000_000 or n % cfg.kinetic.n_bins:
        return None
    grid = EtaGrid.from_domain(dom, params.J, n)
    eta0 = uniform_eta(grid, region)
    _, snaps = run_eta(eta0, params.beta, max(times), dt=cfg.macro.dt, record_times=times)
    if times and times[0] == 0.0:
        snaps = [eta0] + snaps
    return snaps


def _mean_std(dicts: list[dict]) -> dict:
    keys = dicts[0].keys()
    out = {}
    for k in keys:
        vals = np.array([d[k] for d in dicts], dtype=float)
        out[k] = float(vals.mean())
        out[k + "_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    return out


# -- kinetic Fokker-Planck ----------------------------------------------------------------

def _fp_initial(cfg: SimConfig, grid: PhaseGrid, eps: float):
    fc = cfg.fp
    if fc.init == "gibbs":
        return gibbs_field(grid, eps)
    eg = EtaGrid.from_domain(cfg.domain, 1, grid.n_r)
    region = _region(fc.init_region, cfg.domain) if fc.init == "region" else None
    if fc.init == "region" and region is None:
        raise ConfigError("fp.init_region", "required when fp.init is 'region'")
    return field_from_eta(grid, uniform_eta(eg, region).values, eps)


def simulate_fp(cfg: SimConfig, out: Path) -> dict:
    """Deterministic phase-space run (J=1, d=1) with entropy diagnostics."""
    if cfg.chain.J != 1 or cfg.chain.d != 1:
        raise ConfigError("chain", "the phase-space solver supports J=1, d=1 only")
    fc = cfg.fp
    grid = PhaseGrid(cfg.domain, fc.n_r, fc.n_v, fc.v_max, cfg.chain.beta)
    assertions: dict[str, bool] = {}
    per_eps = {}
    for eps in cfg.eps_values:
        tag = _eps_tag(eps)
        f0 = _fp_initial(cfg, grid, eps)
        op = assemble_fp_operator(grid, eps, None, fc.alpha)
        dt = fc.dt if fc.dt is not None else 2 * 0.9 * op.stability_bound()
        hio.write_field(out / f"rho_hat_initial_eps{tag}.fld", f0.rho_hat, **_fp_header(grid, eps, f0.t))
        final, hist = run_fp(f0, op, dt, fc.n_steps, fc.record_every or max(fc.n_steps, 1))
        if not hist or hist[-1]["t"] != final.t:
            hist.append(_fp_record(final, op))
        hio.write_records_csv(out / f"fp_diagnostics_eps{tag}.csv", hist)
        hio.write_field(out / f"rho_hat_final_eps{tag}.fld", final.rho_hat, **_fp_header(grid, eps, final.t))
        hio.write_field(out / f"marginal_eps{tag}.fld", spatial_marginal(final), kind="bead_histogram",
                        lo=[grid.lo, grid.lo], hi=[grid.hi, grid.hi], n=grid.n_r, t=final.t, eps=eps)
        energy = check_energy_inequality(hist, grid, eps)
        mass_err = max(abs(h["mass"] - 1.0) for h in hist)
        ge = np.array([h["gibbs_entropy"] for h in hist])
        incr = float(np.max(np.diff(ge) - entropy_budget(ge[:-1]))) if len(ge) > 1 else 0.0
        assertions[f"mass_eps{tag}"] = mass_err <= MASS_TOL
        assertions[f"energy_inequality_eps{tag}"] = energy["holds"]
        assertions[f"gibbs_entropy_monotone_eps{tag}"] = incr <= 0.0
        per_eps[format(eps, "g")] = {"dt": dt, "n_steps": fc.n_steps, "mass_error": mass_err,
                                     "final_entropy": hist[-1]["entropy"],
                                     "final_gibbs_entropy": hist[-1]["gibbs_entropy"],
                                     "energy_constant": energy["constant"],
                                     "min_rho_hat": min(h["min_rho_hat"] for h in hist)}
    return {"scenario": "fp", "eps": per_eps, "assertions": assertions}


def _fp_header(grid: PhaseGrid, eps: float, t: float) -> dict:
    return {"kind": "rho_hat", "axes": ["r1", "r2", "v1", "v2"], "h_r": grid.h_r, "h_v": grid.h_v,
            "lo": grid.lo, "hi": grid.hi, "v_max": grid.v_max, "beta": grid.beta, "eps": eps, "t": t}


def _fp_record(f, op) -> dict:
    from .fokker_planck import fisher_dissipation, gibbs_relative_entropy, relative_entropy

    return {"t": f.t, "mass": f.mass, "entropy": relative_entropy(f), "gibbs_entropy": gibbs_relative_entropy(f),
            "dissipation": fisher_dissipation(f), "u_sup": op.u_sup, "min_rho_hat": float(f.rho_hat.min())}


# -- limit equation -------------------------------------------------------------------------

def simulate_macro(cfg: SimConfig, out: Path) -> dict:
    """Bead-space limit equation with zero-flux walls."""
    mc = cfg.macro
    params = cfg.chain
    grid = EtaGrid.from_domain(cfg.domain, params.J, mc.n)
    if mc.init == "gibbs":
        eta0 = gibbs_eta(grid, params.beta)
    else:
        region = _region(mc.init_region, cfg.domain) if mc.init == "region" else None
        if mc.init == "region" and region is None:
            raise ConfigError("macro.init_region", "required when macro.init is 'region'")
        eta0 = uniform_eta(grid, region)
    gibbs = gibbs_eta(grid, params.beta)
    times = [mc.T * k / 10 for k in range(1, 11)] if mc.T > 0 else []
    hio.write_field(out / "eta_initial.fld", eta0.values, kind="eta", lo=grid.lo, hi=grid.hi, n=grid.n, t=0.0)
    final, snaps = run_eta(eta0, params.beta, mc.T, dt=mc.dt, record_times=times)
    rows = [{"t": s.t, "mass": s.mass, "min_eta": float(s.values.min()),
             "gibbs_l1": float(np.abs(s.values - gibbs.values).sum() * grid.cell_volume)} for s in [eta0] + snaps]
    hio.write_records_csv(out / "eta_diagnostics.csv", rows)
    hio.write_field(out / "eta_final.fld", final.values, kind="eta", lo=grid.lo, hi=grid.hi, n=grid.n, t=final.t)
    hio.write_field(out / "marginal.fld", final.coarsen(1), kind="bead_histogram", lo=grid.lo, hi=grid.hi,
                    n=grid.n, t=final.t)
    mass_err = max(abs(r["mass"] - 1.0) for r in rows)
    return {"scenario": "macro", "mass_error": mass_err, "final_gibbs_l1": rows[-1]["gibbs_l1"],
            "assertions": {"mass": mass_err <= MASS_TOL, "nonnegative": min(r["min_eta"] for r in rows) >= 0.0}}


# -- coupled micro-macro ---------------------------------------------------------------

@dataclass
class CoupledResult:
    u: VelocityField
    ensemble: Ensemble
    history: list[dict]
    stresses: list
    flows: list[VelocityField]


def coupled_iteration(cfg: SimConfig, stress_override: Callable | None = None) -> CoupledResult:
    """Alternate chain (SDE) steps with Oseen steps driven by the Kramers stress.

    Starting from ``u = 0``, every ``coupling.interval`` micro steps the
    stress is recomputed from the ensemble and, in staggered mode, the flow
    advances one step of length ``interval · dt``. In one-way mode the flow
    stays frozen. ``stress_override(K)`` may replace the stress tensor array
    before it drives the flow (used to decouple the two solvers).
    """
    seed = cfg.require_seed()
    dom = cfg.domain
    params = cfg.chain
    if dom.kind != "box" or dom.dim != 2 or params.d != 2:
        raise ConfigError("domain", "coupled runs need a two-dimensional box and chain.d = 2")
    kc, fl, cp = cfg.kinetic, cfg.flow, cfg.coupling
    fgrid = FlowGrid(dom, fl.grid_n)
    bins = fluid_grid(dom, fl.grid_n)
    fparams = FlowParams.from_config({"mu": fl.mu, "b_kind": fl.b_kind, "b_amplitude": fl.b_amplitude}, fgrid)
    dt_flow = cp.interval * kc.dt
    solver = OseenSolver(fgrid, fparams, dt_flow)
    u = initial_field(fgrid, fparams)
    ens = init_ensemble(params, dom, kc.N, seed, _region(kc.init_region, dom), kc.velocities)
    bound = stress_bound(params, dom)
    stepper = step_kinetic if kc.mode == "kinetic" else step_overdamped
    n_ex = _n_steps(cp.T, dt_flow)
    history, stresses, flows = [], [], [u]
    for k in range(n_ex + 1):
        K = kramers_from_ensemble(ens, params, bins, fl.n_density)
        chk = K.check_invariants(bound)
        stresses.append(K)
        history.append({"t": ens.t, "energy": u.energy(), "max_div": float(np.abs(u.divergence()).max()),
                        "u_max": u.max_abs(), "K_max": chk["max_frobenius"], "K_bound": bound,
                        "K_ok": bool(chk["symmetric"] and chk["psd"] and chk["within_bound"])})
        if k == n_ex:
            break
        frozen = u

        def sampler(x, t, frozen=frozen):
            return sample_velocity(frozen, x)
        for _ in range(cp.interval):
            ens = stepper(ens, params, dom, kc.dt, sampler, max_reflections=kc.max_reflections)
        if cp.mode == "staggered":
            tensor = K.tensor if stress_override is None else stress_override(K.tensor)
            u = oseen_step(u, fparams, dt_flow, stress=tensor, solver=solver)
            flows.append(u)
    return CoupledResult(u, ens, history, stresses, flows)


def simulate_coupled(cfg: SimConfig, out: Path) -> dict:
    res = coupled_iteration(cfg)
    hio.write_records_csv(out / "coupled_history.csv", res.history)
    hio.write_stress_csv(out / "stress.csv", res.stresses)
    hio.write_flow_csv(out / "flow.csv", res.flows[-1:])
    hio.write_field(out / "ux_final.fld", res.u.ux, kind="ux", t=res.u.t)
    hio.write_field(out / "uy_final.fld", res.u.uy, kind="uy", t=res.u.t)
    return {"scenario": "coupled", "n_exchanges": len(res.history) - 1,
            "final_energy": res.u.energy(), "max_K": max(h["K_max"] for h in res.history),
            "K_bound": res.history[0]["K_bound"],
            "assertions": {"stress_bound": all(h["K_ok"] for h in res.history),
                           "divergence": all(h["max_div"] <= DIV_TOL for h in res.history)}}


# -- verification scenarios -----------------------------------------------------------------

def oseen_verification(mu: float = 1.0, sizes=(16, 32, 64), T: float = 0.05) -> dict:
    """Manufactured-solution convergence plus the zero-source energy check."""
    errs = [mms_error(n, mu=mu, T=T) for n in sizes]
    rates = [math.log2(errs[i]["error"] / errs[i + 1]["error"]) for i in range(len(errs) - 1)]
    grid = FlowGrid(ConvexDomain.box([-0.5, -0.5], [0.5, 0.5]), 32)
    fp = FlowParams.from_config({"mu": 0.01, "b_kind": "cellular"}, grid)
    fp.u0 = lambda x, t: np.stack([np.sin(3 * x[:, 1]) + x[:, 0] ** 2, np.cos(2 * x[:, 0]) * x[:, 1]], -1)
    _, hist = run_flow(grid, fp, 0.005, 200, record_every=1)
    E = np.array([h["energy"] for h in hist])
    return {"mms": errs, "rates": rates, "max_div": max(max(e["max_div"] for e in errs), max(h["max_div"] for h in hist)),
            "energy_max_increase": float(np.diff(E).max()), "energy_initial": float(E[0]), "energy_final": float(E[-1])}


def verify_oseen(cfg: SimConfig, out: Path) -> dict:
    rep = oseen_verification()
    hio.write_json(out / "oseen_verification.json", rep)
    return {"scenario": "verify-oseen", "rates": rep["rates"], "max_div": rep["max_div"],
            "assertions": {"rate": rep["rates"][-1] >= 1.8, "divergence": rep["max_div"] <= DIV_TOL,
                           "energy": rep["energy_max_increase"] <= 0.0}}


def _poly_test(J: int, d: int):
    rng = np.random.default_rng(J * 10 + d)
    A = rng.standard_normal(((J + 1) * d, (J + 1) * d))
    b = rng.standard_normal((J + 1) * d)

    def f(r):
        z = np.asarray(r).ravel()
        return float(z @ A @ z + b @ z + z[0] ** 3 - 0.5 * z[-1] * z[0] ** 2)
    return f


def identity_verification(n_points: int = 5) -> dict:
    rouse = []
    for J in range(1, 9):
        rs = build_rouse(J)
        closed = 2 * np.eye(J) - np.eye(J, k=1) - np.eye(J, k=-1)
        ev = np.sort(np.linalg.eigvalsh(rs.R))
        rouse.append({"J": J, "exact": bool(np.array_equal(rs.R, closed)),
                      "eig_err": float(np.abs(ev - np.sort(rs.eigenvalues)).max())})
    ident = []
    for J in (1, 2, 3):
        for d in (1, 2):
            pts = np.random.default_rng(100 + J * 10 + d).uniform(-0.8, 0.8, (n_points, J + 1, d))
            res = operator_identity_check(J, d, _poly_test(J, d), pts, h=1e-3)
            ident.append({"J": J, "d": d, "max_err": res["max_err"]})
    red = centre_reduction_check()
    return {"rouse": rouse, "identity": ident, "centre_reduction": red}


def centre_reduction_check(J: int = 1, d: int = 1, n_x: int = 16, n_q: int = 24, beta: float = 1.0) -> dict:
    """``∫ classical_fp_rhs dq`` against the centre-of-mass operator on ``∫ψ dq``."""
    dom = ConvexDomain.box([-1.0] * d, [1.0] * d)
    grid = XQGrid.from_domain(dom, J, n_x, n_q)
    x, q = grid.mesh()
    psi = (1 + 0.3 * np.cos(np.pi * x.sum(-1))) * np.exp(-np.sum(q ** 2, axis=(-2, -1)) / 2) \
        * (1 + 0.2 * np.sin(q.sum(axis=(-2, -1))))

    def u(p, t):
        return np.stack([0.4 * np.sin(np.pi * p[:, 0] / 2) ** 2] + [0.1 * np.ones(len(p))] * (d - 1), -1)

    def grad_u(p, t):
        g = np.zeros((len(p), d, d))
        g[:, 0, 0] = 0.4 * np.pi * np.sin(np.pi * p[:, 0] / 2) * np.cos(np.pi * p[:, 0] / 2)
        return g
    lhs = q_integral(classical_fp_rhs(psi, grid, beta, u, grad_u), grid)
    rhs = x_transport_rhs(q_integral(psi, grid), grid, beta, u)
    err = float(np.abs(lhs - rhs).max())
    return {"J": J, "d": d, "max_err": err, "scale": float(np.abs(rhs).max())}


def verify_identities(cfg: SimConfig, out: Path) -> dict:
    rep = identity_verification()
    hio.write_json(out / "identities.json", rep)
    return {"scenario": "verify-identities",
            "assertions": {"rouse_exact": all(r["exact"] for r in rep["rouse"]),
                           "rouse_eigenvalues": all(r["eig_err"] <= 1e-12 for r in rep["rouse"]),
                           "operator_identity": all(r["max_err"] <= 1e-6 for r in rep["identity"]),
                           "centre_reduction": rep["centre_reduction"]["max_err"] <= 1e-6}}


# -- comparison and reports -----------------------------------------------------------------

def _load_marginals(run: Path) -> dict[str, tuple[np.ndarray, dict]]:
    if not run.is_dir():
        raise FileNotFoundError(f"{run}: run directory does not exist")
    for name in ("manifest.json", "summary.json"):
        if not (run / name).is_file():
            raise FileNotFoundError(f"{run}: missing {name}")
    found = {}
    for p in sorted(run.glob("marginal*.fld")):
        found[p.stem] = hio.read_field(p)
    if not found:
        raise FileNotFoundError(f"{run}: missing marginal*.fld")
    return found


def _to_common(a: np.ndarray, ha: dict, b: np.ndarray, hb: dict) -> tuple[np.ndarray, np.ndarray]:
    if a.ndim != b.ndim or not (np.allclose(np.ravel(ha["lo"]), np.ravel(hb["lo"]))
                                and np.allclose(np.ravel(ha["hi"]), np.ravel(hb["hi"]))):
        raise GridMismatch("marginals cover different boxes")
    na, nb = a.shape[0], b.shape[0]
    n = math.gcd(na, nb)
    if n != min(na, nb):
        raise GridMismatch(f"grids with {na} and {nb} cells per axis are not nested")
    return _coarsen(a, na // n), _coarsen(b, nb // n)


def _coarsen(p: np.ndarray, f: int) -> np.ndarray:
    if f == 1:
        return p
    shp = []
    for s in p.shape:
        shp += [s // f, f]
    return p.reshape(shp).sum(axis=tuple(range(1, 2 * p.ndim, 2)))


def compare_report(runs, out: Path | None = None) -> dict:
    """Pairwise ``L¹`` distances between matching spatial marginals of runs,
    plus the assertion flags each run recorded.

    Raises
    ------
    GridMismatch
        If compared marginals live on incompatible grids.
    FileNotFoundError
        If a run directory lacks its manifest, summary or marginals.
    """
    runs = [Path(r) for r in runs]
    data = {str(r): _load_marginals(r) for r in runs}
    flags = {str(r): json.loads((r / "summary.json").read_text()).get("assertions", {}) for r in runs}
    pairs = []
    keys = list(data)
    for i in range(len(keys)):
        for j in range(i + 1, len(keys)):
            fa, fb = data[keys[i]], data[keys[j]]
            matched = [(c, c) for c in sorted(set(fa) & set(fb))]
            if not matched and (len(fa) == 1 or len(fb) == 1):
                matched = [(a, b) for a in fa for b in fb]
            for ka, kb in matched:
                (a, ha), (b, hb) = data[keys[i]][ka], data[keys[j]][kb]
                pa, pb = _to_common(a, ha, b, hb)
                pairs.append({"a": keys[i], "b": keys[j], "field_a": ka, "field_b": kb,
                              "cells_per_axis": pa.shape[0], "l1": float(np.abs(pa - pb).sum())})
    rep = {"pairs": pairs, "assertions": flags,
           "all_passed": all(all(v.values()) for v in flags.values())}
    if out is not None:
        hio.write_json(out / "compare.json", rep)
        hio.write_records_csv(out / "compare.csv", pairs, ["a", "b", "field_a", "field_b", "cells_per_axis", "l1"])
    return rep


def report(run_dirs, out: Path | None = None) -> dict:
    """Collect ``summary.json`` files (searched recursively) into one report."""
    summaries = {}
    for d in run_dirs:
        for p in sorted(Path(d).rglob("summary.json")):
            summaries[str(p.parent)] = json.loads(p.read_text())
    if not summaries:
        raise FileNotFoundError(f"no summary.json under {', '.join(map(str, run_dirs))}")
    rep = {"runs": summaries,
           "all_passed": all(all(s.get("assertions", {}).values()) for s in summaries.values())}
    if out is not None:
        hio.write_json(out / "report.json", rep)
    return rep


SCENARIOS: dict[str, Callable[[SimConfig, Path], dict]] = {
    "simulate-kinetic": simulate_kinetic,
    "simulate-fp": simulate_fp,
    "simulate-macro": simulate_macro,
    "simulate-coupled": simulate_coupled,
    "verify-oseen": verify_oseen,
    "verify-identities": verify_identities,
}


def run_scenario(cfg: SimConfig, command: str, out=None) -> dict:
    """Run ``command`` for ``cfg`` and write manifest, outputs and summary.

    Raises
    ------
    RunFailed
        If any in-run assertion is false (outputs are still written).
    """
    if command not in SCENARIOS:
        raise ConfigError("scenario", f"unknown scenario {command!r}")
    out = Path(out or cfg.out or f"runs/{command}")
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, cfg, command)
    log.info("running %s into %s", command, out)
    summary = SCENARIOS[command](cfg, out)
    summary["passed"] = all(summary.get("assertions", {}).values())
    hio.write_json(out / "summary.json", summary)
    if not summary["passed"]:
        bad = [k for k, v in summary["assertions"].items() if not v]
        raise RunFailed(f"in-run assertions failed: {', '.join(bad)}")
    return summary
