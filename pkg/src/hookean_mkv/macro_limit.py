"""Small-mass limit: the bead-space Smoluchowski problem and its reductions.

The limit density ``η(r, t)`` on ``Ω^{J+1}`` solves

    ∂t η = Σ_j ∇_{r_j} · (β ∇_{r_j} η - η ((𝓛r)_j + u(r_j)))

with zero normal flux on ``∂(Ω^{J+1})``. In centre-of-mass and spring
coordinates ``x = mean(r)``, ``q_j = r_{j+1} - r_j`` the bead Laplacian
splits as ``∂_qᵀ 𝓡 ∂_q + (J+1)⁻¹ Δ_x`` with the Rouse matrix ``𝓡 = 𝓑ᵀ𝓑``,
which yields the classical configuration-space equation for ``ψ(x, q)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .chain_dynamics import BinGrid, ChainParams, Ensemble, VelocitySampler
from .errors import GridMismatch, StabilityViolation
from .geometry import ConfigurationDomain, ConvexDomain


# -- Rouse structure ---------------------------------------------------------------

@dataclass(frozen=True)
class RouseStructure:
    """Incidence matrix ``𝓑`` and Rouse matrix ``𝓡 = 𝓑ᵀ𝓑`` (scalar blocks).

    Column ``j`` of ``𝓑`` has ``-1`` in row ``j`` and ``+1`` in row ``j+1``,
    so ``q = 𝓑ᵀ r``. Block versions act on ``R^d`` components via
    ``kron(·, I_d)``.
    """

    J: int
    B: NDArray[np.float64]
    R: NDArray[np.float64]
    eigenvalues: NDArray[np.float64]

    def block(self, d: int) -> tuple[NDArray, NDArray]:
        I = np.eye(d)
        return np.kron(self.B, I), np.kron(self.R, I)


def build_rouse(J: int) -> RouseStructure:
    """Assemble ``𝓑`` ((J+1)×J), ``𝓡`` (J×J) and the exact Rouse eigenvalues
    ``4 sin²(kπ / (2(J+1)))``, ``k = 1..J``."""
    if J < 1:
        raise ValueError("J must be >= 1")
    B = np.zeros((J + 1, J))
    for j in range(J):
        B[j, j] = -1.0
        B[j + 1, j] = 1.0
    R = B.T @ B
    k = np.arange(1, J + 1)
    lam = 4.0 * np.sin(k * np.pi / (2.0 * (J + 1))) ** 2
    return RouseStructure(J, B, R, lam)


def change_of_variables(r) -> tuple[NDArray, NDArray]:
    """Bead positions ``(..., J+1, d)`` to springs ``(..., J, d)`` and centre ``(..., d)``."""
    r = np.asarray(r, dtype=float)
    return np.diff(r, axis=-2), r.mean(axis=-2)


def inverse_change_of_variables(q, x) -> NDArray[np.float64]:
    """Bead positions from springs and centre of mass, the map ``B(q, x)``."""
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    J = q.shape[-2]
    rel = np.concatenate([np.zeros(q.shape[:-2] + (1, q.shape[-1])), np.cumsum(q, axis=-2)], axis=-2)
    r1 = x - rel.sum(axis=-2) / (J + 1)
    return r1[..., None, :] + rel


# -- Maxwellian in configuration space ------------------------------------------

@dataclass(frozen=True)
class ConfigMaxwellian:
    """``𝔐(q) = (2πβ)^{-Jd/2} exp(-|q|²/(2β))`` for ``q ∈ R^{Jd}``."""

    J: int
    d: int
    beta: float = 1.0

    def __call__(self, q) -> NDArray[np.float64]:
        """Evaluate at springs of shape ``(..., J, d)``."""
        q = np.asarray(q, dtype=float)
        n = self.J * self.d
        s = np.sum(q ** 2, axis=(-2, -1))
        return (2 * np.pi * self.beta) ** (-n / 2) * np.exp(-s / (2 * self.beta))


def spring_potential(r) -> NDArray[np.float64]:
    """``V(r) = ½ Σ_j |r_{j+1} - r_j|²`` for ``r`` of shape ``(..., J+1, d)``."""
    q = np.diff(np.asarray(r, dtype=float), axis=-2)
    return 0.5 * np.sum(q ** 2, axis=(-2, -1))


# -- bead-space grid and density ---------------------------------------------------

@dataclass(frozen=True)
class EtaGrid:
    """Uniform cell grid on the box ``Ω^{J+1}``; axis ``a`` is bead ``a // d``,
    component ``a % d``."""

    J: int
    d: int
    lo: NDArray[np.float64]
    hi: NDArray[np.float64]
    n: int

    @classmethod
    def from_domain(cls, domain: ConvexDomain, J: int, n: int) -> "EtaGrid":
        if domain.kind != "box":
            raise ValueError("the bead-space grid needs a box domain")
        return cls(J, domain.dim, np.tile(domain.lo, J + 1), np.tile(domain.hi, J + 1), int(n))

    @property
    def ndim(self) -> int:
        return (self.J + 1) * self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.ndim

    @property
    def h(self) -> NDArray[np.float64]:
        return (self.hi - self.lo) / self.n

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def centers_1d(self, axis: int) -> NDArray[np.float64]:
        return self.lo[axis] + self.h[axis] * (np.arange(self.n) + 0.5)

    def centers(self) -> NDArray[np.float64]:
        """Cell centres as bead configurations, shape ``shape + (J+1, d)``."""
        mesh = np.meshgrid(*[self.centers_1d(a) for a in range(self.ndim)], indexing="ij")
        return np.stack(mesh, axis=-1).reshape(self.shape + (self.J + 1, self.d))

    def bin_grid(self, factor: int = 1) -> BinGrid:
        if self.n % factor:
            raise GridMismatch(f"coarsening factor {factor} does not divide n={self.n}")
        return BinGrid(self.lo.copy(), self.hi.copy(), self.n // factor)

    def same_as(self, other: "EtaGrid") -> bool:
        return (self.J == other.J and self.d == other.d and self.n == other.n
                and np.allclose(self.lo, other.lo) and np.allclose(self.hi, other.hi))


@dataclass
class MacroDensity:
    """Cell-averaged limit density ``η`` with ``Σ η · cell_volume = 1``."""

    grid: EtaGrid
    values: NDArray[np.float64]
    t: float = 0.0

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def coarsen(self, factor: int) -> NDArray[np.float64]:
        """Bin probabilities on a grid ``factor`` times coarser."""
        g = self.grid
        if g.n % factor:
            raise GridMismatch(f"coarsening factor {factor} does not divide n={g.n}")
        m = self.values * g.cell_volume
        shp = []
        for _ in range(g.ndim):
            shp += [g.n // factor, factor]
        m = m.reshape(shp)
        return m.sum(axis=tuple(range(1, 2 * g.ndim, 2)))


def uniform_eta(grid: EtaGrid, region: tuple | None = None) -> MacroDensity:
    """Uniform density on ``Ω^{J+1}`` or on ``region^{J+1}`` for a sub-box of ``Ω``.

    Cells straddling the region boundary get the covered fraction.
    """
    if region is None:
        vals = np.full(grid.shape, 1.0)
    else:
        rlo = np.tile(np.asarray(region[0], dtype=float), grid.J + 1)
        rhi = np.tile(np.asarray(region[1], dtype=float), grid.J + 1)
        vals = np.ones(grid.shape)
        for a in range(grid.ndim):
            f = grid.lo[a] + grid.h[a] * np.arange(grid.n + 1)
            frac = np.clip(np.minimum(f[1:], rhi[a]) - np.maximum(f[:-1], rlo[a]), 0, None) / grid.h[a]
            shape = [1] * grid.ndim
            shape[a] = grid.n
            vals = vals * frac.reshape(shape)
    vals = vals / (vals.sum() * grid.cell_volume)
    return MacroDensity(grid, vals, 0.0)


def gibbs_eta(grid: EtaGrid, beta: float) -> MacroDensity:
    """Discrete Gibbs state ``∝ exp(-V(r_c)/β)`` at cell centres."""
    w = np.exp(-spring_potential(grid.centers()) / beta)
    return MacroDensity(grid, w / (w.sum() * grid.cell_volume), 0.0)


def _bernoulli(z: NDArray[np.float64]) -> NDArray[np.float64]:
    """``B(z) = z / (exp(z) - 1)`` with ``B(0) = 1``."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    zs = np.where(small, 1.0, z)
    return np.where(small, 1.0 - 0.5 * z, zs / np.expm1(zs))


def _face_coords(grid: EtaGrid, axis: int) -> NDArray[np.float64]:
    """Bead configurations at interior faces normal to ``axis``."""
    axes = []
    for a in range(grid.ndim):
        c = grid.centers_1d(a)
        if a == axis:
            c = grid.lo[a] + grid.h[a] * np.arange(1, grid.n)
        axes.append(c)
    mesh = np.meshgrid(*axes, indexing="ij")
    shp = mesh[0].shape
    return np.stack(mesh, axis=-1).reshape(shp + (grid.J + 1, grid.d))


@dataclass
class EtaOperator:
    """Precomputed Péclet numbers on interior faces for each axis."""

    grid: EtaGrid
    beta: float
    peclet: list[NDArray[np.float64]] = field(default_factory=list)
    t: float = 0.0


def assemble_eta_operator(grid: EtaGrid, beta: float, u: VelocitySampler | None = None,
                          t: float = 0.0, drift: bool = True) -> EtaOperator:
    """Face Péclet numbers ``Pe = h·a/β`` with drift ``a = (𝓛r)_j + u(r_j)``.

    The spring part uses potential differences, ``h·(𝓛r)_j ≈ -(V_R - V_L)``,
    which is exact for the quadratic spring potential and keeps the discrete
    Gibbs state stationary to round-off.
    """
    op = EtaOperator(grid, beta, t=t)
    for a in range(grid.ndim):
        j, k = divmod(a, grid.d)
        h = grid.h[a]
        if not drift:
            shape = list(grid.shape)
            shape[a] -= 1
            op.peclet.append(np.zeros(shape))
            continue
        sl_l = [slice(None)] * grid.ndim
        sl_r = [slice(None)] * grid.ndim
        sl_l[a] = slice(0, -1)
        sl_r[a] = slice(1, None)
        V = spring_potential(grid.centers())
        pe = -(V[tuple(sl_r)] - V[tuple(sl_l)]) / beta
        if u is not None:
            fc = _face_coords(grid, a)
            pts = fc[..., j, :].reshape(-1, grid.d)
            uk = np.asarray(u(pts, t), dtype=float)[:, k].reshape(fc.shape[:-2])
            pe = pe + h * uk / beta
        op.peclet.append(pe)
    return op


def eta_stability_bound(op: EtaOperator) -> float:
    """Largest explicit time step keeping the update monotone."""
    g = op.grid
    rate = np.zeros(g.shape)
    for a, pe in enumerate(op.peclet):
        c = op.beta / g.h[a] ** 2
        sl_l = [slice(None)] * g.ndim
        sl_r = [slice(None)] * g.ndim
        sl_l[a] = slice(0, -1)
        sl_r[a] = slice(1, None)
        rate[tuple(sl_l)] += c * _bernoulli(-pe)
        rate[tuple(sl_r)] += c * _bernoulli(pe)
    return float(1.0 / rate.max())


def eta_rhs(values: NDArray[np.float64], op: EtaOperator) -> NDArray[np.float64]:
    """Conservative finite-volume ``∂t η`` with Scharfetter-Gummel fluxes."""
    g = op.grid
    out = np.zeros_like(values)
    for a, pe in enumerate(op.peclet):
        h = g.h[a]
        sl_l = [slice(None)] * g.ndim
        sl_r = [slice(None)] * g.ndim
        sl_l[a] = slice(0, -1)
        sl_r[a] = slice(1, None)
        sl_l, sl_r = tuple(sl_l), tuple(sl_r)
        flux = (op.beta / h) * (_bernoulli(-pe) * values[sl_l] - _bernoulli(pe) * values[sl_r])
        out[sl_l] -= flux / h
        out[sl_r] += flux / h
    return out


def step_eta(eta: MacroDensity, op: EtaOperator, dt: float) -> MacroDensity:
    """One explicit Euler step of the limit equation with zero-flux walls.

    Raises
    ------
    StabilityViolation
        If ``dt`` exceeds the monotonicity bound.
    """
    bound = eta_stability_bound(op)
    if dt > bound * (1 + 1e-12):
        raise StabilityViolation(f"dt={dt:g} exceeds the explicit bound {bound:g}")
    return MacroDensity(eta.grid, eta.values + dt * eta_rhs(eta.values, op), eta.t + dt)


def run_eta(eta: MacroDensity, beta: float, T: float, dt: float | None = None,
            u: VelocitySampler | None = None, drift: bool = True,
            time_dependent_u: bool = False, record_times=None) -> tuple[MacroDensity, list[MacroDensity]]:
    """Integrate to time ``T``; ``dt`` defaults to 0.9 of the stability bound.

    ``record_times`` lists times at which to keep snapshots (hit exactly by
    shortening the step before each).
    """
    op = assemble_eta_operator(eta.grid, beta, u, eta.t, drift)
    dt_max = 0.9 * eta_stability_bound(op)
    dt = dt_max if dt is None else dt
    targets = sorted(record_times) if record_times is not None else []
    snaps = []
    cur = eta
    stops = [s for s in targets if s > eta.t + 1e-14] + [T]
    for stop in stops:
        while cur.t < stop - 1e-12:
            if time_dependent_u and u is not None:
                op = assemble_eta_operator(eta.grid, beta, u, cur.t, drift)
            h = min(dt, stop - cur.t)
            cur = step_eta(cur, op, h)
        cur.t = stop
        if stop in targets:
            snaps.append(MacroDensity(cur.grid, cur.values.copy(), cur.t))
    return cur, snaps


# -- classical configuration-space equation ------------------------------------

@dataclass(frozen=True)
class XQGrid:
    """Cell grid on ``Ω × D^J`` (box ``Ω``); ``ψ`` has shape
    ``(n_x,)*d + (n_q,)*(J d)``."""

    J: int
    d: int
    x_lo: NDArray[np.float64]
    x_hi: NDArray[np.float64]
    q_half: NDArray[np.float64]
    n_x: int
    n_q: int

    @classmethod
    def from_domain(cls, domain: ConvexDomain, J: int, n_x: int, n_q: int) -> "XQGrid":
        D = ConfigurationDomain(domain)
        return cls(J, domain.dim, domain.lo.copy(), domain.hi.copy(), D.half_widths.copy(), n_x, n_q)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_x,) * self.d + (self.n_q,) * (self.J * self.d)

    @property
    def hx(self) -> NDArray[np.float64]:
        return (self.x_hi - self.x_lo) / self.n_x

    @property
    def hq(self) -> NDArray[np.float64]:
        return 2.0 * self.q_half / self.n_q

    def x_centers(self, k: int) -> NDArray[np.float64]:
        return self.x_lo[k] + self.hx[k] * (np.arange(self.n_x) + 0.5)

    def q_centers(self, k: int) -> NDArray[np.float64]:
        return -self.q_half[k] + self.hq[k] * (np.arange(self.n_q) + 0.5)

    @property
    def q_cell_volume(self) -> float:
        return float(np.prod(self.hq) ** self.J)

    def mesh(self) -> tuple[NDArray, NDArray]:
        """Centre coordinates: ``x`` with shape ``shape + (d,)`` and ``q``
        with shape ``shape + (J, d)``."""
        axes = [self.x_centers(k) for k in range(self.d)]
        axes += [self.q_centers(k) for _ in range(self.J) for k in range(self.d)]
        m = np.meshgrid(*axes, indexing="ij")
        x = np.stack(m[: self.d], axis=-1)
        q = np.stack(m[self.d:], axis=-1).reshape(self.shape + (self.J, self.d))
        return x, q


def _shift_slices(ndim, axis):
    sl_l = [slice(None)] * ndim
    sl_r = [slice(None)] * ndim
    sl_l[axis] = slice(0, -1)
    sl_r[axis] = slice(1, None)
    return tuple(sl_l), tuple(sl_r)


def _x_face_velocity(grid: XQGrid, u: Callable | None, k: int, t: float) -> NDArray[np.float64]:
    """``u_k`` on interior x-faces normal to ``x_k`` (shape over x axes only)."""
    axes = []
    for a in range(grid.d):
        c = grid.x_centers(a)
        if a == k:
            c = grid.x_lo[a] + grid.hx[a] * np.arange(1, grid.n_x)
        axes.append(c)
    m = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(m, axis=-1)
    if u is None:
        return np.zeros(pts.shape[:-1])
    return np.asarray(u(pts.reshape(-1, grid.d), t), dtype=float)[:, k].reshape(pts.shape[:-1])


def x_transport_rhs(psi: NDArray[np.float64], grid: XQGrid, beta: float,
                    u: Callable | None = None, t: float = 0.0) -> NDArray[np.float64]:
    """``-∇_x·(uψ) + β/(J+1) Δ_x ψ`` with upwind advection and zero wall flux.

    Acts on any array whose first ``d`` axes are the x-grid.
    """
    nd = psi.ndim
    out = np.zeros_like(psi)
    kappa = beta / (grid.J + 1)
    extra = (1,) * (nd - grid.d)
    for k in range(grid.d):
        h = grid.hx[k]
        sl_l, sl_r = _shift_slices(nd, k)
        uf = _x_face_velocity(grid, u, k, t).reshape(_x_face_velocity(grid, u, k, t).shape + extra)
        adv = np.where(uf > 0, uf * psi[sl_l], uf * psi[sl_r])
        flux = adv - kappa * (psi[sl_r] - psi[sl_l]) / h
        out[sl_l] -= flux / h
        out[sl_r] += flux / h
    return out


def classical_fp_rhs(psi: NDArray[np.float64], grid: XQGrid, beta: float,
                     u: Callable | None = None, grad_u: Callable | None = None,
                     t: float = 0.0) -> NDArray[np.float64]:
    """Time derivative of ``ψ(x, q)`` for the classical Hookean equation.

    ``∂t ψ = -u·∇_x ψ - Σ_j ∇_{q_j}·((∇u) q_j ψ)
    + β Σ_{ij} ∇_{q_j}·(𝓡_ij 𝔐 ∇_{q_i}(ψ/𝔐)) + β/(J+1) Δ_x ψ``

    Finite volumes with zero flux on ``∂Ω`` and ``∂D^J``. ``u`` and ``grad_u``
    are callables on points of shape ``(M, d)``; ``grad_u`` returns
    ``(M, d, d)`` with entry ``[a, b] = ∂u_a/∂x_b``.
    """
    J, d = grid.J, grid.d
    nd = psi.ndim
    rouse = build_rouse(J)
    out = x_transport_rhs(psi, grid, beta, u, t)
    x, q = grid.mesh()
    Mx = ConfigMaxwellian(J, d, beta)
    phi = psi / Mx(q)
    gu = None
    if grad_u is not None:
        gu = np.asarray(grad_u(x.reshape(-1, d), t), dtype=float).reshape(x.shape[:-1] + (d, d))
    for j in range(J):
        for k in range(d):
            axis = d + j * d + k
            h = grid.hq[k]
            sl_l, sl_r = _shift_slices(nd, axis)
            qf = 0.5 * (q[sl_l] + q[sl_r])
            Mf = Mx(qf)
            flux = -beta * rouse.R[j, j] * Mf * (phi[sl_r] - phi[sl_l]) / h
            for i in range(J):
                if i == j or rouse.R[i, j] == 0.0:
                    continue
                ax_i = d + i * d + k
                g = np.gradient(phi, grid.hq[k], axis=ax_i)
                flux = flux - beta * rouse.R[i, j] * Mf * 0.5 * (g[sl_l] + g[sl_r])
            if gu is not None:
                drift = np.einsum("...b,...b->...", 0.5 * (gu[sl_l][..., k, :] + gu[sl_r][..., k, :]),
                                  qf[..., j, :])
                flux = flux + np.where(drift > 0, drift * psi[sl_l], drift * psi[sl_r])
            out[sl_l] -= flux / h
            out[sl_r] += flux / h
    return out


def q_integral(psi: NDArray[np.float64], grid: XQGrid) -> NDArray[np.float64]:
    """``∫ ψ dq`` on the x-grid (midpoint quadrature)."""
    return psi.sum(axis=tuple(range(grid.d, psi.ndim))) * grid.q_cell_volume


# -- operator identity -------------------------------------------------------------

def operator_identity_check(J: int, d: int, f: Callable[[NDArray], float], points,
                            h: float = 1e-4) -> dict:
    """Compare ``Σ_j ∂²_{r_j} f`` with ``(∂_qᵀ𝓡∂_q + (J+1)⁻¹ Δ_x) f(B(q, x))``.

    Both sides use central finite differences with step ``h``. ``f`` maps a
    bead configuration ``(J+1, d)`` to a scalar; ``points`` has shape
    ``(M, J+1, d)``. Returns per-point values and the maximum discrepancy.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, J + 1, d)
    R = build_rouse(J).R
    lhs = np.zeros(len(pts))
    rhs = np.zeros(len(pts))

    def g(q, x):
        return f(inverse_change_of_variables(q, x))

    for m, r in enumerate(pts):
        f0 = f(r)
        s = 0.0
        for j in range(J + 1):
            for k in range(d):
                e = np.zeros_like(r)
                e[j, k] = h
                s += (f(r + e) - 2 * f0 + f(r - e)) / h ** 2
        lhs[m] = s
        q, x = change_of_variables(r)
        g0 = g(q, x)
        s = 0.0
        for i in range(J):
            for j in range(J):
                if R[i, j] == 0.0:
                    continue
                for k in range(d):
                    if i == j:
                        e = np.zeros_like(q)
                        e[i, k] = h
                        s += R[i, j] * (g(q + e, x) - 2 * g0 + g(q - e, x)) / h ** 2
                    else:
                        ei = np.zeros_like(q)
                        ej = np.zeros_like(q)
                        ei[i, k] = h
                        ej[j, k] = h
                        s += R[i, j] * (g(q + ei + ej, x) - g(q + ei - ej, x) - g(q - ei + ej, x)
                                        + g(q - ei - ej, x)) / (4 * h ** 2)
        for k in range(d):
            e = np.zeros_like(x)
            e[k] = h
            s += (g(q, x + e) - 2 * g0 + g(q, x - e)) / (h ** 2 * (J + 1))
        rhs[m] = s
    err = np.abs(lhs - rhs)
    return {"lhs": lhs, "rhs": rhs, "abs_err": err, "max_err": float(err.max())}


# -- kinetic-to-limit equilibration ----------------------------------------------

@dataclass
class EquilibrationMetrics:
    """Distances between a kinetic state and its small-mass limit.

    ``velocity_l1``
        ``∫∫|ϱ - M ϱ̄|``, averaged over velocity components of the
        conditional one-dimensional velocity marginals.
    ``second_moment_sq``
        Squared ``L²`` norm of ``ℙ - β ϱ̄ 𝕀`` (bias-corrected for ensembles).
    ``spatial_l1``
        ``L¹`` distance of the spatial marginal to ``η`` (NaN without ``η``).
    """

    t: float
    velocity_l1: float
    second_moment_sq: float
    spatial_l1: float = float("nan")

    @property
    def second_moment(self) -> float:
        return math.sqrt(max(self.second_moment_sq, 0.0))

    def as_dict(self) -> dict:
        return {"t": self.t, "velocity_l1": self.velocity_l1, "second_moment": self.second_moment,
                "second_moment_sq": self.second_moment_sq, "spatial_l1": self.spatial_l1}


def _maxwell_bin_probs(edges: NDArray[np.float64], beta: float) -> NDArray[np.float64]:
    from scipy.special import ndtr

    c = ndtr(edges / math.sqrt(beta))
    p = np.diff(c)
    p[0] += c[0]
    p[-1] += 1.0 - c[-1]
    return p


def ensemble_metrics(ens: Ensemble, params: ChainParams, grid: BinGrid,
                     eta: MacroDensity | None = None, v_edges=None) -> EquilibrationMetrics:
    """Equilibration metrics of a chain ensemble on the bins ``grid``.

    ``eta`` must live on a grid that ``grid`` coarsens by an integer factor.
    """
    beta = params.beta
    N = ens.N
    P = params.n_beads * params.d
    if v_edges is None:
        s = math.sqrt(beta)
        v_edges = np.linspace(-5 * s, 5 * s, 21)
    v_edges = np.asarray(v_edges, dtype=float)
    gp = _maxwell_bin_probs(v_edges, beta)
    nv = len(gp)
    idx = grid.index(ens.r.reshape(N, P))
    nb = int(np.prod(grid.shape))
    counts = np.bincount(idx, minlength=nb)
    vel = ens.v.reshape(N, P)
    vol = float(np.prod(grid.widths))

    # conditional 1-D velocity histograms
    vbin = np.clip(np.searchsorted(v_edges, vel, side="right") - 1, 0, nv - 1)
    l1 = 0.0
    for c in range(P):
        H = np.bincount(idx * nv + vbin[:, c], minlength=nb * nv).reshape(nb, nv) / N
        l1 += np.abs(H - counts[:, None] / N * gp[None, :]).sum()
    l1 /= P

    # bias-corrected squared norm of the per-bin excess second moment
    o = (np.einsum("na,nb->nab", vel, vel) - beta * np.eye(P)).reshape(N, P * P)
    s1 = np.stack([np.bincount(idx, weights=o[:, a], minlength=nb) for a in range(P * P)], axis=1)
    s2 = np.stack([np.bincount(idx, weights=o[:, a] ** 2, minlength=nb) for a in range(P * P)], axis=1)
    ok = counts >= 2
    n = counts[ok][:, None].astype(float)
    mean = s1[ok] / n
    var = (s2[ok] - n * mean ** 2) / (n - 1)
    unbiased = np.sum(mean ** 2 - var / n, axis=1)
    p = counts[ok] / N
    sq = float(np.sum(p ** 2 / vol * unbiased))

    spatial = float("nan")
    if eta is not None:
        factor = _coarsening_factor(eta.grid, grid)
        pe = eta.coarsen(factor).ravel()
        spatial = float(np.abs(counts / N - pe).sum())
    return EquilibrationMetrics(ens.t, float(l1), sq, spatial)


def _coarsening_factor(eg: EtaGrid, bg: BinGrid) -> int:
    if eg.ndim != bg.ndim or not (np.allclose(eg.lo, bg.lo) and np.allclose(eg.hi, bg.hi)):
        raise GridMismatch("bins and η grid cover different boxes")
    if bg.n == 0 or eg.n % bg.n:
        raise GridMismatch(f"{bg.n} bins per axis do not coarsen the η grid with n={eg.n}")
    return eg.n // bg.n


def equilibration_metrics(kinetic, eta: MacroDensity | None, params: ChainParams,
                          grid: BinGrid | None = None, v_edges=None) -> EquilibrationMetrics:
    """Distances (a) velocity ``L¹``, (b) second-moment excess, (c) spatial ``L¹``.

    ``kinetic`` is either a chain :class:`Ensemble` (binned on ``grid``) or a
    phase-space :class:`~hookean_mkv.fokker_planck.DensityField` whose
    position grid must match ``eta``'s grid exactly.

    Raises
    ------
    GridMismatch
        If the kinetic and limit grids are incompatible.
    """
    from .fokker_planck import DensityField, density_metrics

    if isinstance(kinetic, DensityField):
        return density_metrics(kinetic, eta)
    if grid is None:
        if eta is None:
            raise ValueError("pass bins or an η density to define bins")
        grid = eta.grid.bin_grid(1)
    return ensemble_metrics(kinetic, params, grid, eta, v_edges)


def space_time_metrics(series: list[EquilibrationMetrics]) -> EquilibrationMetrics:
    """Time averages: ``L¹`` metrics averaged, squared ``L²`` norms averaged."""
    if not series:
        raise ValueError("empty series")
    return EquilibrationMetrics(
        t=series[-1].t,
        velocity_l1=float(np.mean([m.velocity_l1 for m in series])),
        second_moment_sq=float(np.mean([m.second_moment_sq for m in series])),
        spatial_l1=float(np.mean([m.spatial_l1 for m in series])),
    )
