"""Deterministic kinetic Fokker-Planck solver for a dumbbell on an interval.

The phase-space density ``ϱ = M ρ̂`` of a two-bead chain (``J = 1``) in
one dimension lives on ``(r1, r2, v1, v2) ∈ Ω² × [-V, V]²`` and evolves by

    ∂t ϱ + ε⁻¹ v·∇_r ϱ + ε⁻¹ ∇_v·((𝓛r + u) ϱ) = (β²/ε²) ∇_v·(M ∇_v ρ̂)

with specular reflection at ``∂Ω`` and zero flux at ``|v| = V``.

Implementation notes
--------------------
Transport is an explicit upwind finite-volume step in the ratio
``h = ϱ / G`` to the discrete Gibbs state ``G ∝ exp(-(V(r) + |v|²/2)/β)``.
Face fluxes of the Hamiltonian part come from corner differences of the
stream function ``Ψ = -β G`` in each ``(r_j, v_j)`` plane, so the discrete
flux field is exactly divergence free and the discrete Gibbs state is
stationary to round-off. Every explicit step is then a Markov operator with
invariant measure ``G``, hence entropy relative to Gibbs cannot increase.
The drift from ``u`` uses plain upwinding of ``ϱ``. The velocity diffusion
is centred in ``M``-weighted form and solved implicitly. Steps are Strang
split: transport ``dt/2``, diffusion ``dt``, transport ``dt/2``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import _accel
from ._accel import njit
from .chain_dynamics import VelocitySampler
from .errors import GridMismatch, GridTooCoarse, StabilityViolation
from .geometry import ConfigurationDomain, ConvexDomain

log = logging.getLogger(__name__)

MIN_NV = 8
NEG_TOL = 1e-12


def entropy_density(s) -> NDArray[np.float64]:
    """``ℱ(s) = s (log s - 1) + 1`` with ``ℱ(0) = 1``."""
    s = np.asarray(s, dtype=float)
    pos = s > 0
    out = np.ones_like(s)
    sp = s[pos]
    out[pos] = sp * (np.log(sp) - 1.0) + 1.0
    return out


@dataclass(frozen=True)
class Maxwellian:
    """Per-bead Maxwellian ``(2πβ)^{-d/2} exp(-|v_j|²/(2β))``; ``M`` is the
    product over beads."""

    beta: float = 1.0
    d: int = 1

    def g(self, v) -> NDArray[np.float64]:
        """One-dimensional factor."""
        v = np.asarray(v, dtype=float)
        return np.exp(-v * v / (2 * self.beta)) / math.sqrt(2 * math.pi * self.beta)

    def __call__(self, v) -> NDArray[np.float64]:
        """Evaluate at velocities of shape ``(..., J+1, d)``."""
        v = np.asarray(v, dtype=float)
        n = v.shape[-1] * v.shape[-2]
        return (2 * math.pi * self.beta) ** (-n / 2) * np.exp(-np.sum(v * v, axis=(-2, -1)) / (2 * self.beta))


@dataclass(frozen=True)
class PhaseGrid:
    """Cell grid on ``Ω² × [-V, V]²`` with array axes ``(r1, r2, v1, v2)``.

    Velocity faces are exactly symmetric about zero, so cell ``k`` and cell
    ``n_v - 1 - k`` are mirror images.
    """

    domain: ConvexDomain
    n_r: int = 24
    n_v: int = 32
    v_max: float = 6.0
    beta: float = 1.0

    def __post_init__(self):
        if self.domain.kind != "box" or self.domain.dim != 1:
            raise ValueError("the phase-space solver needs a one-dimensional box domain")
        if self.n_r < 2:
            raise GridTooCoarse("n_r must be at least 2")
        if self.n_v % 2:
            raise ValueError("n_v must be even so the velocity grid is mirror symmetric")
        if self.v_max < 6 * math.sqrt(self.beta) * (1 - 1e-12):
            raise ValueError(f"v_max={self.v_max} must be at least 6*sqrt(beta)")

    @property
    def lo(self) -> float:
        return float(self.domain.lo[0])

    @property
    def hi(self) -> float:
        return float(self.domain.hi[0])

    @property
    def h_r(self) -> float:
        return (self.hi - self.lo) / self.n_r

    @property
    def h_v(self) -> float:
        return 2 * self.v_max / self.n_v

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.n_r, self.n_r, self.n_v, self.n_v)

    @property
    def cell_volume(self) -> float:
        return self.h_r ** 2 * self.h_v ** 2

    @property
    def r_faces(self) -> NDArray[np.float64]:
        return self.lo + self.h_r * np.arange(self.n_r + 1)

    @property
    def r_centers(self) -> NDArray[np.float64]:
        return self.lo + self.h_r * (np.arange(self.n_r) + 0.5)

    @property
    def v_faces(self) -> NDArray[np.float64]:
        f = -self.v_max + self.h_v * np.arange(self.n_v + 1)
        return 0.5 * (f - f[::-1])

    @property
    def v_centers(self) -> NDArray[np.float64]:
        c = -self.v_max + self.h_v * (np.arange(self.n_v) + 0.5)
        return 0.5 * (c - c[::-1])

    def maxwellian_cells(self) -> NDArray[np.float64]:
        """``M(v1, v2)`` at cell centres, shape ``(n_v, n_v)``."""
        g = Maxwellian(self.beta).g(self.v_centers)
        return np.outer(g, g)

    def same_r_grid(self, other) -> bool:
        return (self.n_r == other.n and np.isclose(self.lo, other.lo[0]) and np.isclose(self.hi, other.hi[0]))


@dataclass
class DensityField:
    """``ρ̂ = ϱ / M`` at cell centres; ``M``-weighted mass is
    ``Σ M ρ̂ · cell_volume``."""

    grid: PhaseGrid
    rho_hat: NDArray[np.float64]
    eps: float
    t: float = 0.0

    @property
    def beta(self) -> float:
        return self.grid.beta

    def cell_mass(self) -> NDArray[np.float64]:
        return self.rho_hat * self.grid.maxwellian_cells()[None, None] * self.grid.cell_volume

    @property
    def mass(self) -> float:
        return float(self.cell_mass().sum())

    @classmethod
    def from_cell_mass(cls, grid: PhaseGrid, m: NDArray[np.float64], eps: float, t: float) -> "DensityField":
        return cls(grid, m / (grid.maxwellian_cells()[None, None] * grid.cell_volume), eps, t)

    def copy(self) -> "DensityField":
        return DensityField(self.grid, self.rho_hat.copy(), self.eps, self.t)


def _spring_weight(r1, r2, beta):
    return np.exp(-0.5 * (r2 - r1) ** 2 / beta)


def gibbs_field(grid: PhaseGrid, eps: float) -> DensityField:
    """Discrete Gibbs state: ``ρ̂ ∝ exp(-V(r)/β)`` normalised to unit mass."""
    rc = grid.r_centers
    w = _spring_weight(rc[:, None], rc[None, :], grid.beta)
    rho = np.broadcast_to(w[:, :, None, None], grid.shape).copy()
    f = DensityField(grid, rho, eps)
    f.rho_hat /= f.mass
    return f


def field_from_eta(grid: PhaseGrid, eta_values: NDArray[np.float64], eps: float) -> DensityField:
    """Local equilibrium ``ϱ = M η(r)`` from cell values on the ``r``-grid."""
    rho = np.broadcast_to(np.asarray(eta_values, dtype=float)[:, :, None, None], grid.shape).copy()
    f = DensityField(grid, rho, eps)
    f.rho_hat /= f.mass
    return f


# -- operator assembly ---------------------------------------------------------------

@dataclass
class FPOperator:
    """Precomputed fluxes of the discrete Fokker-Planck operator.

    ``phi_r1`` etc. are Gibbs-weighted Hamiltonian face fluxes (mass per unit
    time per unit ``h``), ``gibbs`` the cell weights ``G``, ``u1``/``u2`` the
    drift ``u(r_j)/ε`` at cell centres, ``alpha`` the position-diffusion
    coefficient.
    """

    grid: PhaseGrid
    eps: float
    alpha: float
    gibbs: NDArray[np.float64]
    phi_r1: NDArray[np.float64]
    phi_r2: NDArray[np.float64]
    phi_v1: NDArray[np.float64]
    phi_v2: NDArray[np.float64]
    u1: NDArray[np.float64]
    u2: NDArray[np.float64]
    u_sup: float = 0.0
    _diffusion_cache: dict = field(default_factory=dict, repr=False)

    @property
    def beta(self) -> float:
        return self.grid.beta

    def stability_bound(self) -> float:
        """Largest explicit transport step keeping the update monotone."""
        if "bound" not in self._diffusion_cache:
            self._diffusion_cache["bound"] = _transport_bound(self)
        return self._diffusion_cache["bound"]

    @property
    def cell_weights(self) -> NDArray[np.float64]:
        """``M · cell_volume`` broadcastable against ``ρ̂``."""
        if "Mc" not in self._diffusion_cache:
            g = self.grid
            self._diffusion_cache["Mc"] = g.maxwellian_cells()[None, None] * g.cell_volume
        return self._diffusion_cache["Mc"]

    def apply(self, rho_hat: NDArray[np.float64], include_diffusion: bool = True) -> NDArray[np.float64]:
        """``∂t ρ̂`` produced by the full discrete operator."""
        g = self.grid
        Mc = g.maxwellian_cells()[None, None] * g.cell_volume
        m = rho_hat * Mc
        dm = transport_increment(self, m, 1.0)
        out = dm / Mc
        if include_diffusion:
            D = (self.beta / self.eps) ** 2
            out = out + D * (v_diffusion_apply(rho_hat, g.v_centers, g.v_faces, self.beta, axis=2)
                             + v_diffusion_apply(rho_hat, g.v_centers, g.v_faces, self.beta, axis=3))
        return out


def assemble_fp_operator(grid: PhaseGrid, eps: float, u: VelocitySampler | None = None,
                         alpha: float = 0.0, t: float = 0.0) -> FPOperator:
    """Build the discrete operator for velocity sampler ``u`` at time ``t``.

    Raises
    ------
    GridTooCoarse
        If ``n_v < 8``.
    """
    if grid.n_v < MIN_NV:
        raise GridTooCoarse(f"n_v={grid.n_v} is below the minimum of {MIN_NV}")
    if eps <= 0 or alpha < 0:
        raise ValueError("eps must be positive and alpha non-negative")
    beta = grid.beta
    mx = Maxwellian(beta)
    rc, rf = grid.r_centers, grid.r_faces
    vc, vf = grid.v_centers, grid.v_faces
    g_c = mx.g(vc)
    gmax = float(mx.g(grid.v_max))
    gt_f = mx.g(vf) - gmax  # paired-velocity factor on v-faces, zero at ±V
    gt_f[0] = gt_f[-1] = 0.0
    coef = grid.h_r * grid.h_v / eps

    # pair (r1, v1): Ψ1 = -β w(r1, r2) g̃(v1) g(v2)
    w_f1 = _spring_weight(rf[:, None], rc[None, :], beta)               # (n+1, n)
    dpsi_v1 = -beta * (gt_f[1:] - gt_f[:-1])                             # Ψ(v+) - Ψ(v-) / (w g2)
    phi_r1 = coef * w_f1[:, :, None, None] * dpsi_v1[None, None, :, None] * g_c[None, None, None, :]
    w_c1 = _spring_weight(rf[:, None], rc[None, :], beta)                # r1 at faces, r2 at centres
    dpsi_r1 = -beta * (w_c1[1:] - w_c1[:-1])                             # (n, n)
    phi_v1 = -coef * dpsi_r1[:, :, None, None] * gt_f[None, None, :, None] * g_c[None, None, None, :]

    # pair (r2, v2): Ψ2 = -β w(r1, r2) g(v1) g̃(v2)
    w_f2 = _spring_weight(rc[:, None], rf[None, :], beta)               # (n, n+1)
    phi_r2 = coef * w_f2[:, :, None, None] * g_c[None, None, :, None] * dpsi_v1[None, None, None, :]
    dpsi_r2 = -beta * (w_f2[:, 1:] - w_f2[:, :-1])                      # (n, n)
    phi_v2 = -coef * dpsi_r2[:, :, None, None] * g_c[None, None, :, None] * gt_f[None, None, None, :]

    w_cc = _spring_weight(rc[:, None], rc[None, :], beta)
    gibbs = w_cc[:, :, None, None] * np.outer(g_c, g_c)[None, None] * grid.cell_volume

    if u is None:
        u1 = np.zeros(grid.n_r)
    else:
        u1 = np.asarray(u(rc.reshape(-1, 1), t), dtype=float).reshape(-1) / eps
    u2 = u1.copy()
    return FPOperator(grid, eps, alpha, np.ascontiguousarray(gibbs),
                      np.ascontiguousarray(phi_r1), np.ascontiguousarray(phi_r2),
                      np.ascontiguousarray(phi_v1), np.ascontiguousarray(phi_v2),
                      np.ascontiguousarray(u1), np.ascontiguousarray(u2),
                      u_sup=float(np.max(np.abs(u1)) * eps) if u1.size else 0.0)


def _transport_bound(op: FPOperator) -> float:
    G = op.gibbs
    out = np.zeros_like(G)
    pr1, pr2, pv1, pv2 = op.phi_r1, op.phi_r2, op.phi_v1, op.phi_v2
    out += np.maximum(pr1[1:], 0) + np.maximum(-pr1[:-1], 0)
    out += np.maximum(pr2[:, 1:], 0) + np.maximum(-pr2[:, :-1], 0)
    out += np.maximum(pv1[:, :, 1:], 0) + np.maximum(-pv1[:, :, :-1], 0)
    out += np.maximum(pv2[:, :, :, 1:], 0) + np.maximum(-pv2[:, :, :, :-1], 0)
    rate = out / G
    hv = op.grid.h_v
    rate += (np.abs(op.u1)[:, None, None, None] + np.abs(op.u2)[None, :, None, None]) / hv
    rate += 4.0 * op.alpha / op.grid.h_r ** 2
    return float(1.0 / rate.max()) if rate.max() > 0 else math.inf


# -- transport kernels ------------------------------------------------------------------

@njit
def _transport_numba(m, G, pr1, pr2, pv1, pv2, u1, u2, alpha_c, inv_hv, dt):
    n, _, K, _ = m.shape
    dm = np.zeros_like(m)
    h = m / G
    for i in range(n + 1):
        for j in range(n):
            for k in range(K):
                for l in range(K):
                    p = pr1[i, j, k, l]
                    if 0 < i < n:
                        F = p * (h[i - 1, j, k, l] if p > 0.0 else h[i, j, k, l])
                        dm[i - 1, j, k, l] -= F
                        dm[i, j, k, l] += F
                    elif i == 0 and p < 0.0:
                        F = -p * h[0, j, k, l]
                        dm[0, j, k, l] -= F
                        dm[0, j, K - 1 - k, l] += F
                    elif i == n and p > 0.0:
                        F = p * h[n - 1, j, k, l]
                        dm[n - 1, j, k, l] -= F
                        dm[n - 1, j, K - 1 - k, l] += F
    for i in range(n):
        for j in range(n + 1):
            for k in range(K):
                for l in range(K):
                    p = pr2[i, j, k, l]
                    if 0 < j < n:
                        F = p * (h[i, j - 1, k, l] if p > 0.0 else h[i, j, k, l])
                        dm[i, j - 1, k, l] -= F
                        dm[i, j, k, l] += F
                    elif j == 0 and p < 0.0:
                        F = -p * h[i, 0, k, l]
                        dm[i, 0, k, l] -= F
                        dm[i, 0, k, K - 1 - l] += F
                    elif j == n and p > 0.0:
                        F = p * h[i, n - 1, k, l]
                        dm[i, n - 1, k, l] -= F
                        dm[i, n - 1, k, K - 1 - l] += F
    for i in range(n):
        for j in range(n):
            a1 = u1[i]
            a2 = u2[j]
            for k in range(1, K):
                for l in range(K):
                    p = pv1[i, j, k, l]
                    F = p * (h[i, j, k - 1, l] if p > 0.0 else h[i, j, k, l])
                    F += a1 * inv_hv * (m[i, j, k - 1, l] if a1 > 0.0 else m[i, j, k, l])
                    dm[i, j, k - 1, l] -= F
                    dm[i, j, k, l] += F
            for k in range(K):
                for l in range(1, K):
                    p = pv2[i, j, k, l]
                    F = p * (h[i, j, k, l - 1] if p > 0.0 else h[i, j, k, l])
                    F += a2 * inv_hv * (m[i, j, k, l - 1] if a2 > 0.0 else m[i, j, k, l])
                    dm[i, j, k, l - 1] -= F
                    dm[i, j, k, l] += F
    if alpha_c > 0.0:
        for i in range(1, n):
            for j in range(n):
                for k in range(K):
                    for l in range(K):
                        F = -alpha_c * (m[i, j, k, l] - m[i - 1, j, k, l])
                        dm[i - 1, j, k, l] -= F
                        dm[i, j, k, l] += F
        for i in range(n):
            for j in range(1, n):
                for k in range(K):
                    for l in range(K):
                        F = -alpha_c * (m[i, j, k, l] - m[i, j - 1, k, l])
                        dm[i, j - 1, k, l] -= F
                        dm[i, j, k, l] += F
    return dm * dt


def _upwind(p, left, right):
    return p * np.where(p > 0.0, left, right)


def _transport_numpy(m, G, pr1, pr2, pv1, pv2, u1, u2, alpha_c, inv_hv, dt):
    K = m.shape[2]
    dm = np.zeros_like(m)
    h = m / G
    # r1 interior faces
    F = _upwind(pr1[1:-1], h[:-1], h[1:])
    dm[:-1] -= F
    dm[1:] += F
    # r1 walls: outflow re-enters the mirrored velocity cell
    out_lo = np.where(pr1[0] < 0.0, -pr1[0] * h[0], 0.0)
    out_hi = np.where(pr1[-1] > 0.0, pr1[-1] * h[-1], 0.0)
    dm[0] += out_lo[:, ::-1, :] - out_lo
    dm[-1] += out_hi[:, ::-1, :] - out_hi
    # r2
    F = _upwind(pr2[:, 1:-1], h[:, :-1], h[:, 1:])
    dm[:, :-1] -= F
    dm[:, 1:] += F
    out_lo = np.where(pr2[:, 0] < 0.0, -pr2[:, 0] * h[:, 0], 0.0)
    out_hi = np.where(pr2[:, -1] > 0.0, pr2[:, -1] * h[:, -1], 0.0)
    dm[:, 0] += out_lo[:, :, ::-1] - out_lo
    dm[:, -1] += out_hi[:, :, ::-1] - out_hi
    # v1, v2 interior faces (truncation faces carry no flux)
    a1 = u1[:, None, None, None]
    F = _upwind(pv1[:, :, 1:K], h[:, :, :-1], h[:, :, 1:])
    F = F + a1 * inv_hv * np.where(a1 > 0.0, m[:, :, :-1], m[:, :, 1:])
    dm[:, :, :-1] -= F
    dm[:, :, 1:] += F
    a2 = u2[None, :, None, None]
    F = _upwind(pv2[:, :, :, 1:K], h[:, :, :, :-1], h[:, :, :, 1:])
    F = F + a2 * inv_hv * np.where(a2 > 0.0, m[:, :, :, :-1], m[:, :, :, 1:])
    dm[:, :, :, :-1] -= F
    dm[:, :, :, 1:] += F
    if alpha_c > 0.0:
        F = -alpha_c * (m[1:] - m[:-1])
        dm[:-1] -= F
        dm[1:] += F
        F = -alpha_c * (m[:, 1:] - m[:, :-1])
        dm[:, :-1] -= F
        dm[:, 1:] += F
    return dm * dt


transport_kernel = _accel.pick(_transport_numba, _transport_numpy)


def transport_increment(op: FPOperator, m: NDArray[np.float64], dt: float, kernel=None) -> NDArray[np.float64]:
    """Explicit transport increment of cell masses ``m`` over ``dt``."""
    kernel = transport_kernel if kernel is None else kernel
    return kernel(np.ascontiguousarray(m), op.gibbs, op.phi_r1, op.phi_r2, op.phi_v1, op.phi_v2,
                  op.u1, op.u2, op.alpha / op.grid.h_r ** 2, 1.0 / op.grid.h_v, dt)


# -- velocity diffusion ---------------------------------------------------------------

def v_diffusion_apply(rho_hat, v_centers, v_faces, beta: float, axis: int = -1) -> NDArray[np.float64]:
    """``M⁻¹ ∂_v (M ∂_v ρ̂)`` along one velocity axis, zero flux at the ends.

    Uses face Maxwellian weights; for ``ρ̂(v) = v`` this approximates
    ``-v/β`` to second order at interior nodes.
    """
    rho = np.moveaxis(np.asarray(rho_hat, dtype=float), axis, -1)
    mx = Maxwellian(beta)
    gc = mx.g(v_centers)
    gf = mx.g(v_faces[1:-1])
    h = v_faces[1] - v_faces[0]
    flux = gf * (rho[..., 1:] - rho[..., :-1]) / h
    div = np.zeros_like(rho)
    div[..., :-1] += flux
    div[..., 1:] -= flux
    out = div / (h * gc)
    return np.moveaxis(out, -1, axis)


def _diffusion_matrix(grid: PhaseGrid, coef: float) -> NDArray[np.float64]:
    """Propagator ``P`` with ``ρ̂' = P ρ̂`` for one implicit step along a velocity axis."""
    mx = Maxwellian(grid.beta)
    gc = mx.g(grid.v_centers)
    gf = mx.g(grid.v_faces[1:-1])
    n = grid.n_v
    c = coef / grid.h_v ** 2
    A = np.diag(gc.copy())
    for k in range(n - 1):
        A[k, k] += c * gf[k]
        A[k + 1, k + 1] += c * gf[k]
        A[k, k + 1] -= c * gf[k]
        A[k + 1, k] -= c * gf[k]
    return np.linalg.solve(A, np.diag(gc))


def diffuse(op: FPOperator, rho_hat: NDArray[np.float64], dt: float) -> NDArray[np.float64]:
    """Implicit ``M``-weighted velocity diffusion over ``dt`` (both axes)."""
    coef = dt * (op.beta / op.eps) ** 2
    P = op._diffusion_cache.get(coef)
    if P is None:
        P = _diffusion_matrix(op.grid, coef)
        op._diffusion_cache[coef] = P
    return np.matmul(np.matmul(P, rho_hat), P.T)


# -- stepping ---------------------------------------------------------------------------

def step_fp(f: DensityField, op: FPOperator, dt: float) -> DensityField:
    """Strang-split step: transport ``dt/2``, diffusion ``dt``, transport ``dt/2``.

    Raises
    ------
    StabilityViolation
        If ``dt/2`` exceeds the explicit transport bound, or the density
        drops below ``-1e-12``.
    """
    if f.grid is not op.grid and f.grid != op.grid:
        raise GridMismatch("density and operator live on different grids")
    half = 0.5 * dt
    bound = op.stability_bound()
    if half > bound * (1 + 1e-12):
        raise StabilityViolation(f"dt={dt:g} needs dt/2 <= {bound:g} for the explicit transport")
    g = f.grid
    Mc = op.cell_weights
    m = f.rho_hat * Mc
    m = m + transport_increment(op, m, half)
    rho = diffuse(op, m / Mc, dt)
    m = rho * Mc
    m = m + transport_increment(op, m, half)
    rho = m / Mc
    mn = float(rho.min())
    if mn < 0.0:
        if mn < -NEG_TOL:
            raise StabilityViolation(f"density fell to {mn:.3e}; reduce dt")
        before = float(m.sum())
        rho = np.maximum(rho, 0.0)
        after = float((rho * Mc).sum())
        if after > 0:
            rho *= before / after
        log.info("clipped negative density (min %.3e) at t=%.6g", mn, f.t + dt)
    return DensityField(g, rho, f.eps, f.t + dt)


# -- diagnostics ------------------------------------------------------------------------

def relative_entropy(f: DensityField) -> float:
    """``∫ M ℱ(ρ̂) dr dv`` (entropy relative to the Maxwellian)."""
    g = f.grid
    return float(np.sum(g.maxwellian_cells()[None, None] * entropy_density(f.rho_hat)) * g.cell_volume)


def gibbs_relative_entropy(f: DensityField) -> float:
    """Entropy of the cell masses relative to the normalised discrete Gibbs state."""
    m = f.cell_mass()
    gibbs = gibbs_field(f.grid, f.eps).cell_mass()
    mass = m.sum()
    return float(np.sum(gibbs * entropy_density(m / (mass * gibbs))) * mass)


def v_fisher(rho_hat, v_faces, beta: float, axis: int = -1, floor: float = 1e-30) -> NDArray[np.float64]:
    """``∫ M |∂_v ρ̂|² / ρ̂ dv`` along one velocity axis (face quadrature)."""
    rho = np.moveaxis(np.asarray(rho_hat, dtype=float), axis, -1)
    h = v_faces[1] - v_faces[0]
    gf = Maxwellian(beta).g(v_faces[1:-1])
    grad = (rho[..., 1:] - rho[..., :-1]) / h
    mid = np.maximum(0.5 * (rho[..., 1:] + rho[..., :-1]), floor)
    return np.sum(gf * grad ** 2 / mid, axis=-1) * h


def fisher_dissipation(f: DensityField, floor: float = 1e-30) -> float:
    """``∫ M |∇_v ρ̂|² / max(ρ̂, floor) dr dv``."""
    g = f.grid
    gc = Maxwellian(g.beta).g(g.v_centers)
    d1 = v_fisher(f.rho_hat, g.v_faces, g.beta, axis=2, floor=floor)  # (n, n, K) over v2
    d2 = v_fisher(f.rho_hat, g.v_faces, g.beta, axis=3, floor=floor)  # (n, n, K) over v1
    tot = np.sum(d1 * gc[None, None, :]) + np.sum(d2 * gc[None, None, :])
    return float(tot * g.h_v * g.h_r ** 2)


def _fold_v(w, axis):
    """Sum over a velocity axis pairing mirror cells first (exact odd cancellation)."""
    w = np.moveaxis(w, axis, -1)
    n = w.shape[-1] // 2
    return (w[..., :n] + w[..., ::-1][..., :n]).sum(axis=-1)


@dataclass
class FPMoments:
    """Velocity moments on the ``r``-grid: density, flux and second moment."""

    rho_bar: NDArray[np.float64]
    flux: NDArray[np.float64]
    second: NDArray[np.float64]


def moments(f: DensityField) -> FPMoments:
    """``ϱ̄ = ∫ M ρ̂ dv``, ``𝒥 = ε⁻¹ ∫ M v ρ̂ dv``, ``ℙ = ∫ M v⊗v ρ̂ dv``."""
    g = f.grid
    dv2 = g.h_v ** 2
    w = f.rho_hat * g.maxwellian_cells()[None, None] * dv2
    vc = g.v_centers
    V1 = vc[:, None] * np.ones(g.n_v)[None, :]
    V2 = np.ones(g.n_v)[:, None] * vc[None, :]
    rho_bar = w.sum(axis=(2, 3))
    j1 = _fold_v(_fold_v(w * V1, 3), 2) / f.eps
    j2 = _fold_v(_fold_v(w * V2, 2), 2) / f.eps
    P = np.empty(g.shape[:2] + (2, 2))
    P[..., 0, 0] = (w * V1 * V1).sum(axis=(2, 3))
    P[..., 1, 1] = (w * V2 * V2).sum(axis=(2, 3))
    P[..., 0, 1] = P[..., 1, 0] = _fold_v(_fold_v(w * V1 * V2, 3), 2)
    return FPMoments(rho_bar, np.stack([j1, j2], axis=-1), P)


def spatial_marginal(f: DensityField) -> NDArray[np.float64]:
    """Cell probabilities of the position marginal, shape ``(n_r, n_r)``."""
    return f.cell_mass().sum(axis=(2, 3))


def density_metrics(f: DensityField, eta=None):
    """Equilibration metrics of a phase-space density (see macro_limit)."""
    from .macro_limit import EquilibrationMetrics

    g = f.grid
    beta = g.beta
    m = f.cell_mass()
    gc = Maxwellian(beta).g(g.v_centers) * g.h_v
    rho_bar = m.sum(axis=(2, 3))
    l1 = 0.0
    for ax_keep, ax_sum in ((2, 3), (3, 2)):
        marg = m.sum(axis=ax_sum)                                   # (n, n, K)
        l1 += np.abs(marg - rho_bar[..., None] * gc).sum()
    l1 *= 0.5
    mom = moments(f)
    ex = mom.second - beta * mom.rho_bar[..., None, None] * np.eye(2)
    sq = float(np.sum(ex ** 2) * g.h_r ** 2)
    spatial = float("nan")
    if eta is not None:
        if not g.same_r_grid(eta.grid):
            raise GridMismatch("η grid differs from the phase-space position grid")
        spatial = float(np.abs(rho_bar - eta.values * eta.grid.cell_volume).sum())
    return EquilibrationMetrics(f.t, float(l1), sq, spatial)


def energy_constant(J: int, d: int, L: float, beta: float) -> float:
    """Growth rate ``(16/β)(J+1) d L²`` of the entropy bound."""
    return 16.0 / beta * (J + 1) * d * L ** 2


def check_energy_inequality(history: list[dict], grid: PhaseGrid, eps: float, J: int = 1,
                            d: int = 1) -> dict:
    """Compare the entropy-dissipation balance with its a-priori bound.

    ``history`` holds dicts with ``t``, ``entropy``, ``dissipation`` and
    optionally ``u_sup`` (``‖u(t)‖_∞``). Checks, at every recorded time,

    ``E(t) + (β²/2ε²)∫₀ᵗ D ≤ E(0) + C t + (J+1)/β ∫₀ᵗ ‖u‖²_∞``

    with ``C = (16/β)(J+1) d L²``.
    """
    beta = grid.beta
    L = ConfigurationDomain(grid.domain).L
    C = energy_constant(J, d, L, beta)
    t = np.array([h["t"] for h in history])
    E = np.array([h["entropy"] for h in history])
    D = np.array([h["dissipation"] for h in history])
    us = np.array([h.get("u_sup", 0.0) for h in history])
    dt = np.diff(t)
    intD = np.concatenate([[0.0], np.cumsum(0.5 * (D[1:] + D[:-1]) * dt)])
    intU = np.concatenate([[0.0], np.cumsum(0.5 * (us[1:] ** 2 + us[:-1] ** 2) * dt)])
    lhs = E + beta ** 2 / (2 * eps ** 2) * intD
    rhs = E[0] + C * (t - t[0]) + (J + 1) / beta * intU
    viol = np.nonzero(lhs > rhs * (1 + 1e-12))[0]
    return {"t": t.tolist(), "lhs": lhs.tolist(), "rhs": rhs.tolist(), "constant": C,
            "holds": bool(viol.size == 0), "violations": t[viol].tolist()}


def run_fp(f: DensityField, op: FPOperator, dt: float, n_steps: int, record_every: int = 1,
           u_time_dependent: VelocitySampler | None = None, callback=None) -> tuple[DensityField, list[dict]]:
    """March ``n_steps`` steps and collect mass, entropy and dissipation records."""
    def record(cur):
        rec = {"t": cur.t, "mass": cur.mass, "entropy": relative_entropy(cur),
               "gibbs_entropy": gibbs_relative_entropy(cur), "dissipation": fisher_dissipation(cur),
               "u_sup": op.u_sup, "min_rho_hat": float(cur.rho_hat.min())}
        hist.append(rec)
        if callback is not None:
            callback(cur, rec)

    hist: list[dict] = []
    cur = f
    if record_every:
        record(cur)
    for i in range(1, n_steps + 1):
        if u_time_dependent is not None:
            op = assemble_fp_operator(op.grid, op.eps, u_time_dependent, op.alpha, cur.t)
        cur = step_fp(cur, op, dt)
        if record_every and i % record_every == 0:
            record(cur)
    return cur, hist
