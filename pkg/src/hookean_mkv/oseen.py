"""Two-dimensional Oseen solver on a staggered (MAC) grid.

Solves ``∂t u + (b·∇)u - μΔu + ∇π = f``, ``∇·u = 0`` in a box with
``u = 0`` on the walls, where ``f`` is typically the divergence of a
polymer stress.

Implementation notes
--------------------
``u_x`` lives on vertical faces ``(n+1, n)``, ``u_y`` on horizontal faces
``(n, n+1)``, pressure at cell centres. Wall-normal components are zero
on the walls; wall-tangential values use odd ghost cells. Each step is an
incremental projection: implicit diffusion with explicit upwind
advection, then a pressure-Poisson correction. Advection is conservative
with face fluxes taken from corner values of a stream function for ``b``,
so the discrete advecting field is exactly divergence free. Linear systems
are solved by conjugate gradients with a Jacobi preconditioner.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy.sparse.linalg import LinearOperator, cg

from .errors import ConfigError, LinearSolveFailure, OutsideDomain, StabilityViolation
from .geometry import ConvexDomain

DIV_TOL = 1e-10


@dataclass(frozen=True)
class FlowGrid:
    """Uniform ``n × n`` MAC grid on a 2-D box."""

    domain: ConvexDomain
    n: int

    def __post_init__(self):
        if self.domain.kind != "box" or self.domain.dim != 2:
            raise ValueError("the flow solver needs a two-dimensional box")
        if self.n < 2:
            raise ValueError("need at least 2 cells per direction")

    @property
    def lo(self) -> NDArray[np.float64]:
        return self.domain.lo

    @property
    def hi(self) -> NDArray[np.float64]:
        return self.domain.hi

    @property
    def h(self) -> NDArray[np.float64]:
        return (self.hi - self.lo) / self.n

    def centers(self, axis: int) -> NDArray[np.float64]:
        return self.lo[axis] + self.h[axis] * (np.arange(self.n) + 0.5)

    def faces(self, axis: int) -> NDArray[np.float64]:
        return self.lo[axis] + self.h[axis] * np.arange(self.n + 1)

    def ux_points(self) -> tuple[NDArray, NDArray]:
        return np.meshgrid(self.faces(0), self.centers(1), indexing="ij")

    def uy_points(self) -> tuple[NDArray, NDArray]:
        return np.meshgrid(self.centers(0), self.faces(1), indexing="ij")

    def cell_points(self) -> tuple[NDArray, NDArray]:
        return np.meshgrid(self.centers(0), self.centers(1), indexing="ij")


@dataclass
class VelocityField:
    """Staggered velocity and cell pressure at time ``t``."""

    grid: FlowGrid
    ux: NDArray[np.float64]
    uy: NDArray[np.float64]
    p: NDArray[np.float64]
    t: float = 0.0

    @classmethod
    def zeros(cls, grid: FlowGrid) -> "VelocityField":
        n = grid.n
        return cls(grid, np.zeros((n + 1, n)), np.zeros((n, n + 1)), np.zeros((n, n)))

    def copy(self) -> "VelocityField":
        return VelocityField(self.grid, self.ux.copy(), self.uy.copy(), self.p.copy(), self.t)

    def energy(self) -> float:
        """Discrete kinetic energy ``½ Σ |u|² h_x h_y``."""
        hx, hy = self.grid.h
        return 0.5 * float(np.sum(self.ux ** 2) + np.sum(self.uy ** 2)) * hx * hy

    def divergence(self) -> NDArray[np.float64]:
        hx, hy = self.grid.h
        return (self.ux[1:] - self.ux[:-1]) / hx + (self.uy[:, 1:] - self.uy[:, :-1]) / hy

    def max_abs(self) -> float:
        return float(max(np.abs(self.ux).max(), np.abs(self.uy).max()))

    def cell_velocity(self) -> NDArray[np.float64]:
        """Cell-centred velocity, shape ``(n, n, 2)``."""
        return np.stack([0.5 * (self.ux[1:] + self.ux[:-1]), 0.5 * (self.uy[:, 1:] + self.uy[:, :-1])], axis=-1)

    def __call__(self, x, t: float | None = None) -> NDArray[np.float64]:
        return sample_velocity(self, x)


# -- advecting field -----------------------------------------------------------------

StreamFunction = Callable[[NDArray, NDArray], NDArray]


def _zero_stream(x, y):
    return np.zeros(np.broadcast(x, y).shape)


def cellular_stream(grid: FlowGrid, amplitude: float = 1.0) -> StreamFunction:
    """``ψ = A cos(πx/Lx) cos(πy/Ly)``: one convection cell, ``b·n = 0`` on walls."""
    Lx, Ly = grid.hi - grid.lo

    def psi(x, y):
        return amplitude * Lx / math.pi * np.cos(np.pi * x / Lx) * np.cos(np.pi * y / Ly)
    return psi


def constant_stream(b) -> StreamFunction:
    """Uniform ``b = (b_x, b_y)`` via ``ψ = b_x y - b_y x``."""
    bx, by = float(b[0]), float(b[1])

    def psi(x, y):
        return bx * y - by * x
    return psi


@dataclass
class FlowParams:
    """Viscosity ``mu``, advecting field (stream function ``b_stream``) and
    initial velocity ``u0`` (a callable on points or None for rest)."""

    mu: float = 1.0
    b_stream: StreamFunction | None = None
    u0: Callable | None = None
    b_kind: str = "zero"

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")

    @classmethod
    def from_config(cls, cfg: dict, grid: FlowGrid, path: str = "flow") -> "FlowParams":
        kind = cfg.get("b_kind", "zero")
        amp = float(cfg.get("b_amplitude", 1.0))
        if kind == "zero":
            stream = None
        elif kind == "cellular":
            stream = cellular_stream(grid, amp)
        elif kind == "constant":
            stream = constant_stream(cfg.get("b_vector", [amp, 0.0]))
        else:
            raise ConfigError(f"{path}.b_kind", f"unknown advecting field {kind!r}")
        return cls(mu=float(cfg.get("mu", 1.0)), b_stream=stream, b_kind=kind)


@dataclass
class _Advection:
    """Face fluxes of ``b`` through the control volumes of each component."""

    # u_x control volumes: fluxes through x-faces (at cell centres) and y-faces
    fx_ux: NDArray[np.float64]
    fy_ux: NDArray[np.float64]
    fx_uy: NDArray[np.float64]
    fy_uy: NDArray[np.float64]
    max_rate: float


def _advection(grid: FlowGrid, stream: StreamFunction | None) -> _Advection:
    n = grid.n
    hx, hy = grid.h
    psi = _zero_stream if stream is None else stream
    xc = grid.lo[0] + hx * (np.arange(-1, n + 1) + 0.5)   # cell centres incl. ghosts
    yc = grid.lo[1] + hy * (np.arange(-1, n + 1) + 0.5)
    xf, yf = grid.faces(0), grid.faces(1)
    # u_x CV around face (i, j): x in [xc_{i-1}, xc_i], y in [yf_j, yf_{j+1}]
    # x-flux through the CV face at xc_m (m = 0..n-1 centres plus ends), per unit depth
    X, Y = np.meshgrid(xc[1:-1], yf, indexing="ij")        # (n, n+1) corners
    P = psi(X, Y)
    fx_ux = P[:, 1:] - P[:, :-1]                            # (n, n): through face at centre i, row j
    # y-flux through the CV bottom face at y = yf_j, between xc_{i-1} and xc_i
    Xc, Yf = np.meshgrid(xc, yf, indexing="ij")             # (n+2, n+1)
    Pc = psi(Xc, Yf)
    fy_ux = -(Pc[1:] - Pc[:-1])                             # (n+1, n+1) for face column i = 0..n
    # u_y CV around face (i, j): x in [xf_i, xf_{i+1}], y in [yc_{j-1}, yc_j]
    Xf, Yc = np.meshgrid(xf, yc, indexing="ij")             # (n+1, n+2)
    Pf = psi(Xf, Yc)
    fx_uy = Pf[:, 1:] - Pf[:, :-1]                          # (n+1, n+1)
    X, Y = np.meshgrid(xf, yc[1:-1], indexing="ij")         # (n+1, n)
    P = psi(X, Y)
    fy_uy = -(P[1:] - P[:-1])                               # (n, n)
    rate = 0.0
    if stream is not None:
        rate = max(np.abs(fx_ux).max() / (hx * hy) * 2, np.abs(fy_ux).max() / (hx * hy) * 2,
                   np.abs(fx_uy).max() / (hx * hy) * 2, np.abs(fy_uy).max() / (hx * hy) * 2)
    return _Advection(fx_ux, fy_ux, fx_uy, fy_uy, float(rate))


def _advect(u: VelocityField, adv: _Advection) -> tuple[NDArray, NDArray]:
    """Conservative upwind ``(b·∇)u`` at the interior unknowns."""
    hx, hy = u.grid.h
    area = hx * hy
    # u_x with odd ghost rows in y
    ux = u.ux
    ug = np.concatenate([-ux[:, :1], ux, -ux[:, -1:]], axis=1)          # (n+1, n+2)
    F = adv.fx_ux                                                        # (n, n) x-faces at centres
    flux_x = np.where(F > 0, F * ux[:-1], F * ux[1:])                   # from face i to i+1
    G = adv.fy_ux[1:-1]                                                  # (n-1, n+1) interior columns
    flux_y = np.where(G > 0, G * ug[1:-1, :-1], G * ug[1:-1, 1:])        # (n-1, n+1)
    ax = np.zeros_like(ux)
    ax[1:-1] = (flux_x[1:] - flux_x[:-1] + flux_y[:, 1:] - flux_y[:, :-1]) / area
    # u_y with odd ghost columns in x
    uy = u.uy
    vg = np.concatenate([-uy[:1], uy, -uy[-1:]], axis=0)                 # (n+2, n+1)
    Fx = adv.fx_uy[:, 1:-1]                                              # (n+1, n-1)
    flux_x = np.where(Fx > 0, Fx * vg[:-1, 1:-1], Fx * vg[1:, 1:-1])     # (n+1, n-1)
    Fy = adv.fy_uy                                                       # (n, n)
    flux_y = np.where(Fy > 0, Fy * uy[:, :-1], Fy * uy[:, 1:])           # (n, n)
    ay = np.zeros_like(uy)
    ay[:, 1:-1] = (flux_x[1:] - flux_x[:-1] + flux_y[:, 1:] - flux_y[:, :-1]) / area
    return ax, ay


# -- sparse operators -------------------------------------------------------------------

def _lap1d(n: int, h: float, kind: str) -> sp.csr_matrix:
    """1-D second difference: 'dirichlet_node' (unknowns strictly inside,
    zero ends), 'odd_ghost' (cell unknowns, value 0 at the wall), 'neumann'."""
    main = -2.0 * np.ones(n)
    off = np.ones(n - 1)
    if kind == "odd_ghost":
        main[0] = main[-1] = -3.0
    elif kind == "neumann":
        main[0] = main[-1] = -1.0
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h ** 2


def _laplacians(grid: FlowGrid):
    n = grid.n
    hx, hy = grid.h
    Ix, Iy = sp.identity(n - 1), sp.identity(n)
    Lux = sp.kron(_lap1d(n - 1, hx, "dirichlet_node"), Iy) + sp.kron(Ix, _lap1d(n, hy, "odd_ghost"))
    Luy = sp.kron(_lap1d(n, hx, "odd_ghost"), sp.identity(n - 1)) + sp.kron(Iy, _lap1d(n - 1, hy, "dirichlet_node"))
    Lp = sp.kron(_lap1d(n, hx, "neumann"), sp.identity(n)) + sp.kron(sp.identity(n), _lap1d(n, hy, "neumann"))
    return Lux.tocsr(), Luy.tocsr(), Lp.tocsr()


def _pcg(A: sp.csr_matrix, b: NDArray, x0: NDArray | None, atol: float, what: str,
         maxiter: int = 20000) -> NDArray:
    dinv = 1.0 / A.diagonal()
    M = LinearOperator(A.shape, matvec=lambda r: dinv * r)
    x, info = cg(A, b, x0=x0, rtol=0.0, atol=atol, M=M, maxiter=maxiter)
    if info != 0:
        raise LinearSolveFailure(f"CG for the {what} system did not converge (info={info})")
    return x


@dataclass
class OseenSolver:
    """Cached operators for fixed grid, viscosity, time step and ``b``."""

    grid: FlowGrid
    params: FlowParams
    dt: float
    incremental: bool = True
    _ops: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        Lux, Luy, Lp = _laplacians(self.grid)
        c = self.params.mu * self.dt
        self._ops["Aux"] = (sp.identity(Lux.shape[0]) - c * Lux).tocsr()
        self._ops["Auy"] = (sp.identity(Luy.shape[0]) - c * Luy).tocsr()
        self._ops["Ap"] = (-Lp).tocsr()
        self._ops["adv"] = _advection(self.grid, self.params.b_stream)
        rate = self._ops["adv"].max_rate
        if rate * self.dt > 1.0:
            raise StabilityViolation(f"dt={self.dt:g} violates the advective CFL limit {1.0 / rate:g}")

    def step(self, u: VelocityField, forcing: tuple[NDArray, NDArray] | None = None) -> VelocityField:
        n = self.grid.n
        hx, hy = self.grid.h
        dt = self.dt
        ax, ay = _advect(u, self._ops["adv"])
        gpx = np.zeros_like(u.ux)
        gpy = np.zeros_like(u.uy)
        if self.incremental:
            gpx[1:-1] = (u.p[1:] - u.p[:-1]) / hx
            gpy[:, 1:-1] = (u.p[:, 1:] - u.p[:, :-1]) / hy
        fx = np.zeros_like(u.ux) if forcing is None else forcing[0]
        fy = np.zeros_like(u.uy) if forcing is None else forcing[1]
        rx = (u.ux + dt * (fx - ax - gpx))[1:-1].ravel()
        ry = (u.uy + dt * (fy - ay - gpy))[:, 1:-1].ravel()
        scale = max(1.0, np.abs(rx).max(initial=0.0), np.abs(ry).max(initial=0.0))
        sx = _pcg(self._ops["Aux"], rx, u.ux[1:-1].ravel(), 1e-13 * scale, "x-momentum")
        sy = _pcg(self._ops["Auy"], ry, u.uy[:, 1:-1].ravel(), 1e-13 * scale, "y-momentum")
        ux = np.zeros_like(u.ux)
        uy = np.zeros_like(u.uy)
        ux[1:-1] = sx.reshape(n - 1, n)
        uy[:, 1:-1] = sy.reshape(n, n - 1)
        div = (ux[1:] - ux[:-1]) / hx + (uy[:, 1:] - uy[:, :-1]) / hy
        rhs = -(div - div.mean()).ravel() / dt
        phi = _pcg(self._ops["Ap"], rhs, None, 0.05 * DIV_TOL / dt, "pressure")
        phi = (phi - phi.mean()).reshape(n, n)
        ux[1:-1] -= dt * (phi[1:] - phi[:-1]) / hx
        uy[:, 1:-1] -= dt * (phi[:, 1:] - phi[:, :-1]) / hy
        p = u.p + phi if self.incremental else phi
        p = p - p.mean()
        return VelocityField(self.grid, ux, uy, p, u.t + dt)


def stress_divergence(K: NDArray[np.float64], grid: FlowGrid) -> NDArray[np.float64]:
    """Row-wise divergence ``(∇·𝕂)_a = Σ_b ∂_b 𝕂_ab`` of a cell tensor field.

    Centred differences inside, one-sided at the walls. ``K`` has shape
    ``(n, n, 2, 2)``; returns ``(n, n, 2)``.
    """
    hx, hy = grid.h
    dx = np.gradient(K, hx, axis=0, edge_order=1)
    dy = np.gradient(K, hy, axis=1, edge_order=1)
    return np.stack([dx[..., 0, 0] + dy[..., 0, 1], dx[..., 1, 0] + dy[..., 1, 1]], axis=-1)


def cell_to_faces(f: NDArray[np.float64]) -> tuple[NDArray, NDArray]:
    """Average a cell vector field ``(n, n, 2)`` onto interior MAC faces."""
    n = f.shape[0]
    fx = np.zeros((n + 1, n))
    fy = np.zeros((n, n + 1))
    fx[1:-1] = 0.5 * (f[1:, :, 0] + f[:-1, :, 0])
    fy[:, 1:-1] = 0.5 * (f[:, 1:, 1] + f[:, :-1, 1])
    return fx, fy


def oseen_step(u: VelocityField, params: FlowParams, dt: float, stress: NDArray | None = None,
               forcing: tuple[NDArray, NDArray] | None = None, solver: OseenSolver | None = None) -> VelocityField:
    """Advance the Oseen system one step with source ``∇·𝕂`` (or explicit face forcing).

    Raises
    ------
    LinearSolveFailure
        If a CG solve fails to converge.
    """
    solver = OseenSolver(u.grid, params, dt) if solver is None else solver
    if stress is not None:
        fx, fy = cell_to_faces(stress_divergence(stress, u.grid))
        if forcing is not None:
            fx, fy = fx + forcing[0], fy + forcing[1]
        forcing = (fx, fy)
    out = solver.step(u, forcing)
    div = float(np.abs(out.divergence()).max())
    if div > DIV_TOL:
        raise LinearSolveFailure(f"discrete divergence {div:.3e} exceeds {DIV_TOL:g}")
    return out


def initial_field(grid: FlowGrid, params: FlowParams) -> VelocityField:
    """Rest, or ``params.u0`` sampled at face centres and projected."""
    u = VelocityField.zeros(grid)
    if params.u0 is None:
        return u
    X, Y = grid.ux_points()
    u.ux = np.asarray(params.u0(np.stack([X, Y], -1).reshape(-1, 2), 0.0))[:, 0].reshape(X.shape)
    X, Y = grid.uy_points()
    u.uy = np.asarray(params.u0(np.stack([X, Y], -1).reshape(-1, 2), 0.0))[:, 1].reshape(X.shape)
    u.ux[0] = u.ux[-1] = 0.0
    u.uy[:, 0] = u.uy[:, -1] = 0.0
    return project(u)


def project(u: VelocityField) -> VelocityField:
    """Discrete Leray projection onto divergence-free fields."""
    g = u.grid
    n = g.n
    hx, hy = g.h
    _, _, Lp = _laplacians(g)
    div = u.divergence()
    phi = _pcg((-Lp).tocsr(), -(div - div.mean()).ravel(), None, 0.05 * DIV_TOL, "projection")
    phi = phi.reshape(n, n)
    out = u.copy()
    out.ux[1:-1] -= (phi[1:] - phi[:-1]) / hx
    out.uy[:, 1:-1] -= (phi[:, 1:] - phi[:, :-1]) / hy
    return out


def run_flow(grid: FlowGrid, params: FlowParams, dt: float, n_steps: int,
             stress_fn: Callable[[float], NDArray] | None = None,
             forcing_fn: Callable[[float], tuple[NDArray, NDArray]] | None = None,
             u_init: VelocityField | None = None, record_every: int = 0,
             incremental: bool = True) -> tuple[VelocityField, list[dict]]:
    """March ``n_steps`` steps; records time, energy and max divergence."""
    solver = OseenSolver(grid, params, dt, incremental)
    u = initial_field(grid, params) if u_init is None else u_init
    hist = []
    if record_every:
        hist.append({"t": u.t, "energy": u.energy(), "max_div": float(np.abs(u.divergence()).max())})
    for i in range(1, n_steps + 1):
        K = stress_fn(u.t) if stress_fn is not None else None
        F = forcing_fn(u.t + dt) if forcing_fn is not None else None
        u = oseen_step(u, params, dt, stress=K, forcing=F, solver=solver)
        if record_every and i % record_every == 0:
            hist.append({"t": u.t, "energy": u.energy(), "max_div": float(np.abs(u.divergence()).max())})
    return u, hist


# -- sampling ---------------------------------------------------------------------------

def _interp(values: NDArray, x0: float, y0: float, hx: float, hy: float, px: NDArray, py: NDArray) -> NDArray:
    """Bilinear interpolation on a regular lattice with origin ``(x0, y0)``."""
    fx = (px - x0) / hx
    fy = (py - y0) / hy
    i = np.clip(np.floor(fx).astype(np.int64), 0, values.shape[0] - 2)
    j = np.clip(np.floor(fy).astype(np.int64), 0, values.shape[1] - 2)
    tx = fx - i
    ty = fy - j
    return ((1 - tx) * (1 - ty) * values[i, j] + tx * (1 - ty) * values[i + 1, j]
            + (1 - tx) * ty * values[i, j + 1] + tx * ty * values[i + 1, j + 1])


def sample_velocity(u: VelocityField, x, tol: float | None = None) -> NDArray[np.float64]:
    """Bilinear interpolation of the staggered velocity at points ``(M, 2)``.

    Odd ghost values make the interpolant vanish exactly on the walls.

    Raises
    ------
    OutsideDomain
        If a point lies outside the box (beyond ``tol``).
    """
    g = u.grid
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if pts.shape[-1] != 2:
        raise ValueError("points must have two components")
    tol = 1e-12 * g.domain.diameter if tol is None else tol
    if np.any(pts < g.lo - tol) or np.any(pts > g.hi + tol):
        bad = pts[np.any((pts < g.lo - tol) | (pts > g.hi + tol), axis=1)][0]
        raise OutsideDomain(f"point {bad.tolist()} lies outside the flow domain")
    px = np.clip(pts[:, 0], g.lo[0], g.hi[0])
    py = np.clip(pts[:, 1], g.lo[1], g.hi[1])
    hx, hy = g.h
    uxg = np.concatenate([-u.ux[:, :1], u.ux, -u.ux[:, -1:]], axis=1)
    uyg = np.concatenate([-u.uy[:1], u.uy, -u.uy[-1:]], axis=0)
    vx = _interp(uxg, g.lo[0], g.lo[1] - 0.5 * hy, hx, hy, px, py)
    vy = _interp(uyg, g.lo[0] - 0.5 * hx, g.lo[1], hx, hy, px, py)
    out = np.stack([vx, vy], axis=-1)
    on_wall = (np.isclose(px, g.lo[0], rtol=0, atol=tol) | np.isclose(px, g.hi[0], rtol=0, atol=tol)
               | np.isclose(py, g.lo[1], rtol=0, atol=tol) | np.isclose(py, g.hi[1], rtol=0, atol=tol))
    out[on_wall] = 0.0
    return out.reshape(np.shape(x)[:-1] + (2,)) if np.ndim(x) > 1 else out[0]


# -- manufactured solution ----------------------------------------------------------------

def mms_solution(grid: FlowGrid, mu: float):
    """Decaying cellular flow with zero wall velocity and its forcing.

    Stream function ``e^{-t} cos²(πx/Lx) cos²(πy/Ly)`` on a centred box,
    pressure ``e^{-t} sin(πx/Lx) sin(πy/Ly)``. Returns callables
    ``exact(t) -> (ux, uy)`` and ``forcing(t) -> (fx, fy)`` on the MAC faces.
    """
    Lx, Ly = grid.hi - grid.lo
    ax, ay = np.pi / Lx, np.pi / Ly

    def vel(x, y):
        cx, sx_ = np.cos(ax * x), np.sin(ax * x)
        cy, sy_ = np.cos(ay * y), np.sin(ay * y)
        u = cx ** 2 * (-2 * ay * cy * sy_)
        v = -(-2 * ax * cx * sx_) * cy ** 2
        return u, v

    def lap(x, y):
        cx, cy = np.cos(ax * x), np.cos(ay * y)
        # u = -ay sin(2 ay y) cos²(ax x), v = ax sin(2 ax x) cos²(ay y)
        s2y, c2y = np.sin(2 * ay * y), np.cos(2 * ay * y)
        s2x, c2x = np.sin(2 * ax * x), np.cos(2 * ax * x)
        u_xx = -ay * s2y * (-2 * ax ** 2 * c2x)
        u_yy = 4 * ay ** 3 * s2y * cx ** 2
        v_xx = -4 * ax ** 3 * s2x * cy ** 2
        v_yy = ax * s2x * (-2 * ay ** 2 * c2y)
        return u_xx + u_yy, v_xx + v_yy

    def grad_p(x, y):
        return ax * np.cos(ax * x) * np.sin(ay * y), ay * np.sin(ax * x) * np.cos(ay * y)

    def exact(t):
        X, Y = grid.ux_points()
        ux = math.exp(-t) * vel(X, Y)[0]
        X, Y = grid.uy_points()
        uy = math.exp(-t) * vel(X, Y)[1]
        ux[0] = ux[-1] = 0.0
        uy[:, 0] = uy[:, -1] = 0.0
        return ux, uy

    def forcing(t):
        e = math.exp(-t)
        X, Y = grid.ux_points()
        fx = e * (-vel(X, Y)[0] - mu * lap(X, Y)[0] + grad_p(X, Y)[0])
        X, Y = grid.uy_points()
        fy = e * (-vel(X, Y)[1] - mu * lap(X, Y)[1] + grad_p(X, Y)[1])
        return fx, fy

    return exact, forcing


def mms_error(n: int, mu: float = 1.0, T: float = 0.05, dt_factor: float = 1.0,
              incremental: bool = True) -> dict:
    """``L²`` velocity error at ``T`` for the manufactured solution on ``n × n``."""
    grid = FlowGrid(ConvexDomain.box([0.0, 0.0], [1.0, 1.0]), n)
    exact, forcing = mms_solution(grid, mu)
    h = float(grid.h[0])
    steps = max(1, int(math.ceil(T / (dt_factor * h * h))))
    dt = T / steps
    u0 = VelocityField.zeros(grid)
    u0.ux, u0.uy = exact(0.0)
    u, hist = run_flow(grid, FlowParams(mu=mu), dt, steps, forcing_fn=forcing, u_init=u0,
                       record_every=1, incremental=incremental)
    ex, ey = exact(T)
    hx, hy = grid.h
    err = math.sqrt((np.sum((u.ux - ex) ** 2) + np.sum((u.uy - ey) ** 2)) * hx * hy)
    return {"n": n, "error": err, "steps": steps, "dt": dt,
            "max_div": max(hh["max_div"] for hh in hist)}
