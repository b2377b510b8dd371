"""Stochastic bead-spring chain dynamics.

Each chain has ``J+1`` beads at positions ``r_j ∈ Ω`` with velocities
``v_j``. The kinetic model (mass ``ε²``, unit friction and spring constant)
reads

    ε dr = v dt,
    ε dv = (𝓛r + u(r)) dt - ε⁻¹ v dt + sqrt(2β) dW,

with specular reflection of beads at ``∂Ω``. The overdamped model is

    dr = (𝓛r + u(r)) dt + sqrt(2β) dW

with mirror reflection of positions.

Implementation notes
--------------------
The kinetic step treats the drift ``(𝓛r + u)/ε`` as frozen over a step and
integrates the resulting linear SDE exactly: the new velocity and the
position increment are jointly Gaussian. This keeps the step stable and
consistent for any ``dt/ε²``. Gaussian increments come from a Philox
generator keyed by the ensemble seed whose high counter word is the step
index; row ``i`` of each block is consumed by the chain with stream id ``i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol

import numpy as np
from numpy.typing import NDArray

from . import _accel
from ._accel import njit, prange
from .errors import StepRejected
from .geometry import BOX, ConvexDomain

VelocitySampler = Callable[[NDArray[np.float64], float], NDArray[np.float64]]


class _Sampler(Protocol):
    def __call__(self, x: NDArray[np.float64], t: float) -> NDArray[np.float64]: ...


def zero_velocity(x: NDArray[np.float64], t: float = 0.0) -> NDArray[np.float64]:
    """Velocity sampler for ``u ≡ 0``."""
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ChainParams:
    """Chain model parameters.

    Parameters
    ----------
    J : int
        Number of springs (``J+1`` beads).
    d : int
        Spatial dimension.
    eps : float
        Small-mass parameter, bead mass is ``eps**2``.
    beta : float
        Temperature (noise intensity).
    H : float
        Hookean spring constant used for the stress.
    """

    J: int = 1
    d: int = 1
    eps: float = 0.5
    beta: float = 1.0
    H: float = 1.0

    def __post_init__(self):
        if self.J < 1:
            raise ValueError("J must be >= 1")
        if self.d not in (1, 2, 3):
            raise ValueError("d must be 1, 2 or 3")
        for name in ("eps", "beta", "H"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def n_beads(self) -> int:
        return self.J + 1


@dataclass
class Ensemble:
    """``N`` independent chains.

    ``r`` and ``v`` have shape ``(N, J+1, d)``. ``stream_ids`` assigns each
    chain its row of every Gaussian block, so relabelling chains together
    with their ids leaves trajectories unchanged.
    """

    r: NDArray[np.float64]
    v: NDArray[np.float64]
    seed: int
    t: float = 0.0
    step: int = 0
    stream_ids: NDArray[np.int64] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.r = np.ascontiguousarray(self.r, dtype=np.float64)
        self.v = np.ascontiguousarray(self.v, dtype=np.float64)
        if self.r.ndim != 3 or self.r.shape != self.v.shape:
            raise ValueError("r and v must both have shape (N, J+1, d)")
        if self.stream_ids is None:
            self.stream_ids = np.arange(self.r.shape[0], dtype=np.int64)
        self.stream_ids = np.asarray(self.stream_ids, dtype=np.int64)
        if self.stream_ids.shape != (self.r.shape[0],):
            raise ValueError("one stream id per chain")

    @property
    def N(self) -> int:
        return self.r.shape[0]

    def copy(self) -> "Ensemble":
        return replace(self, r=self.r.copy(), v=self.v.copy(), stream_ids=self.stream_ids.copy())

    def permuted(self, perm) -> "Ensemble":
        perm = np.asarray(perm)
        return replace(self, r=self.r[perm].copy(), v=self.v[perm].copy(),
                       stream_ids=self.stream_ids[perm].copy())

    @property
    def springs(self) -> NDArray[np.float64]:
        """Spring vectors ``q_j = r_{j+1} - r_j``, shape ``(N, J, d)``."""
        return np.diff(self.r, axis=1)

    @property
    def centers(self) -> NDArray[np.float64]:
        return self.r.mean(axis=1)


ChainState = Ensemble  # a single chain is an ensemble with N = 1


def connectivity_apply(r) -> NDArray[np.float64]:
    """Apply the chain connectivity operator ``𝓛`` bead-wise.

    ``(𝓛r)_1 = r_2 - r_1``, ``(𝓛r)_j = r_{j-1} - 2 r_j + r_{j+1}``,
    ``(𝓛r)_{J+1} = r_J - r_{J+1}``. Works on arrays of shape
    ``(..., J+1, d)``.
    """
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    if r.shape[-2] < 2:
        return out
    dq = np.diff(r, axis=-2)
    out[..., :-1, :] += dq
    out[..., 1:, :] -= dq
    return out


def connectivity_matrix(J: int) -> NDArray[np.float64]:
    """Scalar ``(J+1)×(J+1)`` matrix of ``𝓛`` (acts identically per component)."""
    n = J + 1
    A = np.zeros((n, n))
    for j in range(n - 1):
        A[j, j] -= 1.0
        A[j, j + 1] += 1.0
        A[j + 1, j + 1] -= 1.0
        A[j + 1, j] += 1.0
    return A


# -- random numbers -----------------------------------------------------------

_STEP_PURPOSE = 0
_INIT_PURPOSE = 1


def _generator(seed: int, purpose: int, counter: int) -> np.random.Generator:
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, purpose], dtype=np.uint64)
    # high counter word: each step owns a disjoint block of 2**192 draws
    ctr = np.array([0, 0, 0, int(counter)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=ctr))


def gaussian_block(seed: int, step: int, stream_ids, n_beads: int, d: int, n_draws: int,
                   purpose: int = _STEP_PURPOSE) -> NDArray[np.float64]:
    """Standard normals of shape ``(n_draws, N, n_beads, d)`` for one step."""
    stream_ids = np.asarray(stream_ids)
    n_rows = int(stream_ids.max()) + 1 if stream_ids.size else 0
    z = _generator(seed, purpose, step).standard_normal((n_draws, n_rows, n_beads, d))
    if n_rows == stream_ids.size and np.array_equal(stream_ids, np.arange(n_rows)):
        return z
    return z[:, stream_ids]


# -- ensemble construction ----------------------------------------------------

def init_ensemble(params: ChainParams, domain: ConvexDomain, N: int, seed: int,
                  region: tuple | None = None, velocities: str = "maxwellian") -> Ensemble:
    """Chains with beads independently uniform in ``Ω`` (or a sub-box).

    Parameters
    ----------
    region : (lo, hi), optional
        Sub-box of ``Ω`` to sample bead positions from (box domains).
    velocities : {"maxwellian", "zero"}
        Maxwellian draws have variance ``beta`` per component.
    """
    B, d = params.n_beads, params.d
    ids = np.arange(N, dtype=np.int64)
    z = _generator(seed, _INIT_PURPOSE, 0).random((N, B, d))
    if domain.kind == "box":
        lo, hi = (domain.lo, domain.hi) if region is None else map(np.asarray, region)
        r = lo + (hi - lo) * z
    else:
        r = np.empty((N, B, d))
        gen = _generator(seed, _INIT_PURPOSE, 1)
        R = domain.radius
        for n in range(N):
            for j in range(B):
                while True:
                    p = gen.uniform(-R, R, d)
                    if p @ p <= R * R:
                        break
                r[n, j] = p
    if velocities == "maxwellian":
        v = math.sqrt(params.beta) * _generator(seed, _INIT_PURPOSE, 2).standard_normal((N, B, d))
    elif velocities == "zero":
        v = np.zeros((N, B, d))
    else:
        raise ValueError(f"unknown velocity initialisation {velocities!r}")
    return Ensemble(r=r, v=v, seed=seed, stream_ids=ids)


# -- kinetic step coefficients ------------------------------------------------

def ou_coefficients(dt: float, eps: float, beta: float) -> NDArray[np.float64]:
    """Coefficients of the exact frozen-drift step.

    With ``γ = ε⁻²`` and ``E = exp(-γ dt)``:
    ``v' = E v + c2 a + sv z1`` and ``∫v = c2 v + c3 a + cx z1 + sx z2``
    where ``a`` is the frozen acceleration.
    Returns ``[E, c2, c3, sv, cx, sx]``.
    """
    gamma = 1.0 / eps ** 2
    x = gamma * dt
    E = math.exp(-x)
    one_m_E = -math.expm1(-x)
    c2 = one_m_E / gamma
    c3 = (x - one_m_E) / gamma ** 2
    sigma2 = 2.0 * beta / eps ** 2
    var_v = beta * (-math.expm1(-2.0 * x))
    if x < 1e-3:
        f = x ** 3 / 3.0 - x ** 4 / 4.0 + 7.0 * x ** 5 / 60.0
    else:
        f = x - 2.0 * one_m_E + 0.5 * (-math.expm1(-2.0 * x))
    var_x = sigma2 / gamma ** 3 * f
    cov = sigma2 / (2.0 * gamma ** 2) * one_m_E ** 2
    sv = math.sqrt(var_v)
    cx = cov / sv if sv > 0 else 0.0
    sx = math.sqrt(max(var_x - cx * cx, 0.0))
    return np.array([E, c2, c3, sv, cx, sx])


# -- compiled kernels -----------------------------------------------------------

@njit
def _reflect_bead_numba(r, v, p0, n, j, dom, lo, hi, radius, max_refl, has_v):
    """Reflect bead (n, j) back into the domain in place; returns reflection count."""
    d = r.shape[2]
    cnt = 0
    if dom == 0:
        for k in range(d):
            x = r[n, j, k]
            while x < lo[k] or x > hi[k]:
                if x > hi[k]:
                    x = 2.0 * hi[k] - x
                else:
                    x = 2.0 * lo[k] - x
                if has_v:
                    v[n, j, k] = -v[n, j, k]
                cnt += 1
                if cnt > max_refl:
                    return cnt
            r[n, j, k] = x
        return cnt
    R2 = radius * radius
    while True:
        s = 0.0
        for k in range(d):
            s += r[n, j, k] * r[n, j, k]
        if s <= R2:
            return cnt
        a = 0.0
        b = 0.0
        c = 0.0
        for k in range(d):
            dk = r[n, j, k] - p0[k]
            a += dk * dk
            b += p0[k] * dk
            c += p0[k] * p0[k]
        c -= R2
        disc = b * b - a * c
        if disc < 0.0:
            disc = 0.0
        tt = (-b + math.sqrt(disc)) / a
        if tt < 0.0:
            tt = 0.0
        if tt > 1.0:
            tt = 1.0
        rn = 0.0
        vn = 0.0
        for k in range(d):
            pe = p0[k] + tt * (r[n, j, k] - p0[k])
            p0[k] = pe
        nrm = 0.0
        for k in range(d):
            nrm += p0[k] * p0[k]
        nrm = math.sqrt(nrm)
        for k in range(d):
            rn += (r[n, j, k] - p0[k]) * p0[k] / nrm
            if has_v:
                vn += v[n, j, k] * p0[k] / nrm
        for k in range(d):
            r[n, j, k] -= 2.0 * rn * p0[k] / nrm
            if has_v:
                v[n, j, k] -= 2.0 * vn * p0[k] / nrm
        cnt += 1
        if cnt > max_refl:
            return cnt


@njit
def _kinetic_chain(r, v, U, z1, z2, c, inv_eps, drift, dom, lo, hi, radius, max_refl, n, acc, start):
    """Advance chain ``n`` in place; returns 1 if it needed too many reflections.

    ``acc`` and ``start`` are ``(N, J+1, d)`` scratch arrays.
    """
    B, d = r.shape[1], r.shape[2]
    E, c2, c3, sv, cx, sx = c[0], c[1], c[2], c[3], c[4], c[5]
    for j in range(B):
        for k in range(d):
            a = U[n, j, k]
            if drift:
                if j > 0:
                    a += r[n, j - 1, k] - r[n, j, k]
                if j < B - 1:
                    a += r[n, j + 1, k] - r[n, j, k]
            acc[n, j, k] = a * inv_eps
    for j in range(B):
        p0 = start[n, j]
        for k in range(d):
            v0 = v[n, j, k]
            a = acc[n, j, k]
            p0[k] = r[n, j, k]
            v[n, j, k] = E * v0 + c2 * a + sv * z1[n, j, k]
            r[n, j, k] += (c2 * v0 + c3 * a + cx * z1[n, j, k] + sx * z2[n, j, k]) * inv_eps
        if dom == 0:
            cnt = 0
            for k in range(d):
                x = r[n, j, k]
                while x < lo[k] or x > hi[k]:
                    x = 2.0 * hi[k] - x if x > hi[k] else 2.0 * lo[k] - x
                    v[n, j, k] = -v[n, j, k]
                    cnt += 1
                    if cnt > max_refl:
                        return 1
                r[n, j, k] = x
        elif _reflect_bead_numba(r, v, p0, n, j, dom, lo, hi, radius, max_refl, True) > max_refl:
            return 1
    return 0


@njit
def _overdamped_chain(r, U, z, dt, noise_amp, drift, dom, lo, hi, radius, max_refl, n, inc, start):
    B, d = r.shape[1], r.shape[2]
    for j in range(B):
        for k in range(d):
            a = U[n, j, k]
            if drift:
                if j > 0:
                    a += r[n, j - 1, k] - r[n, j, k]
                if j < B - 1:
                    a += r[n, j + 1, k] - r[n, j, k]
            inc[n, j, k] = dt * a + noise_amp * z[n, j, k]
    for j in range(B):
        p0 = start[n, j]
        for k in range(d):
            p0[k] = r[n, j, k]
            r[n, j, k] += inc[n, j, k]
        if dom == 0:
            cnt = 0
            for k in range(d):
                x = r[n, j, k]
                while x < lo[k] or x > hi[k]:
                    x = 2.0 * hi[k] - x if x > hi[k] else 2.0 * lo[k] - x
                    cnt += 1
                    if cnt > max_refl:
                        return 1
                r[n, j, k] = x
        elif _reflect_bead_numba(r, r, p0, n, j, dom, lo, hi, radius, max_refl, False) > max_refl:
            return 1
    return 0


@njit(parallel=True)
def _kinetic_numba(r, v, U, z1, z2, c, inv_eps, drift, dom, lo, hi, radius, max_refl):
    N = r.shape[0]
    status = np.zeros(N, dtype=np.int64)
    acc = np.empty_like(r)
    start = np.empty_like(r)
    for n in prange(N):
        status[n] = _kinetic_chain(r, v, U, z1, z2, c, inv_eps, drift, dom, lo, hi, radius, max_refl, n,
                                   acc, start)
    for n in range(N):
        if status[n]:
            return n
    return -1


@njit(parallel=True)
def _overdamped_numba(r, U, z, dt, noise_amp, drift, dom, lo, hi, radius, max_refl):
    N = r.shape[0]
    status = np.zeros(N, dtype=np.int64)
    inc = np.empty_like(r)
    start = np.empty_like(r)
    for n in prange(N):
        status[n] = _overdamped_chain(r, U, z, dt, noise_amp, drift, dom, lo, hi, radius, max_refl, n,
                                      inc, start)
    for n in range(N):
        if status[n]:
            return n
    return -1


# -- numpy fallbacks ------------------------------------------------------------

def _reflect_numpy(r, v, p0, dom, lo, hi, radius, max_refl):
    """Vectorised reflection; returns first offending chain or -1."""
    if dom == BOX:
        cnt = np.zeros(r.shape[:2], dtype=np.int64)
        for k in range(r.shape[2]):
            x = r[:, :, k]
            while True:
                above = x > hi[k]
                below = x < lo[k]
                bad = above | below
                if not bad.any():
                    break
                x = np.where(above, 2.0 * hi[k] - x, np.where(below, 2.0 * lo[k] - x, x))
                if v is not None:
                    v[:, :, k] = np.where(bad, -v[:, :, k], v[:, :, k])
                cnt += bad
                if (cnt > max_refl).any():
                    return int(np.argwhere(cnt > max_refl)[0, 0])
            r[:, :, k] = x
        return -1
    cnt = np.zeros(r.shape[:2], dtype=np.int64)
    p0 = p0.copy()
    while True:
        out = np.einsum("nbk,nbk->nb", r, r) > radius * radius
        if not out.any():
            return -1
        idx = np.nonzero(out)
        p, q = p0[idx], r[idx]
        dv = q - p
        a = np.einsum("mk,mk->m", dv, dv)
        b = np.einsum("mk,mk->m", p, dv)
        c = np.einsum("mk,mk->m", p, p) - radius * radius
        tt = np.clip((-b + np.sqrt(np.maximum(b * b - a * c, 0.0))) / a, 0.0, 1.0)
        pe = p + tt[:, None] * dv
        nrm = pe / np.linalg.norm(pe, axis=1)[:, None]
        rem = q - pe
        r[idx] = q - 2.0 * np.einsum("mk,mk->m", rem, nrm)[:, None] * nrm
        if v is not None:
            vv = v[idx]
            v[idx] = vv - 2.0 * np.einsum("mk,mk->m", vv, nrm)[:, None] * nrm
        p0[idx] = pe
        cnt[idx] += 1
        if (cnt > max_refl).any():
            return int(np.argwhere(cnt > max_refl)[0, 0])


def _kinetic_numpy(r, v, U, z1, z2, c, inv_eps, drift, dom, lo, hi, radius, max_refl):
    E, c2, c3, sv, cx, sx = c
    a = U + connectivity_apply(r) if drift else U.copy()
    a *= inv_eps
    p0 = r.copy()
    v0 = v.copy()
    v[...] = E * v0 + c2 * a + sv * z1
    r += (c2 * v0 + c3 * a + cx * z1 + sx * z2) * inv_eps
    return _reflect_numpy(r, v, p0, dom, lo, hi, radius, max_refl)


def _overdamped_numpy(r, U, z, dt, noise_amp, drift, dom, lo, hi, radius, max_refl):
    a = U + connectivity_apply(r) if drift else U
    p0 = r.copy()
    r += dt * a + noise_amp * z
    return _reflect_numpy(r, None, p0, dom, lo, hi, radius, max_refl)


kinetic_kernel = _accel.pick(_kinetic_numba, _kinetic_numpy)
overdamped_kernel = _accel.pick(_overdamped_numba, _overdamped_numpy)


# -- public stepping API ------------------------------------------------------------

def _sample_u(u: VelocitySampler | None, r: NDArray, t: float) -> NDArray[np.float64]:
    if u is None:
        return np.zeros_like(r)
    shape = r.shape
    return np.ascontiguousarray(np.asarray(u(r.reshape(-1, shape[-1]), t), dtype=float).reshape(shape))


def step_kinetic(ens: Ensemble, params: ChainParams, domain: ConvexDomain, dt: float,
                 u: VelocitySampler | None = None, *, noise: bool = True, drift: bool = True,
                 max_reflections: int = 8, kernel=None) -> Ensemble:
    """Advance every chain of the kinetic model by ``dt``.

    Velocities follow the exact Ornstein-Uhlenbeck update with the drift
    ``(𝓛r + u)/ε`` frozen at the start of the step; positions receive the
    exact integral of that velocity path over the step. Beads that leave
    ``Ω`` are reflected specularly.

    Raises
    ------
    StepRejected
        If a bead needs more than ``max_reflections`` reflections.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    kernel = kinetic_kernel if kernel is None else kernel
    out = ens.copy()
    B, d = params.n_beads, params.d
    if noise:
        z = gaussian_block(ens.seed, ens.step, ens.stream_ids, B, d, 2)
        z1, z2 = np.ascontiguousarray(z[0]), np.ascontiguousarray(z[1])
    else:
        z1 = z2 = np.zeros_like(out.r)
    c = ou_coefficients(dt, params.eps, params.beta)
    U = _sample_u(u, out.r, ens.t)
    dom, lo, hi, radius = domain.kernel_params()
    bad = kernel(out.r, out.v, U, z1, z2, c, 1.0 / params.eps, drift, dom, lo, hi, radius,
                 max_reflections)
    if bad >= 0:
        raise StepRejected(f"chain {bad} exceeded {max_reflections} reflections in one step "
                           f"(dt={dt:g}); reduce dt", chain=int(bad))
    out.t = ens.t + dt
    out.step = ens.step + 1
    return out


def step_overdamped(ens: Ensemble, params: ChainParams, domain: ConvexDomain, dt: float,
                    u: VelocitySampler | None = None, *, noise: bool = True, drift: bool = True,
                    max_reflections: int = 8, kernel=None) -> Ensemble:
    """Euler-Maruyama step of the overdamped model with mirror reflection.

    Velocities are carried along unchanged.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    kernel = overdamped_kernel if kernel is None else kernel
    out = ens.copy()
    B, d = params.n_beads, params.d
    if noise:
        z = np.ascontiguousarray(gaussian_block(ens.seed, ens.step, ens.stream_ids, B, d, 1)[0])
    else:
        z = np.zeros_like(out.r)
    U = _sample_u(u, out.r, ens.t)
    dom, lo, hi, radius = domain.kernel_params()
    bad = kernel(out.r, U, z, dt, math.sqrt(2.0 * params.beta * dt), drift, dom, lo, hi, radius,
                 max_reflections)
    if bad >= 0:
        raise StepRejected(f"chain {bad} exceeded {max_reflections} reflections in one step "
                           f"(dt={dt:g}); reduce dt", chain=int(bad))
    out.t = ens.t + dt
    out.step = ens.step + 1
    return out


def run_ensemble(ens: Ensemble, params: ChainParams, domain: ConvexDomain, dt: float,
                 n_steps: int, u: VelocitySampler | None = None, *, mode: str = "kinetic",
                 record_every: int = 0, callback: Callable[[Ensemble], None] | None = None,
                 **step_kw) -> tuple[Ensemble, list[Ensemble]]:
    """Advance ``n_steps`` steps.

    Returns the final ensemble and the snapshots taken every
    ``record_every`` steps (the initial state included when recording).
    ``callback`` is invoked on every recorded snapshot.
    """
    if mode not in ("kinetic", "overdamped"):
        raise ValueError(f"mode must be 'kinetic' or 'overdamped', got {mode!r}")
    stepper = step_kinetic if mode == "kinetic" else step_overdamped
    snaps: list[Ensemble] = []

    def record(e):
        snaps.append(e)
        if callback is not None:
            callback(e)

    if record_every:
        record(ens)
    cur = ens
    for i in range(1, n_steps + 1):
        cur = stepper(cur, params, domain, dt, u, **step_kw)
        if record_every and i % record_every == 0:
            record(cur)
    return cur, snaps


# -- empirical moments --------------------------------------------------------------

@dataclass
class BinGrid:
    """Uniform bins on a box, ``n`` per coordinate of ``Ω^{J+1}``."""

    lo: NDArray[np.float64]
    hi: NDArray[np.float64]
    n: int

    @classmethod
    def for_chains(cls, domain: ConvexDomain, params: ChainParams, n: int) -> "BinGrid":
        lo, hi = domain.bounding_box
        B = params.n_beads
        return cls(np.tile(lo, B), np.tile(hi, B), n)

    @property
    def ndim(self) -> int:
        return self.lo.size

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.ndim

    @property
    def widths(self) -> NDArray[np.float64]:
        return (self.hi - self.lo) / self.n

    def index(self, pts: NDArray[np.float64]) -> NDArray[np.int64]:
        """Flat bin index of points with shape ``(M, ndim)``."""
        ij = np.floor((pts - self.lo) / self.widths).astype(np.int64)
        ij = np.clip(ij, 0, self.n - 1)
        return np.ravel_multi_index(tuple(ij.T), self.shape)

    def centers(self, axis: int) -> NDArray[np.float64]:
        h = self.widths[axis]
        return self.lo[axis] + h * (np.arange(self.n) + 0.5)


@dataclass
class EmpiricalMoments:
    """Per-bin moments of an ensemble on ``Ω^{J+1}``.

    ``rho_bar`` holds bin probabilities (sums to 1). ``flux`` is
    ``mean(v)/ε`` and ``second`` is ``mean(v ⊗ v)`` over chains in the bin,
    with velocities flattened to length ``P = (J+1)d``. Empty bins carry NaN
    and ``empty`` is True there.
    """

    t: float
    grid: BinGrid
    rho_bar: NDArray[np.float64]
    flux: NDArray[np.float64]
    second: NDArray[np.float64]
    counts: NDArray[np.int64]

    @property
    def empty(self) -> NDArray[np.bool_]:
        return self.counts == 0


def empirical_moments(ens: Ensemble, params: ChainParams, grid: BinGrid) -> EmpiricalMoments:
    """Histogram ``ϱ̄``, conditional flux and conditional second moment per bin."""
    N = ens.N
    P = params.n_beads * params.d
    pts = ens.r.reshape(N, P)
    vel = ens.v.reshape(N, P)
    idx = grid.index(pts)
    nb = int(np.prod(grid.shape))
    counts = np.bincount(idx, minlength=nb)
    safe = np.where(counts > 0, counts, 1)
    mean_v = np.stack([np.bincount(idx, weights=vel[:, a], minlength=nb) for a in range(P)], axis=1)
    outer = np.einsum("na,nb->nab", vel, vel).reshape(N, P * P)
    mean_vv = np.stack([np.bincount(idx, weights=outer[:, a], minlength=nb) for a in range(P * P)],
                       axis=1)
    mean_v = mean_v / safe[:, None]
    mean_vv = mean_vv / safe[:, None]
    mean_v[counts == 0] = np.nan
    mean_vv[counts == 0] = np.nan
    shp = grid.shape
    return EmpiricalMoments(
        t=ens.t, grid=grid,
        rho_bar=(counts / N).reshape(shp),
        flux=(mean_v / params.eps).reshape(shp + (P,)),
        second=mean_vv.reshape(shp + (P, P)),
        counts=counts.reshape(shp),
    )
