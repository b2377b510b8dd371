"""Kramers polymer stress from chain ensembles and configuration densities."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .chain_dynamics import BinGrid, ChainParams, Ensemble
from .errors import GridMismatch
from .geometry import ConfigurationDomain, ConvexDomain


def hookean_force(q, H: float = 1.0) -> NDArray[np.float64]:
    """Linear spring force ``F(q) = H q``."""
    return H * np.asarray(q, dtype=float)


def stress_bound(params: ChainParams, domain: ConvexDomain) -> float:
    """``J · H · sup_{q ∈ D} |q|²``, an upper bound on ``|𝕂|_F``."""
    return params.J * params.H * ConfigurationDomain(domain).sup_norm_sq


def fluid_grid(domain: ConvexDomain, n: int) -> BinGrid:
    """``n`` cells per direction on the bounding box of ``Ω``."""
    lo, hi = domain.bounding_box
    return BinGrid(lo, hi, n)


@dataclass
class StressField:
    """Cell-wise stress tensor ``𝕂`` of shape ``grid.shape + (d, d)``.

    ``weights`` records how many chains (or how much mass) each cell
    aggregates, so refined fields can be re-aggregated consistently.
    ``stderr`` holds entry-wise Monte Carlo standard errors when known.
    """

    grid: BinGrid
    tensor: NDArray[np.float64]
    weights: NDArray[np.float64]
    t: float = 0.0
    stderr: NDArray[np.float64] | None = None

    @property
    def frobenius(self) -> NDArray[np.float64]:
        return np.sqrt(np.sum(self.tensor ** 2, axis=(-2, -1)))

    def coarsen(self, factor: int) -> "StressField":
        """Weighted average over blocks of ``factor^d`` child cells."""
        g = self.grid
        if g.n % factor:
            raise GridMismatch(f"factor {factor} does not divide n={g.n}")
        d = g.ndim
        shp = []
        for _ in range(d):
            shp += [g.n // factor, factor]
        ax = tuple(range(1, 2 * d, 2))
        w = self.weights.reshape(shp)
        wt = (self.tensor * self.weights[..., None, None]).reshape(shp + [d, d])
        W = w.sum(axis=ax)
        S = wt.sum(axis=ax)
        safe = np.where(W > 0, W, 1.0)
        K = np.where((W > 0)[..., None, None], S / safe[..., None, None], 0.0)
        return StressField(BinGrid(g.lo, g.hi, g.n // factor), K, W, self.t)

    def check_invariants(self, bound: float | None = None, tol: float = 1e-12) -> dict:
        """Symmetry, positive semi-definiteness and the sup bound per cell."""
        K = self.tensor
        asym = float(np.max(np.abs(K - np.swapaxes(K, -1, -2)))) if K.size else 0.0
        eig = np.linalg.eigvalsh(0.5 * (K + np.swapaxes(K, -1, -2)))
        scale = max(1.0, float(np.max(np.abs(K))) if K.size else 1.0)
        out = {
            "max_asymmetry": asym,
            "min_eigenvalue": float(eig.min()) if eig.size else 0.0,
            "max_frobenius": float(self.frobenius.max()) if K.size else 0.0,
            "symmetric": asym <= tol * scale,
            "psd": (float(eig.min()) if eig.size else 0.0) >= -tol * scale,
        }
        if bound is not None:
            out["bound"] = bound
            out["within_bound"] = out["max_frobenius"] <= bound * (1 + tol)
        return out


def chain_stress(ens: Ensemble, H: float) -> NDArray[np.float64]:
    """Per-chain ``Σ_j F(q_j) ⊗ q_j``, shape ``(N, d, d)``."""
    q = ens.springs
    return np.einsum("njk,njl->nkl", hookean_force(q, H), q)


def kramers_from_ensemble(ens: Ensemble, params: ChainParams, grid: BinGrid,
                          n_density: float = 1.0) -> StressField:
    """Conditional expectation of ``Σ_j F(q_j) ⊗ q_j`` given the centre of mass.

    Chains are binned by centre of mass on ``grid``; empty cells get ``𝕂 = 0``
    and a zero weight. The result is scaled by the number density
    ``n_density``.
    """
    d = params.d
    if grid.ndim != d:
        raise GridMismatch(f"fluid grid has {grid.ndim} axes, chains live in d={d}")
    S = chain_stress(ens, params.H).reshape(ens.N, d * d)
    idx = grid.index(ens.centers)
    nb = int(np.prod(grid.shape))
    counts = np.bincount(idx, minlength=nb).astype(float)
    s1 = np.stack([np.bincount(idx, weights=S[:, a], minlength=nb) for a in range(d * d)], axis=1)
    s2 = np.stack([np.bincount(idx, weights=S[:, a] ** 2, minlength=nb) for a in range(d * d)], axis=1)
    safe = np.where(counts > 0, counts, 1.0)
    mean = s1 / safe[:, None]
    var = np.where(counts[:, None] > 1,
                   (s2 - counts[:, None] * mean ** 2) / np.maximum(counts[:, None] - 1, 1), 0.0)
    se = np.sqrt(np.maximum(var, 0.0) / safe[:, None])
    K = n_density * mean.reshape(grid.shape + (d, d))
    return StressField(grid, K, counts.reshape(grid.shape), ens.t,
                       n_density * se.reshape(grid.shape + (d, d)))


@dataclass(frozen=True)
class Quadrature:
    """Nodes ``(n, J, d)`` and weights ``(n,)`` on ``D^J``."""

    nodes: NDArray[np.float64]
    weights: NDArray[np.float64]

    @property
    def J(self) -> int:
        return self.nodes.shape[1]

    @property
    def d(self) -> int:
        return self.nodes.shape[2]


def _tensor_rule(x1: list[NDArray], w1: list[NDArray], J: int, d: int) -> Quadrature:
    pts = np.array(list(itertools.product(*x1)))
    wts = np.prod(np.array(list(itertools.product(*w1))), axis=1)
    return Quadrature(pts.reshape(-1, J, d), wts)


def gauss_legendre_quadrature(D: ConfigurationDomain, J: int, n: int) -> Quadrature:
    """Tensor Gauss-Legendre rule with ``n`` points per axis on the box ``D^J``."""
    if D.kind != "box":
        raise ValueError("tensor rules need a box configuration domain")
    x, w = np.polynomial.legendre.leggauss(n)
    hw = D.half_widths
    x1, w1 = [], []
    for _ in range(J):
        for k in range(len(hw)):
            x1.append(hw[k] * x)
            w1.append(hw[k] * w)
    return _tensor_rule(x1, w1, J, len(hw))


def midpoint_quadrature(D: ConfigurationDomain, J: int, n: int) -> Quadrature:
    """Tensor midpoint rule with ``n`` cells per axis on the box ``D^J``."""
    if D.kind != "box":
        raise ValueError("tensor rules need a box configuration domain")
    hw = D.half_widths
    x1, w1 = [], []
    for _ in range(J):
        for k in range(len(hw)):
            h = 2 * hw[k] / n
            x1.append(-hw[k] + h * (np.arange(n) + 0.5))
            w1.append(np.full(n, h))
    return _tensor_rule(x1, w1, J, len(hw))


def kramers_macro(psi, quad: Quadrature, H: float = 1.0, n_density: float = 1.0,
                  x=None) -> NDArray[np.float64]:
    """Kramers stress from a configuration density, ratio form.

    ``𝕂(x) = n ∫ Σ_j F(q_j) ⊗ q_j ψ(x, q) dq / ∫ ψ(x, q) dq`` with the
    convention ``0/0 = 0``.

    Parameters
    ----------
    psi : callable or ndarray
        Either ``psi(x, q)`` returning values for every (x-point, node)
        pair, or an array of shape ``(n_x, n_nodes)`` already evaluated at
        the quadrature nodes.
    quad : Quadrature
        Rule on ``D^J``.
    x : ndarray, optional
        Points ``(n_x, d)`` passed to a callable ``psi``; a single point if
        omitted.

    Returns
    -------
    ndarray of shape ``(n_x, d, d)``.
    """
    d = quad.d
    if callable(psi):
        xs = np.zeros((1, d)) if x is None else np.asarray(x, dtype=float).reshape(-1, d)
        vals = np.asarray(psi(xs, quad.nodes), dtype=float).reshape(len(xs), -1)
    else:
        vals = np.atleast_2d(np.asarray(psi, dtype=float))
    if vals.shape[1] != len(quad.weights):
        raise ValueError("ψ values do not match the quadrature nodes")
    q = quad.nodes
    S = np.einsum("mjk,mjl->mkl", hookean_force(q, H), q).reshape(len(q), d * d)
    wv = vals * quad.weights[None, :]
    num = wv @ S
    den = wv.sum(axis=1)
    out = np.zeros_like(num)
    nz = den != 0
    out[nz] = num[nz] / den[nz, None]
    return n_density * out.reshape(-1, d, d)


def gaussian_psi(beta: float) -> Callable:
    """Configuration Maxwellian ``ψ(x, q) ∝ exp(-|q|²/(2β))`` independent of ``x``."""
    def psi(x, q):
        s = np.sum(np.asarray(q) ** 2, axis=(-2, -1))
        return np.broadcast_to(np.exp(-s / (2 * beta)), (len(x), len(s)))
    return psi
