"""Physical and configuration domains for bead-spring chains.

A chain of ``J+1`` beads lives in ``Ω^{J+1}`` where ``Ω ⊂ R^d`` is a bounded
convex set. Boxes and balls ("disks") are supported. Every domain built
through the constructors is recentred so its centroid sits at the origin,
which keeps the configuration domain ``D = Ω - Ω`` symmetric.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from numpy.typing import NDArray

from .errors import BeadOutsideDomain, ConfigError, PointNotOnBoundary

BOX = 0
DISK = 1


@dataclass(frozen=True)
class ConvexDomain:
    """Bounded convex domain ``Ω`` in ``R^d``.

    Parameters
    ----------
    kind : {"box", "disk"}
        Axis-aligned box or Euclidean ball.
    dim : int
        Spatial dimension, 1 to 3.
    lo, hi : ndarray, optional
        Box corners (box only).
    radius : float, optional
        Ball radius (disk only).
    shift : ndarray
        Translation that was subtracted to put the centroid at the origin.
    """

    kind: str
    dim: int
    lo: NDArray[np.float64] | None = None
    hi: NDArray[np.float64] | None = None
    radius: float | None = None
    shift: NDArray[np.float64] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.kind == "box":
            lo = np.asarray(self.lo, dtype=float).reshape(self.dim)
            hi = np.asarray(self.hi, dtype=float).reshape(self.dim)
            if np.any(hi <= lo):
                raise ValueError("box needs hi > lo in every dimension")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
        elif self.kind == "disk":
            if self.radius is None or not self.radius > 0:
                raise ValueError("disk needs a positive radius")
            object.__setattr__(self, "radius", float(self.radius))
        else:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.shift is None:
            object.__setattr__(self, "shift", np.zeros(self.dim))

    # -- constructors -----------------------------------------------------
    @classmethod
    def box(cls, lo, hi) -> "ConvexDomain":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        c = 0.5 * (lo + hi)
        return cls("box", lo.size, lo - c, hi - c, shift=c)

    @classmethod
    def disk(cls, radius: float, dim: int = 2, center=None) -> "ConvexDomain":
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        return cls("disk", dim, radius=radius, shift=c)

    @classmethod
    def from_config(cls, cfg: Mapping, path: str = "domain") -> "ConvexDomain":
        """Build from ``{kind, extents | radius, dim}``."""
        allowed = {"kind", "extents", "radius", "dim"}
        for key in cfg:
            if key not in allowed:
                raise ConfigError(f"{path}.{key}", "unknown key")
        kind = cfg.get("kind", "box")
        dim = int(cfg.get("dim", 1))
        if kind == "box":
            ext = cfg.get("extents")
            if ext is None:
                raise ConfigError(f"{path}.extents", "required for a box")
            ext = np.asarray(ext, dtype=float).reshape(-1, 2)
            if ext.shape[0] != dim:
                raise ConfigError(f"{path}.extents", f"expected {dim} [lo, hi] pairs")
            try:
                return cls.box(ext[:, 0], ext[:, 1])
            except ValueError as exc:
                raise ConfigError(f"{path}.extents", str(exc)) from None
        if kind == "disk":
            if "radius" not in cfg:
                raise ConfigError(f"{path}.radius", "required for a disk")
            try:
                return cls.disk(float(cfg["radius"]), dim)
            except ValueError as exc:
                raise ConfigError(f"{path}.radius", str(exc)) from None
        raise ConfigError(f"{path}.kind", f"unknown domain kind {kind!r}")

    def to_config(self) -> dict:
        if self.kind == "box":
            ext = np.stack([self.lo + self.shift, self.hi + self.shift], axis=1)
            return {"kind": "box", "extents": ext.tolist(), "dim": self.dim}
        return {"kind": "disk", "radius": self.radius, "dim": self.dim}

    # -- derived quantities -----------------------------------------------
    @property
    def diameter(self) -> float:
        if self.kind == "box":
            return float(np.linalg.norm(self.hi - self.lo))
        return 2.0 * self.radius

    @property
    def bounding_box(self) -> tuple[NDArray, NDArray]:
        if self.kind == "box":
            return self.lo.copy(), self.hi.copy()
        r = np.full(self.dim, self.radius)
        return -r, r

    @property
    def code(self) -> int:
        return BOX if self.kind == "box" else DISK

    def kernel_params(self) -> tuple[int, NDArray, NDArray, float]:
        """Flat description consumed by compiled kernels."""
        lo, hi = self.bounding_box
        return self.code, lo, hi, float(self.radius or 0.0)

    def signed_distance(self, z) -> NDArray | float:
        return signed_distance(self, z)

    def contains(self, z, tol: float | None = None) -> NDArray | bool:
        tol = 1e-12 * self.diameter if tol is None else tol
        return np.asarray(signed_distance(self, z)) <= tol


@dataclass(frozen=True)
class ConfigurationDomain:
    """Spring-vector domain ``D = Ω - Ω`` (symmetric about 0).

    ``L`` is the half-width of the smallest cube ``[-L, L]^d`` containing ``D``.
    """

    omega: ConvexDomain

    @property
    def kind(self) -> str:
        return self.omega.kind

    @property
    def half_widths(self) -> NDArray[np.float64]:
        if self.omega.kind == "box":
            return self.omega.hi - self.omega.lo
        return np.full(self.omega.dim, 2.0 * self.omega.radius)

    @property
    def L(self) -> float:
        return float(np.max(self.half_widths))

    @property
    def sup_norm_sq(self) -> float:
        """``sup_{q ∈ D} |q|^2``."""
        if self.omega.kind == "box":
            return float(np.sum(self.half_widths ** 2))
        return float((2.0 * self.omega.radius) ** 2)

    def contains(self, q, tol: float = 1e-12) -> NDArray | bool:
        q = np.asarray(q, dtype=float)
        if self.omega.kind == "box":
            return np.all(np.abs(q) <= self.half_widths * (1 + tol), axis=-1)
        return np.linalg.norm(q, axis=-1) <= 2.0 * self.omega.radius * (1 + tol)


def signed_distance(domain: ConvexDomain, z) -> NDArray | float:
    """Signed distance to ``∂Ω``: negative inside, zero on the boundary.

    Vectorised over leading axes of ``z`` (last axis has length ``d``).
    """
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != domain.dim:
        raise ValueError(f"point has dimension {z.shape[-1]}, domain has {domain.dim}")
    if domain.kind == "disk":
        out = np.linalg.norm(z, axis=-1) - domain.radius
    else:
        below = domain.lo - z
        above = z - domain.hi
        excess = np.maximum(below, above)
        outside = np.linalg.norm(np.maximum(excess, 0.0), axis=-1)
        inside = np.minimum(np.max(excess, axis=-1), 0.0)
        out = outside + inside
    return float(out) if out.ndim == 0 else out


def outward_normal(domain: ConvexDomain, z, tol: float | None = None) -> NDArray[np.float64]:
    """Unit outward normal at a boundary point.

    At box edges and corners the face with the smallest distance wins; ties go
    to the lowest dimension index, then to the low face.

    Raises
    ------
    PointNotOnBoundary
        If ``|signed_distance(z)| > tol`` (default ``1e-12 * diameter``).
    """
    z = np.asarray(z, dtype=float).reshape(domain.dim)
    tol = 1e-12 * domain.diameter if tol is None else tol
    sd = signed_distance(domain, z)
    if abs(sd) > tol:
        raise PointNotOnBoundary(f"point {z.tolist()} is at distance {sd:.3e} from the boundary")
    n = np.zeros(domain.dim)
    if domain.kind == "disk":
        return z / np.linalg.norm(z)
    best, best_k, best_s = np.inf, 0, 1.0
    for k in range(domain.dim):
        for dist, sgn in ((abs(z[k] - domain.lo[k]), -1.0), (abs(domain.hi[k] - z[k]), 1.0)):
            if dist < best:
                best, best_k, best_s = dist, k, sgn
    n[best_k] = best_s
    return n


def specular_reflect(v, j: int, n) -> NDArray[np.float64]:
    """Reflect bead ``j``'s velocity across the plane with unit normal ``n``.

    ``v`` has shape ``(J+1, d)``; only row ``j`` changes. The map is an
    involution and preserves ``|v_j|``.
    """
    out = np.array(v, dtype=float, copy=True)
    n = np.asarray(n, dtype=float)
    out[j] = out[j] - 2.0 * np.dot(out[j], n) * n
    return out


def center_of_mass(r, domain: ConvexDomain | None = None, tol: float | None = None):
    """Mean bead position ``x = (J+1)^{-1} Σ_j r_j``.

    ``r`` has shape ``(..., J+1, d)``. If ``domain`` is given every bead must
    lie in its closure, otherwise :class:`BeadOutsideDomain` is raised.
    """
    r = np.asarray(r, dtype=float)
    if domain is not None:
        tol = 1e-12 * domain.diameter if tol is None else tol
        sd = np.asarray(signed_distance(domain, r))
        if np.any(sd > tol):
            bad = np.argwhere(sd > tol)[0]
            raise BeadOutsideDomain(f"bead at index {tuple(bad.tolist())} lies outside the domain")
    return r.mean(axis=-2)
