"""Structured grids, node masks, and the divergence-form Laplacian.

The lab works on uniform tensor grids in d = 1..4 dimensions.  A geometry is
a boolean mask of *active* nodes inside the bounding box; staircase
approximations of balls and graph subdomains are masks.  Boundary conditions
are encoded per ghost node (an inactive node next to an active one):

* Neumann (default): ghost value mirrors the interior value, so the flux
  through the face is zero;
* Dirichlet: ghost value is minus the interior value, so the linear
  interpolant vanishes at the face midpoint.

The Laplacian is assembled in divergence form, as a difference of face
fluxes.  On a pure-Neumann mask the node sum of the Laplacian telescopes to
zero exactly, which is what makes explicit diffusion steps conserve mass to
roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .errors import DomainError, GeometryError, ParameterError, SolverError

MAX_NODES = 2 ** 24


# ---------------------------------------------------------------------------
# grid spec


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid: ``n[i]`` nodes spanning ``extent[i]`` per axis.

    The spacing ``h = extent[i] / (n[i] - 1)`` must agree across axes.
    ``origin`` places the first node, so node (j1,...,jd) sits at
    ``origin + h * (j1,...,jd)``.
    """

    dim: int
    extent: tuple[float, ...]
    n: tuple[int, ...]
    h: float
    origin: tuple[float, ...]

    @classmethod
    def make(cls, extent, n, origin=None) -> "GridSpec":
        if isinstance(n, int):
            n = (n,) * (len(extent) if isinstance(extent, (tuple, list)) else 1)
        n = tuple(int(k) for k in n)
        if isinstance(extent, (int, float)):
            extent = (float(extent),) * len(n)
        extent = tuple(float(e) for e in extent)
        dim = len(n)
        if dim != len(extent):
            raise ParameterError("extent and n must have the same length")
        if not 1 <= dim <= 4:
            raise ParameterError(f"dim must be in 1..4, got {dim}")
        if any(k < 2 for k in n):
            raise ParameterError("need at least 2 nodes per axis")
        total = math.prod(n)
        if total > MAX_NODES:
            raise ParameterError(f"node count {total} exceeds cap {MAX_NODES}")
        hs = [e / (k - 1) for e, k in zip(extent, n)]
        h = hs[0]
        if any(abs(hh - h) > 1e-12 * h for hh in hs):
            raise ParameterError(f"anisotropic spacing not supported: {hs}")
        if origin is None:
            origin = (0.0,) * dim
        origin = tuple(float(o) for o in origin)
        return cls(dim, extent, n, h, origin)

    def axis_coords(self, ax: int) -> np.ndarray:
        return self.origin[ax] + self.h * np.arange(self.n[ax])

    def node_count(self) -> int:
        return math.prod(self.n)

    def meshgrid(self) -> list[np.ndarray]:
        """Full coordinate arrays, one per axis, each of shape ``n``."""
        axes = [self.axis_coords(ax) for ax in range(self.dim)]
        return list(np.meshgrid(*axes, indexing="ij"))


def _shift_down(a: np.ndarray, ax: int) -> np.ndarray:
    """out[..., i, ...] = a[..., i+1, ...], zero/False-padded at the top."""
    out = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    src[ax] = slice(1, None)
    dst[ax] = slice(None, -1)
    out[tuple(dst)] = a[tuple(src)]
    return out


def _shift_up(a: np.ndarray, ax: int) -> np.ndarray:
    """out[..., i, ...] = a[..., i-1, ...], zero/False-padded at the bottom."""
    out = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    src[ax] = slice(None, -1)
    dst[ax] = slice(1, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


# ---------------------------------------------------------------------------
# masks


class DomainMask:
    """Active-node mask plus boundary classes for the ghost nodes.

    ``active`` flags the nodes carrying field values.  ``dirichlet`` flags
    inactive nodes whose faces toward active neighbours enforce a zero trace;
    every other ghost face (including the bounding-box edge) is Neumann.
    The active set must be edge-connected.
    """

    def __init__(self, grid: GridSpec, active: np.ndarray,
                 dirichlet: np.ndarray | None = None):
        active = np.asarray(active, dtype=bool)
        if active.shape != grid.n:
            raise GeometryError(f"mask shape {active.shape} != grid {grid.n}")
        if not active.any():
            raise GeometryError("mask has no active nodes")
        if dirichlet is None:
            dirichlet = np.zeros(grid.n, dtype=bool)
        else:
            dirichlet = np.asarray(dirichlet, dtype=bool) & ~active
        _, ncomp = ndimage.label(active)
        if ncomp != 1:
            raise GeometryError(
                f"active set must be edge-connected, found {ncomp} components")
        self.grid = grid
        self.active = active
        self.dirichlet = dirichlet
        self.active_count = int(active.sum())
        self._stencil = None
        self._coords = None
        self._worst_row = None

    # -- node bookkeeping ---------------------------------------------------

    def node_coords(self) -> np.ndarray:
        """(active_count, dim) array of active node coordinates."""
        if self._coords is None:
            mesh = self.grid.meshgrid()
            self._coords = np.stack([m[self.active] for m in mesh], axis=1)
        return self._coords

    def scatter(self, values: np.ndarray, fill: float = 0.0) -> np.ndarray:
        full = np.full(self.grid.n, fill, dtype=float)
        full[self.active] = values
        return full

    def gather(self, full: np.ndarray) -> np.ndarray:
        return full[self.active]

    def nearest_node(self, point: Sequence[float]) -> tuple[int, ...]:
        """Index of the active node closest to ``point``."""
        coords = self.node_coords()
        i = int(np.argmin(np.sum((coords - np.asarray(point)) ** 2, axis=1)))
        flat = np.flatnonzero(self.active.ravel())[i]
        return tuple(int(k) for k in np.unravel_index(flat, self.grid.n))

    def ball_nodes(self, center: Sequence[float], radius: float) -> np.ndarray:
        """Boolean over active nodes: Euclidean distance to center <= radius."""
        coords = self.node_coords()
        d2 = np.sum((coords - np.asarray(center, dtype=float)) ** 2, axis=1)
        return d2 <= radius * radius * (1 + 1e-12)

    # -- stencil ------------------------------------------------------------

    def _face_masks(self):
        """Per axis: (both-active, hi-ghost-dirichlet, lo-ghost-dirichlet)."""
        if self._stencil is None:
            st = []
            for ax in range(self.grid.dim):
                act_hi = _shift_down(self.active, ax)
                dir_hi = _shift_down(self.dirichlet, ax)
                pair = self.active & act_hi
                dhi = self.active & dir_hi
                dlo = self.dirichlet & act_hi
                st.append((pair, dhi if dhi.any() else None,
                           dlo if dlo.any() else None))
            self._stencil = st
        return self._stencil

    def laplacian_full(self, vals: np.ndarray) -> np.ndarray:
        """Divergence-form Laplacian on a full-box array (zeros off-mask)."""
        out = np.zeros_like(vals)
        for ax, (pair, dhi, dlo) in enumerate(self._face_masks()):
            hi = _shift_down(vals, ax)
            flux = np.where(pair, hi - vals, 0.0)
            if dhi is not None:
                flux = np.where(dhi, -2.0 * vals, flux)
            if dlo is not None:
                flux = np.where(dlo, 2.0 * hi, flux)
            out += flux
            out -= _shift_up(flux, ax)
        out /= self.grid.h ** 2
        out[~self.active] = 0.0
        return out

    def stencil_row_max(self) -> float:
        """Largest diagonal weight of -Laplacian*h^2 over active nodes.

        Interior faces count 1, Dirichlet faces count 2; this drives the
        explicit-Euler stability limit.
        """
        if self._worst_row is None:
            row = np.zeros(self.grid.n)
            for ax, (pair, dhi, dlo) in enumerate(self._face_masks()):
                row += pair.astype(float)
                row += _shift_up(pair.astype(float), ax)
                if dhi is not None:
                    row += 2.0 * dhi.astype(float)
                if dlo is not None:
                    row += 2.0 * _shift_up(dlo.astype(float), ax)
            self._worst_row = float(row[self.active].max())
        return self._worst_row


def full_mask(grid: GridSpec) -> DomainMask:
    """All nodes active, Neumann box."""
    return DomainMask(grid, np.ones(grid.n, dtype=bool))


def ball_mask(grid: GridSpec, center: Sequence[float], radius: float,
              boundary: str = "neumann") -> DomainMask:
    """Staircase ball; ghost faces all Neumann or all Dirichlet."""
    mesh = grid.meshgrid()
    d2 = sum((m - c) ** 2 for m, c in zip(mesh, center))
    active = d2 <= radius * radius
    if boundary == "neumann":
        dirichlet = None
    elif boundary == "dirichlet":
        dirichlet = ~active
    else:
        raise ParameterError(f"unknown boundary class {boundary!r}")
    return DomainMask(grid, active, dirichlet)


def graph_domain_mask(grid: GridSpec, radius: float,
                      phi: Callable[[np.ndarray], np.ndarray] | float,
                      center: Sequence[float] | None = None) -> DomainMask:
    """Ball cut by a graph: active where |x-c| < R and x_d - c_d > phi(x').

    phi maps the first d-1 coordinates (relative to the center) to a height;
    in 1d it is a constant.  Ghosts below the graph are Neumann, the rest of
    the sphere is Dirichlet.  The admissibility constraints
    sup phi <= R/(11 d) and Lip(phi) <= 1/(11 d) are the caller's business
    (checked by the estimates that need them, not here).
    """
    dim = grid.dim
    if center is None:
        center = (0.0,) * dim
    center = np.asarray(center, dtype=float)
    mesh = grid.meshgrid()
    rel = [m - c for m, c in zip(mesh, center)]
    d2 = sum(r ** 2 for r in rel)
    if callable(phi):
        if dim == 1:
            height = float(np.asarray(phi(np.zeros((1, 0)))).ravel()[0])
            below = rel[0] <= height
        else:
            prime = np.stack([r.ravel() for r in rel[:-1]], axis=1)
            height = np.asarray(phi(prime), dtype=float).reshape(grid.n)
            below = rel[-1] <= height
    else:
        below = rel[-1] <= float(phi)
    active = (d2 < radius * radius) & ~below
    dirichlet = ~active & ~below
    return DomainMask(grid, active, dirichlet)


def restrict_mask(mask: DomainMask, keep: np.ndarray) -> DomainMask:
    """Submask of the active set (used for verification subdomains)."""
    keep_full = np.zeros(mask.grid.n, dtype=bool)
    keep_full[mask.active] = keep
    return DomainMask(mask.grid, mask.active & keep_full)


# ---------------------------------------------------------------------------
# fields and trajectories


class Field:
    """Values on the active nodes of a mask.  Immutable after construction."""

    __slots__ = ("mask", "values")

    def __init__(self, mask: DomainMask, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape != (mask.active_count,):
            raise ParameterError(
                f"expected {mask.active_count} values, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ParameterError("field values must be finite")
        values = values.copy()
        values.flags.writeable = False
        self.mask = mask
        self.values = values

    @property
    def grid(self) -> GridSpec:
        return self.mask.grid

    @classmethod
    def constant(cls, mask: DomainMask, c: float) -> "Field":
        return cls(mask, np.full(mask.active_count, float(c)))

    @classmethod
    def from_function(cls, mask: DomainMask, fn) -> "Field":
        coords = mask.node_coords()
        vals = np.asarray(fn(coords), dtype=float).reshape(-1)
        return cls(mask, vals)

    @classmethod
    def from_full(cls, mask: DomainMask, full: np.ndarray) -> "Field":
        return cls(mask, np.asarray(full, dtype=float)[mask.active])

    def to_full(self, fill: float = np.nan) -> np.ndarray:
        return self.mask.scatter(self.values, fill=fill)


class Trajectory:
    """Equally spaced time frames of fields on one mask."""

    def __init__(self, mask: DomainMask, times: np.ndarray, values: np.ndarray):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.shape != (times.size, mask.active_count):
            raise ParameterError("frame matrix shape mismatch")
        self.mask = mask
        self.times = times
        self.values = values

    @property
    def grid(self) -> GridSpec:
        return self.mask.grid

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def dt(self) -> float:
        if self.times.size < 2:
            return 0.0
        return float(self.times[1] - self.times[0])

    @property
    def n_frames(self) -> int:
        return int(self.times.size)

    def frame(self, k: int) -> Field:
        return Field(self.mask, self.values[k])

    def window(self, t_lo: float, t_hi: float) -> np.ndarray:
        """Indices of frames with t in (t_lo, t_hi], with roundoff slack."""
        eps = 1e-9 * max(1.0, abs(t_hi - t_lo))
        idx = np.nonzero((self.times > t_lo + eps) & (self.times <= t_hi + eps))[0]
        return idx


@dataclass(frozen=True)
class ParabolicCylinder:
    """Backward space-time cylinder (t0 - shape*R^2, t0] x B(x0, R)."""

    t0: float
    x0: tuple[float, ...]
    radius: float
    shape: float

    @property
    def window(self) -> float:
        return self.shape * self.radius ** 2

    def shrink(self, factor: float = 4.0) -> "ParabolicCylinder":
        """Radius divided by ``factor``; the time window shrinks by factor^2."""
        return ParabolicCylinder(self.t0, self.x0, self.radius / factor,
                                 self.shape)


# ---------------------------------------------------------------------------
# operators


def laplacian_neumann(field: Field) -> Field:
    """Divergence-form Laplacian with the mask's ghost rules."""
    full = field.mask.scatter(field.values)
    lap = field.mask.laplacian_full(full)
    return Field(field.mask, field.mask.gather(lap))


def stable_dt(mask: DomainMask, diffusion: float = 1.0,
              safety: float = 0.9) -> float:
    """Largest explicit-Euler step kept positive on this mask.

    For an interior node the limit is h^2/(2 d diffusion); Dirichlet faces
    tighten it because their ghost contributes -2u to the flux.
    """
    if diffusion <= 0:
        raise ParameterError("diffusion must be positive")
    return safety * mask.grid.h ** 2 / (mask.stencil_row_max() * diffusion)


def gradient(field: Field) -> np.ndarray:
    """(active_count, dim) nodal gradient.

    Central differences where both axis neighbours are active, one-sided
    where only one is, zero where the node is isolated along the axis.
    """
    mask = field.mask
    h = mask.grid.h
    full = mask.scatter(field.values)
    act = mask.active
    out = np.zeros(mask.grid.n + (mask.grid.dim,))
    for ax in range(mask.grid.dim):
        hi_v = _shift_down(full, ax)
        lo_v = _shift_up(full, ax)
        hi_a = _shift_down(act, ax)
        lo_a = _shift_up(act, ax)
        g = np.zeros_like(full)
        both = hi_a & lo_a
        g[both] = (hi_v[both] - lo_v[both]) / (2 * h)
        only_hi = hi_a & ~lo_a
        g[only_hi] = (hi_v[only_hi] - full[only_hi]) / h
        only_lo = lo_a & ~hi_a
        g[only_lo] = (full[only_lo] - lo_v[only_lo]) / h
        out[..., ax] = g
    return out[act]


def poisson_neumann(rhs: Field, rtol: float = 1e-10,
                    maxiter: int | None = None) -> Field:
    """Solve laplacian(u) = rhs on the mask with Neumann ghosts.

    The right-hand side must have (near) zero node mean; the solution is
    returned with zero node mean.  Conjugate gradients on the mean-zero
    subspace; the relative residual is checked to 1e-9.
    """
    mask = rhs.mask
    b = rhs.values
    scale = float(np.max(np.abs(b))) if b.size else 0.0
    if scale == 0.0:
        return Field.constant(mask, 0.0)
    mean = float(np.mean(b))
    if abs(mean) > 1e-10 * scale:
        raise ParameterError(
            f"rhs node mean {mean:.3e} not zero (relative tol 1e-10)")
    b = b - mean

    def apply_neg_lap(x: np.ndarray) -> np.ndarray:
        full = mask.scatter(x)
        y = -mask.gather(mask.laplacian_full(full))
        return y - y.mean()

    # plain CG on the mean-zero subspace (the operator is SPD there)
    x = np.zeros_like(b)
    r = -b.copy()          # residual of (-lap) x = -b
    r -= r.mean()
    p = r.copy()
    rs = float(r @ r)
    b_norm = float(np.linalg.norm(b))
    if maxiter is None:
        maxiter = 40 * mask.active_count
    for _ in range(maxiter):
        if math.sqrt(rs) <= rtol * b_norm:
            break
        Ap = apply_neg_lap(p)
        alpha = rs / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    resid = np.linalg.norm(apply_neg_lap(x) + b) / b_norm
    if resid > 1e-9:
        raise SolverError(f"poisson CG stalled: relative residual {resid:.3e}")
    x -= x.mean()
    return Field(mask, x)
