"""One-sided interpolation machinery: mollified averages, the cut-ball
estimate, a Besicovitch-style covering, and the global inequality

    ||u||_{L^q(Omega)} <= C ||w||^(1-theta) ||grad u||_{L^p}^theta
                          + C ||w||,
    theta = (2 - alpha - d/q) / (3 - alpha - d/p),

for pairs with 0 <= u <= lap w (one-sided: no equality required).  The norm
on w is C^alpha for alpha in (0,1) and the sup norm for alpha = 0.

The verification domain Omega is a node subset strictly inside the carrier
mask, so every Laplacian and gradient stencil uses real neighbours; the
mask's reflection ghosts never enter.  Constants are calibrated on half of
a randomized case family and frozen for the other half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.stats import qmc

from .errors import (GeometryError, ParameterError, PreconditionError,
                     SamplingError)
from .grid import DomainMask, Field, gradient
from .report import EstimateReport

_MOLLIFIER_CACHE: dict = {}


def _bump(s):
    """exp(-1/(1-s)) on s < 1, vanishing smoothly at s = 1 (s = 16|x|^2)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside]))
    return out


def _bump_d1(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1.0
    si = s[inside]
    out[inside] = -np.exp(-1.0 / (1.0 - si)) / (1.0 - si) ** 2
    return out


def _bump_d2(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1.0
    si = s[inside]
    g = np.exp(-1.0 / (1.0 - si))
    out[inside] = g / (1.0 - si) ** 4 - 2.0 * g / (1.0 - si) ** 3
    return out


def _sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


class Mollifier:
    """Normalized radial bump c_d exp(-1/(1-|4x|^2)) supported in B(0,1/4).

    The normalization, ||lap chi||_{L^1}, and the double integral
    integral integral |xi-eta|^alpha |lap chi(xi) - lap chi(eta)| are
    computed once per dimension by radial quadrature (the double integral
    by a deterministic low-discrepancy rule) and cached.
    """

    SUPPORT = 0.25

    def __new__(cls, dim: int):
        if dim in _MOLLIFIER_CACHE:
            return _MOLLIFIER_CACHE[dim]
        self = super().__new__(cls)
        _MOLLIFIER_CACHE[dim] = self
        return self

    def __init__(self, dim: int):
        if getattr(self, "_ready", False):
            return
        if dim < 1 or dim > 4:
            raise ParameterError("dimension must be 1..4")
        self.dim = dim
        area = _sphere_area(dim)
        mass, _ = integrate.quad(
            lambda r: _bump(16.0 * r * r) * r ** (dim - 1),
            0.0, self.SUPPORT, limit=200)
        self.normalization = 1.0 / (area * mass)
        lap_l1, _ = integrate.quad(
            lambda r: abs(self._lap_radial(r)) * r ** (dim - 1),
            0.0, self.SUPPORT, limit=200)
        self.lap_l1 = area * lap_l1
        self._ready = True

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """chi at points of shape (..., dim)."""
        pts = np.asarray(points, dtype=float)
        s = 16.0 * (pts * pts).sum(axis=-1)
        return self.normalization * _bump(s)

    def _lap_radial(self, r):
        # lap chi = c [64 s g''(s) + 32 d g'(s)] with s = 16 r^2
        s = 16.0 * np.asarray(r, dtype=float) ** 2
        return self.normalization * (64.0 * s * _bump_d2(s)
                                     + 32.0 * self.dim * _bump_d1(s))

    def laplacian(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        r = np.sqrt((pts * pts).sum(axis=-1))
        return self._lap_radial(r)

    def alpha_pair_integral(self, alpha: float, n_points: int = 1 << 15) -> float:
        """integral integral |xi-eta|^alpha |lap chi(xi)-lap chi(eta)|,
        a dimensional constant (informational; low-discrepancy rule)."""
        if not 0.0 < alpha < 1.0:
            raise ParameterError("alpha must be in (0,1)")
        sampler = qmc.Halton(d=2 * self.dim, scramble=False)
        pts = (sampler.random(n_points) - 0.5) * (2 * self.SUPPORT)
        xi, eta = pts[:, :self.dim], pts[:, self.dim:]
        dist = np.sqrt(((xi - eta) ** 2).sum(axis=1))
        vals = dist ** alpha * np.abs(self.laplacian(xi) - self.laplacian(eta))
        volume = (2 * self.SUPPORT) ** (2 * self.dim)
        return float(vals.mean() * volume)


def star_center(mask: DomainMask, point, radius: float,
                inward=None) -> np.ndarray:
    """A core point for B(point, radius): the point itself when the
    mollifier support B(point, R/4) lies inside the mask, otherwise the
    point shifted inward by R/2 along ``inward`` (default: toward the
    centroid of the active nodes within B(point, R))."""
    point = np.asarray(point, dtype=float)
    coords = mask.node_coords()
    d2 = ((coords - point) ** 2).sum(axis=1)
    if _support_inside(mask, point, radius):
        return point
    near = d2 <= radius * radius
    if inward is None:
        if not near.any():
            raise GeometryError("no active nodes near the requested ball")
        inward = coords[near].mean(axis=0) - point
    inward = np.asarray(inward, dtype=float)
    norm = float(np.linalg.norm(inward))
    if norm <= 0:
        raise GeometryError("cannot determine an inward direction")
    shifted = point + (radius / 2.0) * inward / norm
    if not _support_inside(mask, shifted, radius):
        raise GeometryError(
            f"no admissible core: support of radius {radius / 4:.4g} exits "
            f"the mask even after the inward shift")
    return shifted


def _support_inside(mask: DomainMask, center, radius: float) -> bool:
    """All box nodes within R/4 of center active (support of chi_R)."""
    center = np.asarray(center, dtype=float)
    d2 = np.zeros(mask.grid.n)
    for ax in range(mask.grid.dim):
        shape = [1] * mask.grid.dim
        shape[ax] = -1
        d2 = d2 + (mask.grid.axis_coords(ax).reshape(shape)
                   - center[ax]) ** 2
    support = d2 <= (radius / 4.0) ** 2 * (1 + 1e-12)
    return bool(np.all(mask.active[support]))


def mollified_average(u: Field, center, radius: float,
                      moll: Mollifier | None = None) -> float:
    """Node quadrature of integral u(center - x) chi_R(x) dx.

    The discrete stencil weights are renormalized to unit mass so constants
    average exactly; a support node outside the mask raises GeometryError.
    """
    mask = u.mask
    if moll is None:
        moll = Mollifier(mask.grid.dim)
    center = np.asarray(center, dtype=float)
    if center.shape != (mask.grid.dim,):
        raise ParameterError("center must have one coordinate per axis")
    if not _support_inside(mask, center, radius):
        raise GeometryError(
            f"mollifier support B(center, {radius / 4:.4g}) exits the mask")
    coords = mask.node_coords()
    rel = (center - coords) / radius          # chi_R(c - y) = R^-d chi((c-y)/R)
    weights = moll(rel)
    total = float(weights.sum())
    if total <= 0:
        raise SamplingError(
            f"radius {radius:.4g} resolves no nodes (h = {mask.grid.h:.4g})")
    return float((weights * u.values).sum() / total)


# ---------------------------------------------------------------------------
# cut-ball estimate


def _holder_subset(coords: np.ndarray, vals: np.ndarray, alpha: float,
                   cap: int = 4000) -> float:
    """C^alpha norm (sup + seminorm) over a node subset; alpha = 0 is the
    sup norm.  Subsets beyond ``cap`` nodes are thinned deterministically."""
    sup = float(np.max(np.abs(vals))) if vals.size else 0.0
    if alpha == 0.0 or vals.size < 2:
        return sup
    if vals.size > cap:
        keep = np.random.default_rng(12345).choice(vals.size, cap,
                                                   replace=False)
        keep.sort()
        coords, vals = coords[keep], vals[keep]
    semi = 0.0
    for lo in range(0, vals.size - 1, 256):
        hi = min(lo + 256, vals.size - 1)
        block = coords[lo:hi, None, :] - coords[None, lo + 1:, :]
        dist = np.sqrt((block ** 2).sum(axis=-1))
        diff = np.abs(vals[lo:hi, None] - vals[None, lo + 1:])
        ok = dist > 0
        if ok.any():
            semi = max(semi, float(np.max(diff[ok] / dist[ok] ** alpha)))
    return sup + semi


def _check_one_sided(u: Field, lap_w: np.ndarray, selector: np.ndarray):
    slack = 1e-10
    uv = u.values
    bad_lo = selector & (uv < -slack)
    bad_hi = selector & (uv > lap_w + slack)
    if bad_lo.any() or bad_hi.any():
        idx = int(np.argmax(bad_lo if bad_lo.any() else bad_hi))
        x = u.mask.node_coords()[idx]
        raise PreconditionError(
            f"one-sided condition 0 <= u <= lap w fails at node {idx} "
            f"(x = {np.array2string(x, precision=4)}): u = {uv[idx]:.6g}, "
            f"lap w = {lap_w[idx]:.6g}")


def _lap_of(w: Field) -> np.ndarray:
    m = w.mask
    return m.gather(m.laplacian_full(m.scatter(w.values)))


def _lap_values(lap_w, w: Field) -> np.ndarray:
    if lap_w is None:
        return _lap_of(w)
    if isinstance(lap_w, Field):
        return lap_w.values
    return np.asarray(lap_w, dtype=float)


def cut_ball_check(u: Field, w: Field, center, radii, p: float, q: float,
                   alpha: float = 0.0, C: float | None = None,
                   domain: np.ndarray | None = None,
                   lap_w: np.ndarray | None = None,
                   expected_slopes: dict | None = None,
                   slope_tol: float = 0.1) -> EstimateReport:
    """Localized bound on the cut ball B(center, R) within the domain:

        ||u||_{L^q(B)} <= C [ R^(1 - d(1/p - 1/q)) ||grad u||_{L^p(B)}
                              + R^(-2 + alpha + d/q) ||w||_{C^alpha(B)} ]

    evaluated across a ladder of radii.  Calibration mode (C None) fits the
    constant; otherwise the inequality gates at every rung.  When
    ``expected_slopes`` maps any of lhs/grad_term/w_term to a target, the
    log-log regression slope across the ladder must match within
    ``slope_tol``.
    """
    mask = u.mask
    if w.mask is not mask:
        raise ParameterError("u and w must share one mask")
    if p < 1 or q < 1 or not (0.0 <= alpha < 1.0):
        raise ParameterError("need p, q >= 1 and alpha in [0, 1)")
    if np.isscalar(radii):
        radii = (radii / 4.0, radii / 2.0, float(radii))
    radii = sorted(float(r) for r in radii)
    if domain is None:
        domain = np.ones(mask.active_count, dtype=bool)
    lap_w = _lap_values(lap_w, w)
    _check_one_sided(u, lap_w, domain)

    d = mask.grid.dim
    hd = mask.grid.h ** d
    coords = mask.node_coords()
    center = np.asarray(center, dtype=float)
    dist2 = ((coords - center) ** 2).sum(axis=1)
    grad = gradient(u)
    gmag = np.sqrt((grad ** 2).sum(axis=1))

    e_grad = 1.0 - d * (1.0 / p - 1.0 / q)
    e_w = -2.0 + alpha + d / q
    rows = []
    for R in radii:
        sel = domain & (dist2 <= R * R * (1 + 1e-12))
        if not sel.any():
            raise ParameterError(f"radius {R:.4g} captures no domain nodes")
        lq = (hd * float(np.sum(u.values[sel] ** q))) ** (1.0 / q)
        gp = (hd * float(np.sum(gmag[sel] ** p))) ** (1.0 / p)
        wnorm = _holder_subset(coords[sel], w.values[sel], alpha)
        rows.append({"R": R, "lhs": lq,
                     "grad_term": R ** e_grad * gp,
                     "w_term": R ** e_w * wnorm,
                     "nodes": int(sel.sum())})

    cores = [r["grad_term"] + r["w_term"] for r in rows]
    lhss = [r["lhs"] for r in rows]
    mode = "calibration" if C is None else "verification"
    if C is None:
        C = max(l / c for l, c in zip(lhss, cores) if c > 0)
        ineq_ok = True
    else:
        ineq_ok = all(l <= C * c * (1 + 1e-9) for l, c in zip(lhss, cores))

    slopes = {}
    logr = np.log([r["R"] for r in rows])
    for key in ("lhs", "grad_term", "w_term"):
        vals = np.array([r[key] for r in rows])
        if len(rows) >= 2 and np.all(vals > 0):
            slopes[key] = float(np.polyfit(logr, np.log(vals), 1)[0])
    slope_ok = True
    if expected_slopes:
        for key, target in expected_slopes.items():
            got = slopes.get(key)
            slope_ok &= got is not None and abs(got - target) <= slope_tol

    worst = max(l / c if c > 0 else 0.0 for l, c in zip(lhss, cores))
    return EstimateReport(
        check="cut_ball_estimate",
        lhs=worst, rhs=C,
        passed=bool(ineq_ok and slope_ok),
        params={"p": p, "q": q, "alpha": alpha, "C": C, "mode": mode,
                "center": [float(c) for c in center]},
        grid={"dim": d, "n": list(mask.grid.n), "h": mask.grid.h},
        details={"ladder": rows, "slopes": slopes,
                 "grad_exponent": e_grad, "w_exponent": e_w},
    )


# ---------------------------------------------------------------------------
# covering construction


@dataclass
class BallCover:
    """Greedy cover of the domain nodes by balls B(x, R(x)).

    R(x) is the exact first node distance where the nondecreasing function
    R -> R^(3 - alpha - d/p) ||grad u||_{L^p(B(x,R) cap Omega)} reaches the
    threshold A (so no bisection residue: the discrete function is a step
    function scanned in sorted-offset order), capped at r0.
    """

    centers: np.ndarray        # indices into the domain node list
    radii: np.ndarray          # radius per selected ball
    node_radii: np.ndarray     # R(x) for every domain node
    counts: np.ndarray         # covering multiplicity per domain node
    domain_index: np.ndarray   # active-node indices of the domain
    threshold: float
    p: float
    alpha: float
    r0: float

    @property
    def n_balls(self) -> int:
        return int(self.centers.size)

    @property
    def max_overlap(self) -> int:
        return int(self.counts.max()) if self.counts.size else 0

    @property
    def covers_all(self) -> bool:
        return bool(self.counts.size and self.counts.min() >= 1)

    @property
    def capped_fraction(self) -> float:
        if not self.node_radii.size:
            return 0.0
        return float(np.mean(self.node_radii >= self.r0 * (1 - 1e-12)))


def default_overlap_cap(dim: int) -> int:
    """Conservative per-node multiplicity budget for the greedy cover."""
    return 2 ** dim * dim


def _sorted_offsets(dim: int, max_steps: int):
    """Integer offsets with |v| <= max_steps, sorted by Euclidean norm,
    with the end index of each distinct-norm group."""
    rng = np.arange(-max_steps, max_steps + 1)
    mesh = np.meshgrid(*([rng] * dim), indexing="ij")
    offs = np.stack([m.ravel() for m in mesh], axis=1)
    norm2 = (offs ** 2).sum(axis=1)
    keep = norm2 <= max_steps * max_steps
    offs, norm2 = offs[keep], norm2[keep]
    order = np.argsort(norm2, kind="stable")
    offs, norm2 = offs[order], norm2[order]
    norms = np.sqrt(norm2.astype(float))
    uniq = np.unique(norms)
    ends = np.searchsorted(norms, uniq, side="right") - 1
    return offs, norms, uniq, ends


def covering_radii(u: Field, threshold: float, p: float, alpha: float,
                   r0: float, domain: np.ndarray | None = None) -> np.ndarray:
    """First-crossing radius R(x) for every domain node (capped at r0)."""
    mask = u.mask
    if threshold <= 0:
        raise ParameterError("threshold A must be positive")
    d = mask.grid.dim
    if not (0.0 <= alpha < 1.0) or p < 1:
        raise ParameterError("need p >= 1 and alpha in [0, 1)")
    exponent = 3.0 - alpha - d / p
    if exponent <= 0:
        raise ParameterError("covering needs p > d/(3 - alpha)")
    if r0 <= 0:
        raise ParameterError("cap radius r0 must be positive")
    if domain is None:
        domain = np.ones(mask.active_count, dtype=bool)

    h = mask.grid.h
    grad = gradient(u)
    gmass = h ** d * np.sqrt((grad ** 2).sum(axis=1)) ** p
    gmass = np.where(domain, gmass, 0.0)
    gfull = mask.scatter(gmass).ravel()

    steps = int(math.floor(r0 / h * (1 + 1e-12)))
    if steps < 1:
        raise ParameterError(f"r0 = {r0:.4g} is below the grid spacing")
    offs, _, uniq, ends = _sorted_offsets(d, steps)
    radii_ladder = uniq * h
    with np.errstate(divide="ignore"):
        thresholds = np.where(radii_ladder > 0,
                              threshold ** p * radii_ladder
                              ** (-p * exponent), np.inf)

    all_idx = np.argwhere(mask.active)            # (N, dim)
    dom_idx = all_idx[domain]
    n_dom = dom_idx.shape[0]
    shape = np.array(mask.grid.n)
    out = np.full(n_dom, r0)
    chunk = max(8, min(512, int(2_000_000 // max(offs.shape[0], 1))))
    for lo in range(0, n_dom, chunk):
        pos = dom_idx[lo:lo + chunk]              # (c, dim)
        J = pos[:, None, :] + offs[None, :, :]    # (c, n_off, dim)
        valid = np.all((J >= 0) & (J < shape), axis=-1)
        flat = np.ravel_multi_index(
            np.moveaxis(np.clip(J, 0, shape - 1), -1, 0), mask.grid.n)
        vals = gfull[flat] * valid
        csum = np.cumsum(vals, axis=1)[:, ends]   # (c, n_groups)
        hit = csum >= thresholds[None, :]
        first = np.argmax(hit, axis=1)
        crossed = hit.any(axis=1)
        res = np.where(crossed, radii_ladder[first], r0)
        out[lo:lo + chunk] = np.minimum(res, r0)
    return out


def build_covering(u: Field, threshold: float, p: float, alpha: float,
                   r0: float, domain: np.ndarray | None = None) -> BallCover:
    """Radii by first crossing, then a greedy largest-first selection:
    a ball is kept only if its center is not yet covered.  Two kept centers
    are therefore farther apart than the larger radius, which pins the
    overlap multiplicity (audited by the caller against a budget)."""
    mask = u.mask
    if domain is None:
        domain = np.ones(mask.active_count, dtype=bool)
    node_radii = covering_radii(u, threshold, p, alpha, r0, domain)
    coords = mask.node_coords()[domain]
    n = coords.shape[0]
    order = np.lexsort((np.arange(n), -node_radii))
    covered = np.zeros(n, dtype=bool)
    counts = np.zeros(n, dtype=np.int32)
    centers = []
    radii = []
    for i in order:
        if covered[i]:
            continue
        r = node_radii[i]
        members = ((coords - coords[i]) ** 2).sum(axis=1) \
            <= r * r * (1 + 1e-12)
        covered |= members
        counts += members
        centers.append(i)
        radii.append(r)
    return BallCover(
        centers=np.asarray(centers, dtype=np.int64),
        radii=np.asarray(radii),
        node_radii=node_radii,
        counts=counts,
        domain_index=np.flatnonzero(domain),
        threshold=threshold, p=p, alpha=alpha, r0=r0,
    )


# ---------------------------------------------------------------------------
# global inequality


def interpolation_theta(dim: int, p: float, q: float, alpha: float) -> float:
    """Interpolation exponent theta = (2 - alpha - d/q)/(3 - alpha - d/p)."""
    return (2.0 - alpha - dim / q) / (3.0 - alpha - dim / p)


def _validate_hypotheses(dim: int, p: float, q: float, alpha: float):
    if not (0.0 <= alpha < 1.0):
        raise ParameterError("alpha must lie in [0, 1)")
    if p < 1 or q < p:
        raise ParameterError("need 1 <= p <= q")
    if p * (2.0 - alpha) <= dim * (1 - 1e-12):
        raise ParameterError(
            f"hypothesis p > d/(2 - alpha) fails: p = {p}, d = {dim}, "
            f"alpha = {alpha}")
    if q * (2.0 - alpha) < p * (3.0 - alpha) * (1 - 1e-12):
        raise ParameterError(
            f"hypothesis q >= (3 - alpha)/(2 - alpha) p fails: q = {q}, "
            f"required >= {p * (3.0 - alpha) / (2.0 - alpha):.6g}")
    theta = interpolation_theta(dim, p, q, alpha)
    # equivalent to the hypothesis above; kept as an arithmetic cross-check
    if q * theta < p * (1 - 1e-9):
        raise ParameterError(
            f"exponent-sum condition q theta >= p fails: "
            f"q theta = {q * theta:.6g}, p = {p}")
    return theta


def interpolation_check(u: Field, w: Field, p: float, q: float, alpha: float,
                        r0: float, C: float | None = None,
                        domain: np.ndarray | None = None,
                        overlap_cap: int | None = None,
                        lap_w: np.ndarray | None = None) -> EstimateReport:
    """Full pipeline for the one-sided interpolation inequality.

    Threshold A is ||w||_{C^alpha} over the domain (sup norm at alpha = 0);
    the covering uses the exact first-crossing radii; the per-ball
    aggregation and overlap audit mirror the chain

        sum_B ||u||_{L^q(B)}^q,   sum_B ||grad u||_{L^p(B)}^p <= c_d ||grad u||_p^p,

    and the gate is  lhs <= C (A^(1-theta) G^theta + A)  with theta the
    interpolation exponent and G the global gradient norm.  Calibration
    mode (C None) fits the constant and always passes the inequality; the
    overlap audit is part of the verdict in both modes.
    """
    mask = u.mask
    if w.mask is not mask:
        raise ParameterError("u and w must share one mask")
    d = mask.grid.dim
    theta = _validate_hypotheses(d, p, q, alpha)
    if domain is None:
        domain = np.ones(mask.active_count, dtype=bool)
    if overlap_cap is None:
        overlap_cap = default_overlap_cap(d)
    lap_w = _lap_values(lap_w, w)
    _check_one_sided(u, lap_w, domain)

    hd = mask.grid.h ** d
    coords = mask.node_coords()
    uv = np.where(domain, u.values, 0.0)
    lhs = (hd * float(np.sum(uv ** q))) ** (1.0 / q)
    grad = gradient(u)
    gmag = np.where(domain, np.sqrt((grad ** 2).sum(axis=1)), 0.0)
    grad_norm = (hd * float(np.sum(gmag ** p))) ** (1.0 / p)
    a_norm = _holder_subset(coords[domain], w.values[domain], alpha, cap=6000)
    if a_norm <= 0:
        raise ParameterError("w vanishes on the domain; threshold A = 0")

    cover = build_covering(u, a_norm, p, alpha, r0, domain)
    overlap_ok = cover.max_overlap <= overlap_cap and cover.covers_all

    # per-ball aggregation diagnostics (the proof chain, made measurable)
    dom_coords = coords[domain]
    u_dom = uv[domain]
    g_dom = gmag[domain]
    sum_lq_q = 0.0
    sum_gp_p = 0.0
    for ci, r in zip(cover.centers, cover.radii):
        members = ((dom_coords - dom_coords[ci]) ** 2).sum(axis=1) \
            <= r * r * (1 + 1e-12)
        sum_lq_q += hd * float(np.sum(u_dom[members] ** q))
        sum_gp_p += hd * float(np.sum(g_dom[members] ** p))
    cover_lq_ratio = sum_lq_q / max(lhs ** q, 1e-300)
    grad_chain_ratio = sum_gp_p / max(grad_norm ** p, 1e-300)

    core = a_norm ** (1.0 - theta) * grad_norm ** theta + a_norm
    fitted = lhs / core
    mode = "calibration" if C is None else "verification"
    if C is None:
        C = fitted
        ineq_ok = True
    else:
        ineq_ok = lhs <= C * core * (1 + 1e-9)

    return EstimateReport(
        check="one_sided_interpolation",
        lhs=lhs, rhs=C * core,
        passed=bool(ineq_ok and overlap_ok),
        params={"p": p, "q": q, "alpha": alpha, "theta": theta, "r0": r0,
                "C": C, "mode": mode, "overlap_cap": overlap_cap},
        grid={"dim": d, "n": list(mask.grid.n), "h": mask.grid.h},
        details={"holder_norm_w": a_norm, "grad_norm": grad_norm,
                 "fitted_constant": fitted,
                 "n_balls": cover.n_balls,
                 "max_overlap": cover.max_overlap,
                 "covers_all": cover.covers_all,
                 "capped_fraction": cover.capped_fraction,
                 "cover_lq_ratio": cover_lq_ratio,
                 "grad_chain_ratio": grad_chain_ratio,
                 "domain_nodes": int(domain.sum())},
    )


# ---------------------------------------------------------------------------
# randomized admissible pairs (0 <= u <= lap w by construction)


def random_admissible_pair(mask: DomainMask, domain: np.ndarray,
                           rng: np.random.Generator, n_bumps: int = 6,
                           margin: float = 0.5) -> tuple[Field, Field]:
    """A random convex-dominated pair on the carrier mask: w is a sum of
    smooth bumps plus a paraboloid stiff enough that lap w >= margin on the
    domain, and u = s lap w with a smooth profile s in (0, 1).

    The domain must stay clear of the carrier boundary so that the
    Laplacian at every domain node is a pure interior stencil.
    """
    coords = mask.node_coords()
    d = mask.grid.dim
    extent = [mask.grid.extent[ax] for ax in range(d)]
    lo = np.array([mask.grid.origin[ax] for ax in range(d)])
    hi = lo + np.array(extent)

    def bumps():
        out = np.zeros(mask.active_count)
        for _ in range(n_bumps):
            c = lo + rng.uniform(0.15, 0.85, size=d) * (hi - lo)
            s = rng.uniform(0.08, 0.22) * float(np.max(extent))
            a = rng.uniform(-1.0, 1.0)
            out += a * np.exp(-((coords - c) ** 2).sum(axis=1) / (2 * s * s))
        return out

    phi = bumps()
    lap_phi = mask.gather(mask.laplacian_full(mask.scatter(phi)))
    kappa = (margin + max(0.0, -float(lap_phi[domain].min()))) / d
    center = coords[domain].mean(axis=0)
    w_vals = phi + 0.5 * kappa * ((coords - center) ** 2).sum(axis=1)
    w = Field(mask, w_vals)
    lap_w = _lap_of(w)
    if float(lap_w[domain].min()) <= 0:
        raise SamplingError("paraboloid failed to convexify the sample")
    profile = 0.5 * (1.0 + np.tanh(bumps()))
    u = Field(mask, profile * np.maximum(lap_w, 0.0))
    return u, w
