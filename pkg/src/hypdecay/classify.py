"""Root-branch geometry and the resulting decay predictions.

Each branch is examined in two zones: the outer shell |xi| >= 0.8 R, standing
in for "large xi", and the bounded ball inside it.  A branch may carry several
behaviours (it can meet the axis at one point and collide with another root
elsewhere); every behaviour contributes a factor and the slowest one wins.

Exponents are affine in theta = 1/p - 1/q, stored as a + b*theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .multiplier import NearMultiplicityError
from .roots import (
    RootField,
    _group_size,
    discriminant_batch,
    discriminant_scale,
    multiplicity_clusters,
    neighborhood_codim,
    roots_batch,
    symbol_bound_constant,
    track_branches,
)
from .symbolcore import FrequencyGrid, OperatorSymbol, tau_poly_batch

AXIS_TOL = 1e-8
EPS_STRONG = 1e-3
SHELL_FRACTION = 0.8
HESSIAN_REL_TOL = 1e-4
CONVEXITY_ANGLE_TOL = 0.05
ORDER_SNAP = 0.2
BRANCH_DISC_THRESHOLD = 1e-6


class OnAxisError(ValueError):
    """Im tau vanishes identically on the sampling shells: no finite contact order."""


class MissingGeometryError(ValueError):
    """A decision row needs a geometric quantity that was not measured."""


class UndefinedOrderError(ValueError):
    """P(0, xi) vanishes identically."""


def theta(p: float, q: float) -> float:
    """1/p - 1/q (q may be inf)."""
    return 1.0 / p - (0.0 if math.isinf(q) else 1.0 / q)


def check_pq(p: float, q: float) -> None:
    """1 <= p <= 2 <= q <= inf with 1/p + 1/q = 1."""
    if not (1.0 <= p <= 2.0) or not (q >= 2.0):
        raise ValueError(f"(p, q) = ({p}, {q}) outside 1 <= p <= 2 <= q")
    if abs(1.0 / p + (0.0 if math.isinf(q) else 1.0 / q) - 1.0) > 1e-12:
        raise ValueError(f"(p, q) = ({p}, {q}) are not dual exponents")


def _bracket(r):
    return np.sqrt(1.0 + np.asarray(r, float) ** 2)


# -- types ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Location:
    """Where a branch sits relative to the real axis.

    ``kind`` is 'separated' (delta > 0), 'on_axis', 'asymptotic_to_axis' or
    'meets_axis' (dist^s <~ |Im tau| <~ dist^s1 with s1 <= s, on a zero set
    of codimension ell).
    """

    kind: str
    delta: float | None = None
    s: float | None = None
    s1: float | None = None
    codim: float | None = None
    s_raw: float | None = None
    s_stderr: float | None = None
    at_origin: bool = False
    root_vanishes: bool = False

    def __post_init__(self):
        if self.kind not in ("separated", "on_axis", "asymptotic_to_axis", "meets_axis"):
            raise ValueError(f"unknown location {self.kind!r}")
        if self.kind == "separated" and not (self.delta is not None and self.delta > 0):
            raise ValueError("a separated branch needs delta > 0")


@dataclass(frozen=True)
class HessianInfo:
    det: float
    rank: int
    eigen_signs: tuple[int, ...]
    singular_values: tuple[float, ...] = ()

    @property
    def label(self) -> str:
        return "nondegenerate" if self.rank == len(self.eigen_signs) else "rank_deficient"


@dataclass(frozen=True)
class Convexity:
    status: str  # satisfied | violated | not_assessed
    gamma: float | None = None
    negative_turning: float | None = None
    levels: int = 0


@dataclass(frozen=True)
class BranchBehavior:
    k: int
    region: str  # large | bounded
    location: Location
    hessian: HessianInfo | None = None
    convexity: Convexity = Convexity("not_assessed")
    L: int = 1
    multiplicity_codim: float | None = None

    def __post_init__(self):
        if self.region not in ("large", "bounded"):
            raise ValueError(f"unknown region {self.region!r}")
        if self.L < 1:
            raise ValueError("L must be >= 1")
        loc = self.location
        if loc.s is not None and loc.s < 1:
            raise ValueError("contact order s must be >= 1")

    def to_dict(self) -> dict:
        loc = self.location
        return {
            "branch": self.k,
            "region": self.region,
            "location": {key: getattr(loc, key) for key in (
                "kind", "delta", "s", "s1", "codim", "s_raw", "s_stderr", "at_origin", "root_vanishes")},
            "hessian": None if self.hessian is None else {
                "label": self.hessian.label, "rank": self.hessian.rank, "det": self.hessian.det,
                "eigen_signs": list(self.hessian.eigen_signs)},
            "convexity": {"status": self.convexity.status, "gamma": self.convexity.gamma},
            "L": self.L,
            "multiplicity_codim": self.multiplicity_codim,
        }


@dataclass(frozen=True)
class DecayFactor:
    """<t>^(a + b*theta) * exp(-exp_rate * t), from one decision row."""

    a: float
    b: float
    exp_rate: float
    row: str
    branch: int = -1
    region: str = ""

    def exponent(self, p: float, q: float) -> float:
        return self.a + self.b * theta(p, q)

    @property
    def on_axis(self) -> bool:
        return self.row.startswith("on_axis") or self.row.startswith("asymptotic")

    def symbolic(self) -> str:
        power = f"<t>^({_num(self.a)} {'-' if self.b < 0 else '+'} {_num(abs(self.b))}*(1/p-1/q))"
        if self.exp_rate > 0:
            return f"{power} * exp(-{_num(self.exp_rate)}*t)"
        return power


def _num(x: float) -> str:
    return f"{x:.6g}"


@dataclass(frozen=True)
class DecayPrediction:
    """Combined K(t): the slowest factor at the requested (p, q).

    ``status`` is 'decay', 'conditional' (decay for data supported outside a
    ball) or 'no_decay' (unstable; no factors).
    """

    factors: tuple[DecayFactor, ...]
    status: str = "decay"
    r: int = 0
    alpha: tuple[int, ...] = ()
    notes: tuple[str, ...] = ()

    def dominant(self, p: float, q: float) -> DecayFactor:
        if not self.factors:
            raise ValueError(f"no decay factors (status {self.status})")
        power = [f for f in self.factors if f.exp_rate == 0]
        if power:
            return max(power, key=lambda f: f.exponent(p, q))
        return min(self.factors, key=lambda f: (f.exp_rate, -f.exponent(p, q)))

    def exponent(self, p: float, q: float) -> float:
        return self.dominant(p, q).exponent(p, q)

    def rate(self, p: float, q: float) -> float:
        return self.dominant(p, q).exp_rate

    def symbolic(self) -> str:
        if not self.factors:
            return "no decay"
        parts = sorted({f.symbolic() for f in self.factors})
        return "max(" + ", ".join(parts) + ")" if len(parts) > 1 else parts[0]

    def to_dict(self, pqs: Sequence[tuple[float, float]] = ()) -> dict:
        out = {
            "status": self.status,
            "r": self.r,
            "alpha": list(self.alpha),
            "symbolic": self.symbolic(),
            "factors": [
                {"a": f.a, "b": f.b, "exp_rate": f.exp_rate, "row": f.row, "branch": f.branch, "region": f.region}
                for f in self.factors
            ],
            "notes": list(self.notes),
            "at": [],
        }
        for p, q in pqs:
            row = {"p": p, "q": "inf" if math.isinf(q) else q}
            if self.factors:
                dom = self.dominant(p, q)
                row.update(exponent=dom.exponent(p, q), exp_rate=dom.exp_rate, row=dom.row, on_axis=dom.on_axis)
            out["at"].append(row)
        return out


@dataclass(frozen=True)
class StabilityVerdict:
    """``verdict`` is unstable | on_axis | stable | strongly_stable.

    ``origin_only`` records whether Im tau = 0 happens only at xi = 0.
    ``conditional`` marks an unstable verdict whose instability is confined
    to a ball of radius ``critical_radius`` inside the grid.
    """

    verdict: str
    min_im: float
    shell_min_im: float
    witnesses: tuple[tuple[float, ...], ...] = ()
    origin_only: bool = True
    conditional: bool = False
    critical_radius: float | None = None
    inconclusive: bool = False
    zero_points: np.ndarray = field(default_factory=lambda: np.empty((0, 0)), compare=False)

    @property
    def stable(self) -> bool:
        return self.verdict in ("stable", "strongly_stable")

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "min_im": self.min_im,
            "shell_min_im": self.shell_min_im,
            "witnesses": [list(w) for w in self.witnesses],
            "origin_only": self.origin_only,
            "conditional": self.conditional,
            "critical_radius": self.critical_radius,
            "inconclusive": self.inconclusive,
        }


# -- stability and zero sets --------------------------------------------------------------


def zero_set(im_values: np.ndarray, grid: FrequencyGrid, depth_tol: float = 1e-6) -> np.ndarray:
    """Points where a non-negative-ish Im profile vanishes, located below grid resolution.

    Takes nodes with |Im| <= 1e-8 <xi>, linear interpolation at sign changes
    between neighbours, and parabolic vertices of 1-D local minima whose
    depth is below ``depth_tol`` <xi>.
    """
    v = np.asarray(im_values, float).reshape(grid.shape)
    ax = grid.axis
    h = grid.spacing
    coords = np.stack(np.meshgrid(*([ax] * grid.n), indexing="ij"), axis=-1)
    scale = _bracket(np.linalg.norm(coords, axis=-1))
    pts = [coords[np.abs(v) <= AXIS_TOL * scale]]
    for a in range(grid.n):
        lo = [slice(None)] * grid.n
        hi = [slice(None)] * grid.n
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        va, vb = v[tuple(lo)], v[tuple(hi)]
        ca = coords[tuple(lo)]
        cross = (va * vb < 0) & (np.abs(va) > AXIS_TOL * scale[tuple(lo)]) & (np.abs(vb) > AXIS_TOL * scale[tuple(hi)])
        if cross.any():
            frac = va[cross] / (va[cross] - vb[cross])
            p = ca[cross].copy()
            p[:, a] += frac * h
            pts.append(p)
        if grid.points_per_axis >= 3:
            mid = [slice(None)] * grid.n
            mid[a] = slice(1, -1)
            left = [slice(None)] * grid.n
            left[a] = slice(0, -2)
            right = [slice(None)] * grid.n
            right[a] = slice(2, None)
            vl, vm, vr = v[tuple(left)], v[tuple(mid)], v[tuple(right)]
            curv = vl - 2 * vm + vr
            is_min = (vm > AXIS_TOL * scale[tuple(mid)]) & (vm <= vl) & (vm <= vr) & (curv > 0)
            with np.errstate(divide="ignore", invalid="ignore"):
                shift = np.where(is_min, 0.5 * (vl - vr) / curv, 0.0)
                depth = vm - 0.125 * (vr - vl) ** 2 / np.where(is_min, curv, 1.0)
            keep = is_min & (depth <= depth_tol * scale[tuple(mid)])
            if keep.any():
                p = coords[tuple(mid)][keep].copy()
                p[:, a] += shift[keep] * h
                pts.append(p)
    out = np.concatenate([p.reshape(-1, grid.n) for p in pts], axis=0)
    if len(out) == 0:
        return out
    # merge duplicates found along several axes
    key = np.round(out / (0.25 * h)).astype(np.int64)
    _, first = np.unique(key, axis=0, return_index=True)
    return out[np.sort(first)]


def _region_mask(grid: FrequencyGrid, min_radius: float) -> np.ndarray:
    return grid.radii >= min_radius


def stability_scan(field: RootField, eps: float = EPS_STRONG, min_radius: float = 0.0) -> StabilityVerdict:
    """Verdict from the sign of Im tau over the grid (optionally only |xi| >= min_radius)."""
    grid = field.grid
    radii = grid.radii
    region = _region_mask(grid, min_radius)
    if not region.any():
        raise ValueError("no grid node satisfies the minimum radius")
    min_im = field.min_im()
    tol = AXIS_TOL * _bracket(radii)
    shell = region & (radii >= SHELL_FRACTION * grid.extent)
    if not shell.any():
        raise ValueError("grid has no outer shell inside the region")
    shell_min = float(min_im[shell].min())
    region_min = float(min_im[region].min())

    zeros = zero_set(min_im, grid)
    h = grid.spacing
    if len(zeros):
        zr = np.linalg.norm(zeros, axis=-1)
        zeros = zeros[zr >= min_radius - h]
    inconclusive = bool(len(zeros) and np.any(np.abs(zeros).max(axis=-1) >= grid.extent - h))

    bad = region & (min_im < -tol)
    if bad.any():
        order = np.argsort(min_im[bad], kind="stable")[:5]
        witnesses = tuple(tuple(float(x) for x in w) for w in grid.nodes[bad][order])
        unstable_r = radii[bad].max()
        conditional = bool(shell_min >= -tol[shell].max() and unstable_r < SHELL_FRACTION * grid.extent)
        crit = None
        if conditional:
            # the instability ends at the first zero-set radius past the outermost unstable node
            zr = np.linalg.norm(zeros, axis=-1) if len(zeros) else np.empty(0)
            beyond = zr[zr >= unstable_r - 1e-12]
            crit = float(beyond.min()) if len(beyond) else float(unstable_r + h)
        return StabilityVerdict("unstable", region_min, shell_min, witnesses, False, conditional, crit,
                                inconclusive, zeros)

    origin_only = bool(len(zeros) == 0 or np.all(np.linalg.norm(zeros, axis=-1) <= 2 * h))
    if shell_min <= float(tol[shell].max()):
        verdict = "on_axis"
    elif origin_only and shell_min >= eps:
        verdict = "strongly_stable"
    else:
        verdict = "stable"
    return StabilityVerdict(verdict, region_min, shell_min, (), origin_only, False, None, inconclusive, zeros)


# -- contact order ------------------------------------------------------------------------


@dataclass(frozen=True)
class ContactFit:
    s: float
    s1: float
    stderr: float
    stderr1: float
    s_raw: float
    bins: int


def _envelope_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(len(x) - 2, 1)
    sxx = ((x - x.mean()) ** 2).sum()
    se = float(np.sqrt(resid @ resid / dof / sxx)) if sxx > 0 else float("inf")
    return float(coef[0]), se


def contact_order_fit(
    branch: np.ndarray,
    zero_points: np.ndarray,
    grid: FrequencyGrid,
    region: np.ndarray | None = None,
    bins: int = 12,
    max_order: float | None = None,
    max_distance: float | None = None,
) -> ContactFit:
    """Contact orders s1 <= s with dist^s <~ |Im tau| <~ dist^s1 near the zero set.

    Distances in [2 dxi, 0.1 R] are split into log-spaced bins; the smallest
    and largest |Im tau| per bin form the lower and upper envelopes, whose
    log-log slopes are s and s1.  ``max_distance`` shortens the window, e.g.
    to stay clear of root collisions where the branch stops being smooth.
    """
    zero_points = np.atleast_2d(np.asarray(zero_points, float))
    if zero_points.size == 0:
        raise ValueError("zero set is empty")
    nodes = grid.nodes
    im = np.abs(np.asarray(branch).imag)
    dist = cKDTree(zero_points).query(nodes)[0]
    lo, hi = 2 * grid.spacing, 0.1 * grid.extent
    if max_distance is not None:
        hi = min(hi, max(max_distance, 2 * lo))
    sel = (dist >= lo) & (dist <= hi)
    if region is not None:
        sel &= region
    if sel.sum() < 3:
        raise ValueError("fewer than 3 sample nodes in the contact-order window")
    if np.all(im[sel] <= AXIS_TOL * _bracket(grid.radii[sel])):
        raise OnAxisError("Im tau vanishes on the sampling shells")
    d, v = dist[sel], im[sel]
    edges = np.geomspace(lo, hi, bins + 1)
    which = np.clip(np.searchsorted(edges, d, side="right") - 1, 0, bins - 1)
    lower, upper = [], []
    for b in range(bins):
        inb = np.flatnonzero(which == b)
        inb = inb[v[inb] > 0]
        if len(inb) == 0:
            continue
        i_lo = inb[np.argmin(v[inb])]
        i_hi = inb[np.argmax(v[inb])]
        lower.append((d[i_lo], v[i_lo]))
        upper.append((d[i_hi], v[i_hi]))
    if len(lower) < 3:
        raise ValueError("fewer than 3 populated distance shells")
    lw, up = np.log(np.array(lower)), np.log(np.array(upper))
    s, se = _envelope_fit(lw[:, 0], lw[:, 1])
    s1, se1 = _envelope_fit(up[:, 0], up[:, 1])
    raw = s
    cap = max_order if max_order is not None else np.inf
    s = float(np.clip(s, 1.0, cap))
    s1 = float(np.clip(min(s1, s), 1.0, cap))
    return ContactFit(s, s1, se, se1, raw, len(lower))


def contact_order_probe(
    branch: Callable,
    zero_points: np.ndarray,
    reach: float,
    min_radius: float = 0.0,
    max_order: float | None = None,
    samples: int = 8,
) -> ContactFit:
    """Contact orders from direct evaluation of the branch below grid resolution.

    Used when a root collision sits only a few grid steps from the zero set,
    so no grid window sees the regime where |Im tau| ~ dist^s.  At a spread of
    zero points the point is refined along the gradient of Im tau, then
    |Im tau| is sampled at distances 2e-3 .. 0.5 ``reach`` along the normal
    (or, where the gradient vanishes, along several directions).  s is the
    steepest log-log slope and s1 the shallowest.
    """
    from scipy.optimize import brentq, minimize_scalar

    from .symbolcore import unit_directions

    zero_points = np.atleast_2d(np.asarray(zero_points, float))
    if zero_points.size == 0:
        raise ValueError("zero set is empty")
    if not reach > 0:
        raise ValueError("reach must be positive")
    n = zero_points.shape[1]
    picks = zero_points[np.unique(np.linspace(0, len(zero_points) - 1, min(samples, len(zero_points))).astype(int))]
    d = np.geomspace(2e-3, 0.5, 9) * reach
    im = lambda pts: np.imag(branch(np.atleast_2d(pts)))  # noqa: E731
    slopes = []
    for z in picks:
        eta = 1e-4 * reach
        f = im(np.vstack([z + eta * np.eye(n), z - eta * np.eye(n)]))
        g = (f[:n] - f[n:]) / (2 * eta)
        gn = float(np.linalg.norm(g))
        if gn > 1e-6 * float(_bracket(np.linalg.norm(z))):
            w = g / gn
            phi = lambda u: float(im(z + u * w)[0])  # noqa: E731
            span = 0.25 * reach
            lo_v, hi_v = phi(-span), phi(span)
            if lo_v * hi_v < 0:
                u = brentq(phi, -span, span, xtol=1e-14)
            else:
                u = minimize_scalar(lambda u: abs(phi(u)), bounds=(-span, span), method="bounded",
                                    options={"xatol": 1e-12}).x
            z = z + u * w
            dirs = np.array([w, -w])
        else:
            dirs = unit_directions(n, 8 if n > 1 else 2)
        for w in dirs:
            pts = z + np.outer(d, w)
            keep = np.linalg.norm(pts, axis=1) >= min_radius
            if keep.sum() < 4:
                continue
            v = np.abs(im(pts[keep]))
            if np.any(v <= 0):
                continue
            slopes.append(float(np.polyfit(np.log(d[keep]), np.log(v), 1)[0]))
    if not slopes:
        raise ValueError("no usable probe direction")
    s_raw, s1_raw = max(slopes), min(slopes)
    cap = max_order if max_order is not None else np.inf
    s = float(np.clip(s_raw, 1.0, cap))
    s1 = float(np.clip(min(s1_raw, s), 1.0, cap))
    spread = float(np.std(slopes))
    return ContactFit(s, s1, spread, spread, s_raw, len(slopes))


def snap_order(x: float, tol: float = ORDER_SNAP) -> float:
    """Round to the nearest integer when within ``tol`` (orders of polynomial contact)."""
    r = round(x)
    return float(r) if abs(x - r) <= tol and r >= 1 else float(x)


# -- Hessian and convexity ------------------------------------------------------------------


def symbol_branch(sym: OperatorSymbol, k: int, order: str = "re",
                  threshold: float = BRANCH_DISC_THRESHOLD) -> Callable[[np.ndarray], np.ndarray]:
    """Callable xi -> tau_k(xi), the k-th root after sorting by real (or imaginary) part.

    Raises NearMultiplicityError where roots nearly collide, since the
    ordering (and smoothness) of the branch breaks down there.
    """
    if not 0 <= k < sym.m:
        raise ValueError(f"branch {k} outside 0..{sym.m - 1}")
    if order not in ("re", "im"):
        raise ValueError("order must be 're' or 'im'")

    def branch(xi):
        xi = np.asarray(xi, float)
        shape = xi.shape[:-1]
        pts = xi.reshape(-1, sym.n)
        coeffs = tau_poly_batch(sym, pts)
        roots = roots_batch(coeffs)
        if sym.m >= 2:
            nd = np.abs(discriminant_batch(coeffs)) / discriminant_scale(sym.m, np.linalg.norm(pts, axis=-1))
            if np.any(nd < threshold):
                bad = pts[np.argmin(nd)]
                raise NearMultiplicityError(f"roots nearly coincide at xi={bad.tolist()}")
        if order == "re":
            idx = np.argsort(roots.real, axis=1, kind="stable")[:, k]
        else:
            # roots on the axis tie in Im; break ties by Re so the order is stable
            tol = AXIS_TOL * _bracket(np.linalg.norm(pts, axis=-1))[:, None]
            im = np.where(np.abs(roots.imag) <= tol, 0.0, roots.imag)
            idx = np.lexsort((roots.real, im), axis=1)[:, k]
        return roots[np.arange(len(pts)), idx].reshape(shape)

    return branch


def hessian_at(branch: Callable, xi, h: float | None = None, rel_tol: float = HESSIAN_REL_TOL) -> HessianInfo:
    """Central-difference Hessian of Re tau_k at xi; rank by relative singular-value cut."""
    xi = np.asarray(xi, float).ravel()
    n = len(xi)
    scale = float(_bracket(np.linalg.norm(xi)))
    h = h if h is not None else 1e-3 * scale
    offsets = [np.zeros(n)]
    for i in range(n):
        for j in range(i, n):
            for si in (1, -1):
                for sj in (1, -1):
                    e = np.zeros(n)
                    e[i] += si * h
                    e[j] += sj * h
                    offsets.append(e)
    pts = xi + np.array(offsets)
    vals = np.real(branch(pts))
    f0 = vals[0]
    H = np.zeros((n, n))
    pos = 1
    for i in range(n):
        for j in range(i, n):
            fpp, fpm, fmp, fmm = vals[pos : pos + 4]
            pos += 4
            if i == j:
                # offsets are +-2h along the axis: f(x+2h) - 2f + f(x-2h)
                H[i, i] = (fpp - 2 * f0 + fmm) / (4 * h * h)
            else:
                H[i, j] = H[j, i] = (fpp - fpm - fmp + fmm) / (4 * h * h)
    sv = np.linalg.svd(H, compute_uv=False)
    cut = max(rel_tol * (sv.max() if sv.size else 0.0), 1e-6 / scale)
    rank = int((sv > cut).sum())
    eig = np.linalg.eigvalsh(H)
    signs = tuple(int(np.sign(e)) if abs(e) > cut else 0 for e in eig)
    return HessianInfo(float(np.linalg.det(H)), rank, signs, tuple(float(x) for x in sv))


def _turning(curve: np.ndarray, closed: bool) -> np.ndarray:
    seg = np.diff(curve, axis=0)
    length = np.linalg.norm(seg, axis=1)
    # contour lines through grid nodes carry near-zero segments with arbitrary direction
    seg = seg[length > 1e-6 * (length.max() if len(length) else 0.0)]
    if closed and len(seg) > 1:
        seg = np.vstack([seg, seg[:1]])
    ang = np.arctan2(seg[:, 1], seg[:, 0])
    return (np.diff(ang) + np.pi) % (2 * np.pi) - np.pi


def _project(branch, p, lam, steps=6):
    """Newton steps along the gradient onto the level set tau = lam."""
    h = 1e-6 * (1 + np.linalg.norm(p))
    for _ in range(steps):
        stencil = np.array([p, p + [h, 0], p - [h, 0], p + [0, h], p - [0, h]])
        f = np.real(branch(stencil))
        g = np.array([(f[1] - f[2]) / (2 * h), (f[3] - f[4]) / (2 * h)])
        gg = g @ g
        if gg == 0:
            break
        p = p - (f[0] - lam) * g / gg
    return p, g


def contact_order(branch: Callable, p: np.ndarray, lam: float, size: float) -> float:
    """Order of vanishing of tau(p + u T) - lam in u along the tangent line T at p."""
    p, g = _project(branch, np.asarray(p, float), lam)
    t = np.array([-g[1], g[0]]) / np.linalg.norm(g)
    u = np.geomspace(3e-3, 3e-2, 6) * size
    pts = np.concatenate([p + np.outer(u, t), p - np.outer(u, t)])
    gv = np.abs(np.real(branch(pts)) - lam)
    sym = 0.5 * (gv[: len(u)] + gv[len(u):])
    if np.any(sym <= 0):
        return float("inf")
    return float(np.polyfit(np.log(u), np.log(sym), 1)[0])


def convexity_scan(
    branch: Callable,
    lambda_samples: Sequence[float],
    extent: float,
    points: int = 201,
    center: Sequence[float] = (0.0, 0.0),
    max_order: float | None = None,
) -> Convexity:
    """Convexity of the level curves {Re tau = lam} in the plane and their contact index.

    A curve is convex when the turning opposite to its overall orientation
    adds up to less than 0.05 rad.  The contact index at a point is the order
    of vanishing of tau - lam along the tangent line; it is measured at the
    flattest point of each curve and at a spread of others, and the maximum
    (rounded, optionally capped at ``max_order``) is reported.  For n = 2
    the convex and general indices coincide.
    """
    import contourpy

    ax = np.linspace(-extent, extent, points)
    X, Y = np.meshgrid(ax + center[0], ax + center[1], indexing="xy")
    try:
        Z = np.real(branch(np.stack([X, Y], axis=-1)))
    except NearMultiplicityError:
        return Convexity("not_assessed")
    gen = contourpy.contour_generator(X, Y, Z)
    worst_neg = 0.0
    gamma = 0.0
    levels = 0
    for lam in lambda_samples:
        for line in gen.lines(lam):
            if len(line) < 8:
                continue
            closed = bool(np.allclose(line[0], line[-1]))
            turn = _turning(line, closed)
            if len(turn) == 0:
                continue
            orient = np.sign(turn.sum()) or 1.0
            neg = float(-np.minimum(orient * turn, 0.0).sum())
            worst_neg = max(worst_neg, neg)
            levels += 1
            size = float(np.ptp(line, axis=0).max())
            interior = np.arange(2, len(line) - 2) if not closed else np.arange(len(line) - 1)
            if len(interior) == 0:
                continue
            kappa = np.abs(np.convolve(np.abs(np.resize(turn, len(line))), np.ones(5) / 5, "same"))
            cand = {int(interior[np.argmin(kappa[interior])])}
            cand |= {int(i) for i in interior[:: max(len(interior) // 8, 1)]}
            for i in sorted(cand):
                try:
                    order = contact_order(branch, line[i], lam, size)
                except NearMultiplicityError:
                    continue
                if np.isfinite(order):
                    gamma = max(gamma, order)
    if levels == 0:
        return Convexity("satisfied", None, 0.0, 0)
    gam = float(round(gamma))
    if max_order is not None:
        gam = min(gam, float(max_order))
    status = "satisfied" if worst_neg <= CONVEXITY_ANGLE_TOL else "violated"
    return Convexity(status, gam, worst_neg, levels)


# -- decision rows ---------------------------------------------------------------------------


def _hessian_factor(beh: BranchBehavior, n: int) -> tuple[float, str]:
    """Coefficient c in <t>^(-c theta) for an on-axis or asymptotic branch."""
    hess = beh.hessian
    kind = beh.location.kind
    if hess is not None and hess.rank == n:
        return n / 2, f"{kind}:det_hess"
    if hess is not None and hess.rank == n - 1:
        return (n - 1) / 2, f"{kind}:rank_n-1"
    conv = beh.convexity
    if conv.status == "satisfied" and conv.gamma and kind == "on_axis":
        return (n - 1) / conv.gamma, f"{kind}:convex_gamma"
    if conv.status in ("satisfied", "violated") and conv.gamma:
        return 1.0 / conv.gamma, f"{kind}:gamma0"
    raise MissingGeometryError(
        f"branch {beh.k} ({beh.region}, {kind}): Hessian rank below n-1 and no contact index measured"
    )


def predict_decay(
    behaviors: Sequence[BranchBehavior],
    n: int,
    r: int = 0,
    alpha: Sequence[int] = (),
    status: str = "decay",
    notes: Sequence[str] = (),
) -> DecayPrediction:
    """Map branch behaviours to decay factors; the combined K is the slowest.

    Rows: separated -> exp(-delta t), times <t>^(L-1) for L coinciding roots;
    on the axis (or tending to it) -> <t>^(-c theta) with c = n/2, (n-1)/2,
    (n-1)/gamma or 1/gamma0 in that order of preference; meeting the axis
    with order s on a set of codimension ell -> <t>^(L-1-(ell/s) theta).
    Derivatives d_t^r d_x^alpha gain (|alpha| [zero set at 0] +
    r s1 [tau = 0 there]) / s on the meeting-axis rows.
    """
    alpha = tuple(alpha) if alpha else (0,) * n
    if status == "no_decay":
        return DecayPrediction((), "no_decay", r, alpha, tuple(notes))
    factors = []
    notes = list(notes)
    codims = set()
    for beh in behaviors:
        loc = beh.location
        if loc.kind == "separated":
            factors.append(DecayFactor(float(beh.L - 1), 0.0, float(loc.delta),
                                       "separated" + ("" if beh.L == 1 else ":multiple"), beh.k, beh.region))
        elif loc.kind in ("on_axis", "asymptotic_to_axis"):
            c, row = _hessian_factor(beh, n)
            factors.append(DecayFactor(0.0, -c, 0.0, row, beh.k, beh.region))
        else:
            if loc.s is None or loc.codim is None:
                raise MissingGeometryError(f"branch {beh.k}: meeting-axis row needs s and codimension")
            s1 = loc.s1 if loc.s1 is not None else loc.s
            gain = (sum(alpha) * loc.at_origin + r * s1 * loc.root_vanishes) / loc.s
            codims.add(round(loc.codim, 6))
            factors.append(DecayFactor(float(beh.L - 1) - gain, -loc.codim / loc.s, 0.0,
                                       "meets_axis", beh.k, beh.region))
    if len(codims) > 1:
        notes.append(f"zero sets of different codimension {sorted(codims)}; smallest ell governs")
    if not factors:
        raise MissingGeometryError("no behaviour produced a decay factor")
    return DecayPrediction(tuple(factors), status, r, alpha, tuple(notes))


# -- origin order -----------------------------------------------------------------------------


class OriginOrder(NamedTuple):
    d_tau_ok: bool
    min_alpha: int
    fitted_order: float


def origin_order_check(sym: OperatorSymbol, directions: int | None = None) -> OriginOrder:
    """Whether d_tau P(0,0) != 0, and the lowest degree of P(0, xi) near xi = 0.

    The degree is read off the constant-in-tau coefficient and cross-checked
    by the log-log slope of |P(0, eps w)| over eps in [1e-3, 1e-1], minimised
    over sample directions w.
    """
    from .symbolcore import unit_directions

    pm = sym.tau_coeffs[-1]
    if pm.is_zero():
        raise UndefinedOrderError("P(0, xi) vanishes identically")
    d_tau = sym.tau_coeffs[-2](np.zeros(sym.n)) if sym.m >= 2 else 1.0
    min_alpha = pm.min_degree
    eps = np.geomspace(1e-3, 1e-1, 7)
    slopes = []
    for w in unit_directions(sym.n, directions or 16):
        vals = np.abs(np.asarray([pm(e * w) for e in eps]))
        if np.all(vals > 0):
            slopes.append(np.polyfit(np.log(eps), np.log(vals), 1)[0])
    fitted = float(min(slopes)) if slopes else float("nan")
    return OriginOrder(bool(abs(d_tau) > 1e-12), int(min_alpha), fitted)


# -- full pipeline ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Classification:
    verdict: StabilityVerdict
    behaviors: tuple[BranchBehavior, ...]
    prediction: DecayPrediction
    clusters: tuple = ()
    symbol_bound: float = float("nan")
    min_radius: float = 0.0
    notes: tuple[str, ...] = ()

    def to_dict(self, pqs: Sequence[tuple[float, float]] = ()) -> dict:
        return {
            "stability": self.verdict.to_dict(),
            "behaviors": [b.to_dict() for b in self.behaviors],
            "prediction": self.prediction.to_dict(pqs),
            "clusters": [
                {"L": c.L, "codim": c.codim_estimate, "codim_stderr": c.codim_stderr, "min_im": c.min_im,
                 "nodes": len(c.nodes), "representative": np.asarray(c.representative).tolist()}
                for c in self.clusters
            ],
            "symbol_bound": self.symbol_bound,
            "min_radius": self.min_radius,
            "notes": list(self.notes),
        }


def default_grid(n: int, extent: float = 10.0) -> FrequencyGrid:
    if n == 2:
        return FrequencyGrid(2, extent / 2, 401)
    return FrequencyGrid(n, extent, {1: 2049}.get(n, 41))


def _sorted_branches(field: RootField) -> tuple[np.ndarray, str]:
    b = field.branches
    on_axis = np.all(np.abs(b.imag) <= AXIS_TOL * _bracket(field.grid.radii))
    key = b.real if on_axis else b.imag
    idx = np.argsort(key, axis=0, kind="stable")
    return np.take_along_axis(b, idx, axis=0), ("re" if on_axis else "im")


def _axis_behavior(sym, k, order, grid, region, kind, label_region) -> BranchBehavior:
    """Hessian (and, in the plane, convexity) of an on-axis or asymptotic branch."""
    n = sym.n
    R = grid.extent
    rad = 0.9 * R if label_region == "large" else 0.5 * R
    from .symbolcore import unit_directions

    branch = symbol_branch(sym, k, order)
    infos = []
    for w in unit_directions(n, 8 if n > 1 else 2):
        try:
            infos.append(hessian_at(branch, rad * w))
        except NearMultiplicityError:
            continue
    hess = min(infos, key=lambda h: h.rank) if infos else None
    conv = Convexity("not_assessed")
    if n == 2 and (hess is None or hess.rank < n - 1):
        vals = np.real(branch(np.array([[rad, 0.0], [0.0, rad]])))
        levels = np.linspace(vals.min() * 0.9, vals.max() * 1.1, 5) if np.ptp(vals) else [vals[0]]
        conv = convexity_scan(branch, levels, R, max_order=sym.m)
    return BranchBehavior(k, label_region, Location(kind), hess, conv)


def classify_symbol(
    sym: OperatorSymbol,
    grid: FrequencyGrid | None = None,
    eps: float = EPS_STRONG,
    min_radius: float = 0.0,
    r: int = 0,
    alpha: Sequence[int] = (),
    field: RootField | None = None,
) -> Classification:
    """Stability scan, per-branch geometry and the predicted decay, in one pass.

    When the symbol is unstable only inside a ball, the geometry is taken
    outside that ball and the prediction is marked 'conditional' (it holds
    for data whose Fourier transform vanishes inside the ball).
    """
    grid = grid or default_grid(sym.n)
    field = field or track_branches(sym, grid)
    verdict = stability_scan(field, eps, min_radius)
    notes = []
    status = "decay"
    if verdict.verdict == "unstable":
        if not verdict.conditional:
            pred = predict_decay((), sym.n, r, alpha, status="no_decay",
                                 notes=("unstable: roots with Im tau < 0 outside any bounded set",))
            return Classification(verdict, (), pred, (), symbol_bound_constant(field), min_radius, ("unstable",))
        min_radius = max(min_radius, float(verdict.critical_radius))
        notes.append(f"decay only for data with Fourier support in |xi| >= {min_radius:.6g}")
        status = "conditional"
        verdict_in = stability_scan(field, eps, min_radius)
    else:
        verdict_in = verdict
    if verdict_in.inconclusive and verdict_in.verdict != "on_axis":
        notes.append("zero set touches the grid boundary")

    radii = grid.radii
    region = _region_mask(grid, min_radius - 1e-12)
    shell = region & (radii >= SHELL_FRACTION * grid.extent)
    inner = region & ~shell
    sorted_b, order = _sorted_branches(field)
    tol = AXIS_TOL * _bracket(radii)
    h = grid.spacing
    behaviors: list[BranchBehavior] = []
    clusters = multiplicity_clusters(field)
    off_axis = [c.nodes for c in clusters if c.min_im > AXIS_TOL * (1 + np.linalg.norm(c.representative))]
    collision_nodes = cKDTree(np.concatenate(off_axis)) if off_axis else None
    bound = symbol_bound_constant(field)

    for k in range(sym.m):
        im = sorted_b[k].imag
        # large-|xi| zone
        shell_im = im[shell]
        if np.all(np.abs(shell_im) <= tol[shell]):
            behaviors.append(_axis_behavior(sym, k, order, grid, region, "on_axis", "large"))
        else:
            edges = np.linspace(0.5 * grid.extent, radii.max() + 1e-12, 9)
            prof = []
            for a, b in zip(edges[:-1], edges[1:]):
                sel = region & (radii >= a) & (radii < b)
                if sel.any():
                    prof.append(((a + b) / 2, im[sel].min()))
            prof = np.array(prof)
            slope = 0.0
            if len(prof) >= 3 and np.all(prof[:, 1] > 0):
                slope = float(np.polyfit(np.log(prof[:, 0]), np.log(prof[:, 1]), 1)[0])
            if slope < -0.25:
                behaviors.append(_axis_behavior(sym, k, order, grid, region, "asymptotic_to_axis", "large"))
            else:
                behaviors.append(BranchBehavior(k, "large", Location("separated", delta=float(shell_im.min()))))
        # bounded zone
        if not inner.any():
            continue
        inner_im = im[inner]
        if np.all(np.abs(inner_im) <= tol[inner]):
            if behaviors[-1].location.kind != "on_axis":
                behaviors.append(_axis_behavior(sym, k, order, grid, region, "on_axis", "bounded"))
            continue
        zeros = zero_set(im, grid)
        if len(zeros):
            zr = np.linalg.norm(zeros, axis=-1)
            zeros = zeros[(zr >= min_radius - h) & (zr <= SHELL_FRACTION * grid.extent)]
        if len(zeros):
            reach = None
            if collision_nodes is not None:
                reach = 0.5 * float(collision_nodes.query(zeros)[0].min())
            try:
                fit = None
                if reach is not None and reach < 8 * 2 * h:
                    # the collision is a few grid steps away: probe the branch directly
                    try:
                        fit = contact_order_probe(symbol_branch(sym, k, order), zeros, reach, min_radius, sym.m)
                    except (NearMultiplicityError, ValueError):
                        notes.append(f"branch {k}: contact window overlaps a root collision")
                if fit is None:
                    fit = contact_order_fit(sorted_b[k], zeros, grid, region=region, max_order=sym.m,
                                            max_distance=reach)
            except OnAxisError:
                # Im tau vanishes on an open set next to the zero set: an on-axis branch
                if behaviors[-1].location.kind != "on_axis":
                    behaviors.append(_axis_behavior(sym, k, order, grid, region, "on_axis", "bounded"))
                continue
            zmask = np.zeros(grid.shape, dtype=bool)
            zidx = np.clip(np.rint((zeros + grid.extent) / h).astype(int), 0, grid.points_per_axis - 1)
            zmask[tuple(zidx.T)] = True
            codim_raw, _ = neighborhood_codim(zmask, h)
            codim = snap_order(float(np.clip(codim_raw, 1.0, sym.n)))
            s = snap_order(fit.s)
            s1 = snap_order(fit.s1)
            at_origin = bool(np.all(np.linalg.norm(zeros, axis=-1) <= 2 * h))
            near = cKDTree(grid.nodes).query(zeros)[1]
            roots_there = sorted_b[:, near]
            tau_k = roots_there[k]
            close = np.abs(roots_there - tau_k[None, :]) <= 4 * h * max(1.0, bound)
            L = int(close.sum(axis=0).max())
            vanish = bool(np.all(np.abs(tau_k) <= 4 * h * max(1.0, bound)))
            loc = Location("meets_axis", s=s, s1=min(s1, s), codim=codim, s_raw=fit.s_raw,
                           s_stderr=fit.stderr, at_origin=at_origin, root_vanishes=vanish)
            behaviors.append(BranchBehavior(k, "bounded", loc, L=L, multiplicity_codim=codim if L > 1 else None))
            continue
        away = inner & (im > tol)
        if away.any():
            delta = float(im[away].min())
            behaviors.append(BranchBehavior(k, "bounded", Location("separated", delta=max(delta, 1e-300))))

    # collisions away from the axis
    for c in clusters:
        rep = np.asarray(c.representative)
        if np.linalg.norm(rep) < min_radius:
            continue
        if c.min_im > AXIS_TOL * float(_bracket(np.linalg.norm(rep))):
            node = int(np.argmin(np.linalg.norm(grid.nodes - rep, axis=1)))
            _, members = _group_size(sorted_b[:, node], float(_bracket(np.linalg.norm(rep))))
            behaviors.append(BranchBehavior(members[0], "bounded", Location("separated", delta=float(c.min_im)),
                                            L=int(c.L), multiplicity_codim=float(c.codim_estimate)))
        else:
            notes.append(f"{c.L} roots coincide on the real axis near xi={np.round(rep, 6).tolist()}")

    pred = predict_decay(behaviors, sym.n, r, alpha, status=status, notes=notes)
    return Classification(verdict, tuple(behaviors), pred, tuple(clusters), bound, min_radius, tuple(notes))


def wave_case_from_classification(cls: Classification) -> str:
    """Label of a wave-family member read off its measured geometry alone."""
    v = cls.verdict
    if v.verdict == "unstable":
        return "negative_mass_conditional" if v.conditional else "no_decay"
    if v.verdict == "on_axis":
        rows = {f.row for f in cls.prediction.factors}
        if any(row.endswith("det_hess") for row in rows):
            return "klein_gordon"
        return "wave"
    if any(b.location.kind == "meets_axis" for b in cls.behaviors):
        return "dissipative"
    return "exponential"


def with_derivatives(cls: Classification, r: int, alpha: Sequence[int], n: int) -> DecayPrediction:
    """Re-run the decision rows for another derivative order."""
    return predict_decay(cls.behaviors, n, r, alpha, status=cls.prediction.status,
                         notes=cls.prediction.notes)

