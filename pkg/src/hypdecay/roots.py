"""Characteristic roots over frequency grids.

Roots come from a batched Aberth-Ehrlich iteration on the monic tau
polynomial.  Branches are labelled by an optimal assignment between adjacent
grid nodes, and multiplicity sets are located through the discriminant.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment

from .symbolcore import FrequencyGrid, OperatorSymbol, horner, tau_poly_batch

_EPS = np.finfo(float).eps
RESIDUAL_TOL = 1e-9
MAX_ITER = 500
EXACT_MATCH_MAX_M = 12


class RootFindingError(RuntimeError):
    """The root iteration did not reach the residual tolerance."""

    def __init__(self, message: str, worst_residual: float):
        super().__init__(f"{message} (worst residual {worst_residual:.3e})")
        self.worst_residual = worst_residual


def _coeff_scale(coeffs: np.ndarray) -> np.ndarray:
    """Natural size |xi|^m of a monic row, read off as max_k |c_k|^(m/k)."""
    m = coeffs.shape[-1] - 1
    k = np.arange(1, m + 1)
    mags = np.abs(coeffs[..., 1:]) ** (m / k)
    return np.maximum(1.0, mags.max(axis=-1))


def residual_tolerance(coeffs: np.ndarray) -> np.ndarray:
    return RESIDUAL_TOL * _coeff_scale(coeffs)


def _derivative(coeffs: np.ndarray) -> np.ndarray:
    m = coeffs.shape[-1] - 1
    return coeffs[..., :-1] * np.arange(m, 0, -1)


def roots_batch(coeffs, max_iter: int = MAX_ITER, check: bool = True) -> np.ndarray:
    """Roots of every monic row of ``coeffs`` (shape (N, m+1)); returns (N, m).

    Aberth-Ehrlich simultaneous iteration started on a circle around the root
    centroid, then one guarded Newton step per root.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=complex))
    if not np.allclose(coeffs[:, 0], 1.0, rtol=0, atol=0):
        raise ValueError("polynomials must be monic")
    N, m = coeffs.shape[0], coeffs.shape[1] - 1
    if m < 1:
        raise ValueError("degree must be >= 1")
    if m == 1:
        return -coeffs[:, 1:2].copy()

    dcoeffs = _derivative(coeffs)
    abs_coeffs = np.abs(coeffs)
    k = np.arange(1, m + 1)
    radius = (np.abs(coeffs[:, 1:]) ** (1.0 / k)).max(axis=1)
    center = -coeffs[:, 1] / m
    radius = np.maximum(radius, 1e-3 * np.maximum(1.0, np.abs(center)))
    angles = 2 * np.pi * np.arange(m) / m + 0.4
    z = center[:, None] + radius[:, None] * np.exp(1j * angles)[None, :]

    active = np.ones(N, dtype=bool)
    eye = np.eye(m, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        zz = z[idx]
        c = coeffs[idx][:, None, :]
        p = horner(c, zz)
        dp = horner(dcoeffs[idx][:, None, :], zz)
        # backward-error scale of |p(z)| for the stopping test
        bscale = horner(abs_coeffs[idx][:, None, :], np.abs(zz)).real
        diff = zz[:, :, None] - zz[:, None, :]
        diff[:, eye] = 1.0
        tiny = np.abs(diff) < 1e-300
        diff[tiny] = 1e-300
        inv = 1.0 / diff
        inv[:, eye] = 0.0
        s = inv.sum(axis=2)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            ratio = p / dp
            w = ratio / (1.0 - ratio * s)
        bad = ~np.isfinite(w)
        if bad.any():
            w[bad] = 1e-8 * (1 + np.abs(zz[bad])) * np.exp(1j * 0.7)
        z[idx] = zz - w
        step_small = np.abs(w) <= 4 * _EPS * np.maximum(1.0, np.abs(zz))
        resid_small = np.abs(p) <= 8 * _EPS * bscale
        done = np.all(step_small | resid_small, axis=1)
        active[idx[done]] = False

    # one Newton polish per root, kept only where it lowers the residual
    p0 = np.abs(horner(coeffs[:, None, :], z))
    dp = horner(dcoeffs[:, None, :], z)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        z_new = z - horner(coeffs[:, None, :], z) / dp
    ok = np.isfinite(z_new)
    p1 = np.full_like(p0, np.inf)
    p1[ok] = np.abs(horner(coeffs[:, None, :], np.where(ok, z_new, 0))[ok])
    better = ok & (p1 < p0)
    z = np.where(better, z_new, z)

    if check:
        resid = np.abs(horner(coeffs[:, None, :], z)).max(axis=1)
        tol = residual_tolerance(coeffs)
        if np.any(resid > tol):
            worst = float((resid / tol).max() * RESIDUAL_TOL)
            raise RootFindingError("root iteration failed to converge", worst)
    return z


@dataclass(frozen=True)
class RootSet:
    xi: np.ndarray | None
    roots: np.ndarray
    residuals: np.ndarray


def roots_at(coeffs, xi=None) -> RootSet:
    """Roots of one monic coefficient vector with per-root residuals |P(tau_k)|."""
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.ndim != 1:
        raise ValueError("roots_at takes a single coefficient vector")
    if coeffs[0] != 1:
        raise ValueError("leading coefficient must be 1")
    z = roots_batch(coeffs[None, :])[0]
    residuals = np.abs(horner(coeffs, z))
    return RootSet(None if xi is None else np.asarray(xi, float), z, residuals)


# -- discriminant ------------------------------------------------------------------


def sylvester_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sylvester matrices of coefficient rows ``a`` (deg p) and ``b`` (deg q), batched."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    p, q = a.shape[1] - 1, b.shape[1] - 1
    size = p + q
    S = np.zeros((a.shape[0], size, size), dtype=complex)
    for i in range(q):
        S[:, i, i : i + p + 1] = a
    for i in range(p):
        S[:, q + i, i : i + q + 1] = b
    return S


def discriminant_batch(coeffs) -> np.ndarray:
    """Discriminants of monic rows via the Sylvester resultant of P and dP/dtau."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=complex))
    m = coeffs.shape[1] - 1
    if m < 2:
        raise ValueError("discriminant needs degree >= 2")
    res = np.linalg.det(sylvester_matrix(coeffs, _derivative(coeffs)))
    sign = -1.0 if (m * (m - 1) // 2) % 2 else 1.0
    return sign * res


def discriminant_at(sym: OperatorSymbol, xi) -> complex:
    """Discriminant of tau -> P(tau, xi); zero exactly where roots collide."""
    xi = np.asarray(xi, dtype=float).reshape(1, -1)
    return complex(discriminant_batch(tau_poly_batch(sym, xi))[0])


def discriminant_scale(m: int, radii) -> np.ndarray:
    """<xi>^(m(m-1)): the size of the discriminant of a monic order-m symbol."""
    return (1.0 + np.asarray(radii, float) ** 2) ** (m * (m - 1) / 2)


# -- branch tracking -------------------------------------------------------------------


@dataclass(frozen=True)
class RootField:
    """Branch-labelled roots on a grid; ``branches`` has shape (m, grid.size)."""

    grid: FrequencyGrid
    branches: np.ndarray
    discriminant: np.ndarray

    @property
    def m(self) -> int:
        return self.branches.shape[0]

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def normalized_discriminant(self) -> np.ndarray:
        return np.abs(self.discriminant) / discriminant_scale(self.m, self.grid.radii)

    def min_im(self) -> np.ndarray:
        return self.branches.imag.min(axis=0)

    def lowest_branch(self) -> np.ndarray:
        """Pointwise root of smallest imaginary part, independent of labels."""
        k = np.argmin(self.branches.imag, axis=0)
        return self.branches[k, np.arange(self.branches.shape[1])]

    def on_grid(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(self.grid.shape)


def _match_exact_small(parent: np.ndarray, child: np.ndarray) -> np.ndarray:
    m = parent.shape[1]
    perms = np.array(list(itertools.permutations(range(m))))
    cost = np.abs(parent[:, :, None] - child[:, None, :])
    total = cost[:, np.arange(m)[None, :], perms].sum(axis=2)
    best = perms[np.argmin(total, axis=1)]
    return np.take_along_axis(child, best, axis=1)


def _match_greedy(p: np.ndarray, c: np.ndarray) -> np.ndarray:
    m = len(p)
    cost = np.abs(p[:, None] - c[None, :])
    order = np.argsort(cost, axis=None)
    perm = -np.ones(m, dtype=int)
    used = np.zeros(m, dtype=bool)
    for flat in order:
        i, j = divmod(int(flat), m)
        if perm[i] < 0 and not used[j]:
            perm[i] = j
            used[j] = True
    # verification: each match must be unambiguous against child separation
    sep = np.abs(c[:, None] - c[None, :]) + np.diag(np.full(m, np.inf))
    if np.all(cost[np.arange(m), perm] < 0.5 * sep.min(axis=1)[perm]):
        return c[perm]
    rows, cols = linear_sum_assignment(cost)
    return c[cols[np.argsort(rows)]]


def match_roots(parent: np.ndarray, child: np.ndarray) -> np.ndarray:
    """Reorder each child row to minimise total distance to its parent row."""
    parent = np.atleast_2d(parent)
    child = np.atleast_2d(child)
    m = parent.shape[1]
    if m == 1:
        return child.copy()
    if m <= 6:
        return _match_exact_small(parent, child)
    out = np.empty_like(child)
    for r in range(parent.shape[0]):
        if m <= EXACT_MATCH_MAX_M:
            cost = np.abs(parent[r][:, None] - child[r][None, :])
            rows, cols = linear_sum_assignment(cost)
            out[r] = child[r][cols[np.argsort(rows)]]
        else:
            out[r] = _match_greedy(parent[r], child[r])
    return out


def _sort_key_order(z: np.ndarray) -> np.ndarray:
    return np.lexsort((np.round(z.imag, 12), np.round(z.real, 12)))


def track_branches(sym: OperatorSymbol, grid: FrequencyGrid) -> RootField:
    """Roots at every node, labelled continuously from the largest-|xi| node outward."""
    if sym.n != grid.n:
        raise ValueError("grid dimension does not match the symbol")
    nodes = grid.nodes
    coeffs = tau_poly_batch(sym, nodes)
    raw = roots_batch(coeffs)
    disc = discriminant_batch(coeffs) if sym.m >= 2 else np.ones(len(nodes), dtype=complex)

    shape = grid.shape
    seed_flat = int(np.argmax(grid.radii))
    seed = np.array(np.unravel_index(seed_flat, shape))
    idx = np.indices(shape).reshape(grid.n, -1).T
    layer = np.abs(idx - seed).sum(axis=1)
    # parent: one step toward the seed along the last differing axis
    parent_idx = idx.copy()
    differs = idx != seed
    last = np.where(differs.any(axis=1), grid.n - 1 - np.argmax(differs[:, ::-1], axis=1), -1)
    has_parent = last >= 0
    rows = np.flatnonzero(has_parent)
    ax = last[rows]
    parent_idx[rows, ax] -= np.sign(idx[rows, ax] - seed[ax])
    parent_flat = np.ravel_multi_index(parent_idx.T, shape)

    labelled = np.empty_like(raw)
    labelled[seed_flat] = raw[seed_flat][_sort_key_order(raw[seed_flat])]
    for d in range(1, int(layer.max()) + 1):
        members = np.flatnonzero(layer == d)
        labelled[members] = match_roots(labelled[parent_flat[members]], raw[members])
    return RootField(grid=grid, branches=labelled.T.copy(), discriminant=disc)


# -- multiplicities ------------------------------------------------------------------


@dataclass(frozen=True)
class MultiplicityCluster:
    nodes: np.ndarray
    L: int
    codim_estimate: float
    codim_stderr: float
    min_im: float
    branches: tuple[int, ...] = ()
    representative: np.ndarray | None = None


def _axis_minimum_mask(values: np.ndarray, threshold: float) -> np.ndarray:
    """Nodes where ``values`` has a 1-D local minimum whose interpolated depth is below threshold."""
    mask = values < threshold
    sq = values ** 2
    for axis in range(values.ndim):
        if values.shape[axis] < 3:
            continue
        left = np.roll(sq, 1, axis=axis)
        right = np.roll(sq, -1, axis=axis)
        interior = np.ones(values.shape, dtype=bool)
        sl = [slice(None)] * values.ndim
        sl[axis] = 0
        interior[tuple(sl)] = False
        sl[axis] = -1
        interior[tuple(sl)] = False
        is_min = interior & (sq <= left) & (sq <= right)
        curv = left - 2 * sq + right
        with np.errstate(divide="ignore", invalid="ignore"):
            depth = np.where(curv > 0, sq - (right - left) ** 2 / (8 * curv), sq)
        depth = np.sqrt(np.maximum(depth, 0.0))
        mask |= is_min & (depth < threshold)
    return mask


def _group_size(roots: np.ndarray, radius_scale: float) -> tuple[int, tuple[int, ...]]:
    m = len(roots)
    dist = np.abs(roots[:, None] - roots[None, :]) + np.diag(np.full(m, np.inf))
    i, j = np.unravel_index(np.argmin(dist), dist.shape)
    cut = max(4 * dist[i, j], 1e-8 * radius_scale)
    group = {int(i)}
    frontier = [int(i)]
    while frontier:
        a = frontier.pop()
        for b in np.flatnonzero(dist[a] <= cut):
            if int(b) not in group:
                group.add(int(b))
                frontier.append(int(b))
    return len(group), tuple(sorted(group))


def neighborhood_codim(mask: np.ndarray, spacing: float, factors=(2, 4, 8)) -> tuple[float, float]:
    """Codimension from the scaling of eps-neighbourhood volume of a node set.

    Counts nodes within eps of the set (excluding the set itself) for each
    eps = factor * spacing and regresses log volume on log eps.
    """
    n = mask.ndim
    dist = ndimage.distance_transform_edt(~mask, sampling=spacing)
    base = mask.sum()
    eps = np.asarray(factors, float) * spacing
    counts = np.array([(dist <= e + 1e-9 * spacing).sum() - base for e in eps], float)
    if np.any(counts <= 0):
        return float(n), 0.0
    x = np.log(eps)
    y = np.log(counts * spacing ** n)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope = coef[0]
    resid = y - A @ coef
    dof = max(len(x) - 2, 1)
    stderr = float(np.sqrt((resid @ resid) / dof / ((x - x.mean()) ** 2).sum()))
    return float(slope), stderr


def multiplicity_clusters(field: RootField, disc_threshold: float = 1e-3) -> list[MultiplicityCluster]:
    """Connected grid components where the normalised discriminant vanishes.

    A node is kept when |Delta| / <xi>^(m(m-1)) is below ``disc_threshold``
    directly, or when it is a 1-D local minimum whose parabolic depth is.
    """
    if field.m < 2:
        return []
    grid = field.grid
    norm = field.on_grid(field.normalized_discriminant)
    mask = _axis_minimum_mask(norm, disc_threshold)
    if not mask.any():
        return []
    # bridge one-node gaps left by the discrete threshold along curved sets
    structure = np.ones((3,) * grid.n)
    labels, count = ndimage.label(ndimage.binary_dilation(mask, structure), structure=structure)
    labels = labels * mask
    nodes = grid.nodes
    radii = grid.radii
    flat_norm = norm.ravel()
    clusters = []
    for lab in range(1, count + 1):
        comp = labels == lab
        flat = np.flatnonzero(comp.ravel())
        rep = flat[np.argmin(flat_norm[flat])]
        L, members = _group_size(field.branches[:, rep], 1.0 + radii[rep])
        codim, stderr = neighborhood_codim(comp, grid.spacing)
        codim = float(np.clip(codim, 1.0, grid.n))
        min_im = float(field.branches[list(members)][:, flat].imag.min())
        clusters.append(MultiplicityCluster(
            nodes=nodes[flat],
            L=max(L, 2),
            codim_estimate=codim,
            codim_stderr=stderr,
            min_im=min_im,
            branches=members,
            representative=nodes[rep],
        ))
    return clusters


# -- diagnostics ------------------------------------------------------------------------


def symbol_bound_constant(field: RootField) -> float:
    """Empirical C in |tau_k(xi)| <= C <xi> over the grid."""
    bracket = np.sqrt(1.0 + field.grid.radii ** 2)
    return float((np.abs(field.branches) / bracket).max())


def principal_deviation(sym: OperatorSymbol, xis) -> np.ndarray:
    """max_k min_l |tau_k(xi) - phi_l(xi)| with phi the principal roots."""
    xis = np.atleast_2d(np.asarray(xis, float))
    full = roots_batch(tau_poly_batch(sym, xis))
    princ = roots_batch(tau_poly_batch(sym.principal(), xis))
    d = np.abs(full[:, :, None] - princ[:, None, :]).min(axis=2)
    return d.max(axis=1)


def write_root_field_csv(field: RootField, path) -> Path:
    """Columns xi_1..xi_n, branch, re_tau, im_tau, re_disc, im_disc."""
    path = Path(path)
    nodes = field.nodes
    n = field.grid.n
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"xi_{i + 1}" for i in range(n)] + ["branch", "re_tau", "im_tau", "re_disc", "im_disc"])
        for node_i in range(nodes.shape[0]):
            d = field.discriminant[node_i]
            for k in range(field.m):
                z = field.branches[k, node_i]
                w.writerow([repr(float(x)) for x in nodes[node_i]] + [
                    k, repr(float(z.real)), repr(float(z.imag)), repr(float(d.real)), repr(float(d.imag))
                ])
    return path
