"""Frequency-side propagators E_j(xi, t).

E_j solves the per-frequency ODE P(D_t, xi) E = 0 (D_t = -i d/dt) with
d_t^l E_j(0) = delta_{lj}.  The robust path is the matrix exponential of the
companion system in the state (E, E', ..., E^(m-1)); the closed Vandermonde
weights give a fast path away from multiplicities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .roots import discriminant_batch, discriminant_scale, roots_batch
from .symbolcore import OperatorSymbol, tau_poly_batch

TAYLOR_DEGREE = 18
SCALING_THETA = 0.5
NEAR_MULTIPLICITY = 1e-6
UNSTABLE_TOL = 1e-9
MAX_GROWTH = 30.0


class UnstableModeError(ArithmeticError):
    """A mode with Im tau < 0 would grow beyond the representable range."""

    def __init__(self, xi, t, branch: int, im_tau: float):
        super().__init__(
            f"unstable mode at xi={np.round(xi, 6).tolist()}, t={t:g}: "
            f"root {branch} has Im tau = {im_tau:.3e}"
        )
        self.xi = xi
        self.t = t
        self.branch = branch
        self.im_tau = im_tau


class NearMultiplicityError(ArithmeticError):
    """Closed-form weights requested too close to a root collision."""


# -- matrix exponential ------------------------------------------------------------


def expm(A: np.ndarray) -> np.ndarray:
    """exp(A) for a square matrix or a stack (..., m, m).

    Scaling and squaring: each matrix is scaled by 2^-s so that its 1-norm is
    at most 0.5, the degree-18 Taylor polynomial is applied, and the result
    is squared s times.
    """
    A = np.asarray(A, dtype=complex)
    single = A.ndim == 2
    if single:
        A = A[None]
    lead = A.shape[:-2]
    m = A.shape[-1]
    flat = A.reshape(-1, m, m)
    norms = np.abs(flat).sum(axis=-2).max(axis=-1)
    with np.errstate(divide="ignore"):
        s = np.where(norms > SCALING_THETA, np.ceil(np.log2(norms / SCALING_THETA)), 0).astype(int)
    out = np.empty_like(flat)
    eye = np.eye(m, dtype=complex)
    for sv in np.unique(s):
        sel = np.flatnonzero(s == sv)
        X = flat[sel] / (2.0 ** sv)
        P = np.broadcast_to(eye, X.shape).copy()
        for k in range(TAYLOR_DEGREE, 0, -1):
            P = eye + (X @ P) / k
        for _ in range(int(sv)):
            P = P @ P
        out[sel] = P
    out = out.reshape(*lead, m, m)
    return out[0] if single else out


# -- companion system --------------------------------------------------------------


def ode_coefficients(tau_coeffs: np.ndarray) -> np.ndarray:
    """q_j = i^j p_j: the monic ODE d^m E + sum_j q_j d^(m-j) E = 0 in d = d/dt."""
    tau_coeffs = np.asarray(tau_coeffs, dtype=complex)
    m = tau_coeffs.shape[-1] - 1
    return tau_coeffs * (1j ** np.arange(m + 1))


def companion_matrix(tau_coeffs: np.ndarray) -> np.ndarray:
    """First-order system matrix; its eigenvalues are i*tau_k.  Batched over rows."""
    q = ode_coefficients(tau_coeffs)
    m = q.shape[-1] - 1
    C = np.zeros(q.shape[:-1] + (m, m), dtype=complex)
    if m > 1:
        C[..., np.arange(m - 1), np.arange(1, m)] = 1.0
    C[..., m - 1, :] = -q[..., :0:-1]
    return C


@dataclass(frozen=True)
class CompanionSystem:
    xi: np.ndarray
    C: np.ndarray


def companion_system(sym: OperatorSymbol, xi) -> CompanionSystem:
    xi = np.asarray(xi, float).reshape(sym.n)
    return CompanionSystem(xi, companion_matrix(tau_poly_batch(sym, xi[None])[0]))


@dataclass(frozen=True)
class PropagatorValue:
    xi: np.ndarray
    t: float
    E: np.ndarray
    dtE: np.ndarray | None = None
    r: int = 0


def _derivative_rows(C: np.ndarray, r: int) -> np.ndarray:
    """Row 0 of C^r for each matrix in the stack."""
    m = C.shape[-1]
    row = np.zeros(C.shape[:-2] + (1, m), dtype=complex)
    row[..., 0, 0] = 1.0
    for _ in range(r):
        row = row @ C
    return row[..., 0, :]


def _check_stability(roots: np.ndarray, nodes: np.ndarray, t: float, tol: float = UNSTABLE_TOL):
    im = roots.imag
    worst = im.min(axis=1)
    bad = (worst < -tol) & (-worst * t > MAX_GROWTH)
    if bad.any():
        i = int(np.argmax(bad))
        k = int(np.argmin(im[i]))
        raise UnstableModeError(nodes[i], t, k, float(im[i, k]))


def propagator_batch(sym: OperatorSymbol, nodes, times, r: int = 0, check_stability: bool = True) -> np.ndarray:
    """d_t^r E_j(xi, t) for all nodes and times; shape (len(times), N, m)."""
    nodes = np.atleast_2d(np.asarray(nodes, float))
    times = np.atleast_1d(np.asarray(times, float))
    if np.any(times < 0):
        raise ValueError("times must be non-negative")
    coeffs = tau_poly_batch(sym, nodes)
    C = companion_matrix(coeffs)
    if check_stability and times.max() > 0:
        _check_stability(roots_batch(coeffs), nodes, float(times.max()))
    row = _derivative_rows(C, r)
    out = np.empty((len(times), nodes.shape[0], sym.m), dtype=complex)
    steps = np.diff(times)
    uniform = len(times) > 2 and np.allclose(steps, steps[0], rtol=1e-12, atol=0)
    if uniform:
        # a sweep at fixed xi reuses exp(dt C)
        state = expm(times[0] * C)
        step = expm(steps[0] * C)
        for i in range(len(times)):
            if i:
                state = state @ step
            out[i] = np.einsum("nk,nkj->nj", row, state)
    else:
        for i, t in enumerate(times):
            out[i] = np.einsum("nk,nkj->nj", row, expm(t * C))
    return out


def propagator_at(sym: OperatorSymbol, xi, t: float, r: int = 0) -> PropagatorValue:
    """E_j(xi, t) for j = 0..m-1, plus the r-th time derivatives when r > 0."""
    if t < 0:
        raise ValueError("t must be non-negative")
    xi = np.asarray(xi, float).reshape(sym.n)
    coeffs = tau_poly_batch(sym, xi[None])
    C = companion_matrix(coeffs)[0]
    if t > 0:
        _check_stability(roots_batch(coeffs), xi[None], float(t))
    X = expm(t * C)
    E = X[0].copy()
    dtE = (_derivative_rows(C[None], r)[0] @ X) if r > 0 else None
    return PropagatorValue(xi, float(t), E, dtE, r)


def initial_derivatives(sym: OperatorSymbol, xi) -> np.ndarray:
    """Matrix D[l, j] = d_t^l E_j(xi, 0), computed from rows of C^l."""
    C = companion_system(sym, xi).C
    m = sym.m
    D = np.empty((m, m), dtype=complex)
    for l in range(m):
        D[l] = _derivative_rows(C[None], l)[0]
    return D


# -- Vandermonde weights -----------------------------------------------------------


@dataclass(frozen=True)
class VandermondeCoeffs:
    """E_j(xi, t) = sum_k A[j, k] exp(i tau_k t) when ``valid``."""

    xi: np.ndarray
    tau: np.ndarray
    A: np.ndarray
    valid: bool
    normalized_discriminant: float
    asymptotic_scaled: np.ndarray | None = None

    def evaluate(self, t, r: int = 0) -> np.ndarray:
        """d_t^r E_j at the given times; shape (len(t), m)."""
        if not self.valid:
            raise NearMultiplicityError(
                f"roots nearly coincide at xi={self.xi.tolist()} "
                f"(normalised discriminant {self.normalized_discriminant:.2e})"
            )
        t = np.atleast_1d(np.asarray(t, float))
        modes = (1j * self.tau) ** r * np.exp(1j * np.outer(t, self.tau))
        return modes @ self.A.T


def vandermonde_weights(tau: np.ndarray) -> np.ndarray:
    """A[j, k] for distinct roots ``tau``.

    The closed formula in the roots themselves,
    (-1)^j e_{m-j-1}(tau without k) / prod_{l != k} (tau_l - tau_k),
    matches the initial data d_t^l E_j(0) = delta_{lj} only after a factor
    (-i)^j, because each mode is exp(i tau t) and differentiation brings
    down i tau rather than tau.
    """
    tau = np.asarray(tau, dtype=complex)
    m = len(tau)
    A = np.empty((m, m), dtype=complex)
    for k in range(m):
        others = np.delete(tau, k)
        poly = np.poly(others) if m > 1 else np.array([1.0])
        denom = np.prod(others - tau[k])
        for j in range(m):
            i = m - j - 1
            e_i = (-1) ** i * poly[i]
            A[j, k] = (-1) ** j * e_i / denom * (-1j) ** j
    return A


def vandermonde_at(sym: OperatorSymbol, xi, threshold: float = NEAR_MULTIPLICITY) -> VandermondeCoeffs:
    xi = np.asarray(xi, float).reshape(sym.n)
    coeffs = tau_poly_batch(sym, xi[None])
    tau = roots_batch(coeffs)[0]
    r = float(np.linalg.norm(xi))
    if sym.m >= 2:
        nd = float(np.abs(discriminant_batch(coeffs)[0]) / discriminant_scale(sym.m, r))
    else:
        nd = 1.0
    valid = nd >= threshold
    with np.errstate(divide="ignore", invalid="ignore"):
        A = vandermonde_weights(tau)
    scaled = None
    if r >= 1.0:
        scaled = np.abs(A).max(axis=1) * r ** np.arange(sym.m)
    return VandermondeCoeffs(xi, tau, A, bool(valid), nd, scaled)


# -- multiplicity bounds -----------------------------------------------------------


@dataclass(frozen=True)
class BoundCheck:
    C_fit: float
    passed: bool
    growth_slope: float
    L: int
    worst_xi: np.ndarray
    worst_t: float


def multiplicity_bound_check(
    sym: OperatorSymbol,
    cluster,
    t_samples,
    components=None,
    xi_samples=None,
    max_growth_slope: float = 0.25,
) -> BoundCheck:
    """Fit the smallest C with |E_j(xi, t)| <= C (1+t)^(L-1) exp(-t min_k Im tau_k(xi)).

    ``cluster`` supplies L and (unless ``xi_samples`` is given) the nodes.
    The check passes when C is finite and the late-time envelope ratio does
    not keep growing (log-log slope against 1+t at most ``max_growth_slope``).
    """
    L = int(cluster.L)
    if L < 1:
        raise ValueError("cluster multiplicity must be >= 1")
    nodes = np.atleast_2d(np.asarray(cluster.nodes if xi_samples is None else xi_samples, float))
    t = np.sort(np.atleast_1d(np.asarray(t_samples, float)))
    E = propagator_batch(sym, nodes, t)
    if components is not None:
        E = E[..., list(np.atleast_1d(components))]
    tau = roots_batch(tau_poly_batch(sym, nodes))
    min_im = tau.imag.min(axis=1)
    envelope = (1 + t)[:, None] ** (L - 1) * np.exp(-np.outer(t, min_im))
    ratio = np.abs(E).max(axis=2) / envelope
    C = float(ratio.max())
    per_t = ratio.max(axis=1)
    late = t >= 0.5 * t.max()
    slope = 0.0
    if late.sum() >= 2 and t.max() > 0:
        x = np.log1p(t[late])
        y = np.log(np.maximum(per_t[late], 1e-300))
        slope = float(np.polyfit(x, y, 1)[0])
    ti, ni = np.unravel_index(np.argmax(ratio), ratio.shape)
    passed = bool(np.isfinite(C) and slope <= max_growth_slope)
    return BoundCheck(C, passed, slope, L, nodes[ni], float(t[ti]))

