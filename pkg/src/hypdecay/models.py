"""Closed-form reference symbols and the Hermite-Grad moment system.

The wave family covers the wave, Klein-Gordon and damped wave equations and
their negative-mass variants.  Grad systems are the Hermite moment
truncations of the kinetic Fokker-Planck equation; their dispersion
polynomial is det(tau I + sum_j A_j xi_j - i B).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .roots import RootSet, roots_at
from .symbolcore import OperatorSymbol, SparsePoly

GRAD_MAX_SIZE = 10_000
GRAD_SYMBOLIC_MAX_SIZE = 60


@dataclass(frozen=True)
class WaveFamilyParams:
    """u_tt - c^2 Lap u + delta u_t + mu u = 0."""

    c: float = 1.0
    delta: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("wave speed c must be positive")


def wave_family_symbol(params: WaveFamilyParams, n: int = 1) -> OperatorSymbol:
    """tau^2 - i delta tau - c^2 |xi|^2 - mu."""
    p1 = SparsePoly.constant(n, -1j * params.delta)
    p2 = SparsePoly.norm_squared(n, -params.c ** 2) + SparsePoly.constant(n, -params.mu)
    return OperatorSymbol(n, 2, (p1, p2))


def wave_family_roots(params: WaveFamilyParams, xi) -> np.ndarray:
    """(tau_-, tau_+) = i delta/2 -/+ sqrt(c^2|xi|^2 + mu - delta^2/4), principal sqrt.

    Accepts a single vector or an array (..., n); returns (..., 2).
    """
    xi = np.asarray(xi, float)
    r2 = np.sum(xi * xi, axis=-1)
    root = np.sqrt(params.c ** 2 * r2 + params.mu - params.delta ** 2 / 4 + 0j)
    half = 0.5j * params.delta
    return np.stack([half - root, half + root], axis=-1)


WAVE_CASES = (
    "wave",
    "klein_gordon",
    "dissipative",
    "no_decay",
    "exponential",
    "negative_mass_conditional",
)


def wave_family_case(params: WaveFamilyParams) -> str:
    d, mu = params.delta, params.mu
    if d < 0:
        return "no_decay"
    if mu < 0:
        return "negative_mass_conditional"
    if d == 0:
        return "wave" if mu == 0 else "klein_gordon"
    return "dissipative" if mu == 0 else "exponential"


def _sinhc_cosh_series(x2: np.ndarray, terms: int = 14) -> tuple[np.ndarray, np.ndarray]:
    """sinh(x)/x and cosh(x) as power series in x^2 (x^2 may be negative)."""
    s = np.zeros_like(x2)
    c = np.zeros_like(x2)
    term_s = np.ones_like(x2)
    term_c = np.ones_like(x2)
    for k in range(terms):
        s = s + term_s
        c = c + term_c
        term_s = term_s * x2 / ((2 * k + 2) * (2 * k + 3))
        term_c = term_c * x2 / ((2 * k + 1) * (2 * k + 2))
    return s, c


def matsumura_multiplier(xi, t) -> tuple[np.ndarray, np.ndarray]:
    """(E_0, E_1) for u_tt - Lap u + u_t = 0 in closed form.

    ``xi`` may be a scalar radius, a vector, or an array of vectors (last axis);
    scalars and 1-D arrays are read as |xi|.  Near the double-root shell
    |xi| = 1/2 the sinh/sin quotients are summed as series in t^2(1-4|xi|^2),
    whose leading term is the confluent limit t e^{-t/2}.
    """
    xi = np.asarray(xi, float)
    r2 = xi * xi if xi.ndim <= 1 else np.sum(xi * xi, axis=-1)
    t = np.asarray(t, float)
    r2, t = np.broadcast_arrays(r2, t)
    disc = 1.0 - 4.0 * r2
    x2 = t * t * disc / 4.0
    damp = np.exp(-t / 2)

    series = (np.abs(x2) <= 0.25) | (np.abs(disc) < 1e-8)
    hyper = ~series & (disc > 0)
    trig = ~series & (disc < 0)

    E0 = np.empty(r2.shape)
    E1 = np.empty(r2.shape)

    s, c = _sinhc_cosh_series(np.where(series, x2, 0.0))
    E1[series] = (t * damp * s)[series]
    E0[series] = (damp * (0.5 * t * s + c))[series]

    w = np.sqrt(np.where(hyper, disc, 1.0))
    # e^{-t/2} sinh(tw/2) and e^{-t/2} cosh(tw/2) without overflow
    a = np.exp(-t * (1 - w) / 2)
    b = np.exp(-t * (1 + w) / 2)
    E1[hyper] = ((a - b) / w)[hyper]
    E0[hyper] = (0.5 * (a - b) / w + 0.5 * (a + b))[hyper]

    v = np.sqrt(np.where(trig, -disc, 1.0))
    sn = np.sin(t * v / 2)
    cs = np.cos(t * v / 2)
    E1[trig] = (2 * damp * sn / v)[trig]
    E0[trig] = (damp * (sn / v + cs))[trig]
    return E0, E1


# -- Grad systems -------------------------------------------------------------------


class GradSizeError(ValueError):
    """Requested moment system exceeds the size guard."""


def graded_indices(n: int, N: int) -> list[tuple[int, ...]]:
    """Multi-indices with |alpha| <= N, by degree then descending lexicographic."""
    idx = [a for a in product(range(N + 1), repeat=n) if sum(a) <= N]
    return sorted(idx, key=lambda a: (sum(a), tuple(-x for x in a)))


def grad_size(n: int, N: int) -> int:
    return math.comb(n + N, n)


@dataclass(frozen=True)
class GradSystem:
    n: int
    N: int
    indices: tuple[tuple[int, ...], ...]
    A: tuple[np.ndarray, ...]
    B: np.ndarray

    @property
    def M(self) -> int:
        return len(self.indices)

    def flux(self, xi) -> np.ndarray:
        """sum_j A_j xi_j for xi of shape (n,) or (K, n)."""
        xi = np.asarray(xi, float)
        return np.tensordot(xi, np.stack(self.A), axes=([-1], [0]))

    def hermite_scaling(self) -> np.ndarray:
        """diag(sqrt(alpha!)); conjugating A_j by it gives a symmetric matrix."""
        return np.diag([math.sqrt(math.prod(math.factorial(a) for a in alpha)) for alpha in self.indices])


def grad_system(n: int, N: int) -> GradSystem:
    if n < 1 or N < 1:
        raise ValueError("grad_system needs n >= 1 and N >= 1")
    M = grad_size(n, N)
    if M > GRAD_MAX_SIZE:
        raise GradSizeError(f"moment system of size {M} exceeds the guard {GRAD_MAX_SIZE}")
    indices = graded_indices(n, N)
    pos = {a: i for i, a in enumerate(indices)}
    A = []
    for j in range(n):
        Aj = np.zeros((M, M))
        for alpha, col in pos.items():
            if alpha[j] > 0:
                lower = alpha[:j] + (alpha[j] - 1,) + alpha[j + 1 :]
                Aj[pos[lower], col] = alpha[j]
            upper = alpha[:j] + (alpha[j] + 1,) + alpha[j + 1 :]
            if upper in pos:
                Aj[pos[upper], col] = 1.0
        A.append(Aj)
    B = np.diag([float(sum(a)) for a in indices])
    return GradSystem(n, N, tuple(indices), tuple(A), B)


def la_budde(H: np.ndarray) -> np.ndarray:
    """Monic coefficients of det(tau I - H) for an upper Hessenberg H.

    p_i = (tau - h_ii) p_{i-1} - sum_m h_{i-m,i} beta_i ... beta_{i-m+1} p_{i-m-1},
    with beta the subdiagonal.  Unlike the trace recursion this involves no
    powers of H, so a diagonal H gives the product expansion exactly.
    """
    H = np.asarray(H, dtype=complex)
    M = H.shape[0]
    polys = [np.array([1.0 + 0j])]  # ascending coefficients, p_0 = 1
    for i in range(M):
        shifted = np.concatenate([[0.0], polys[i]])  # tau * p_{i-1}
        nxt = shifted - H[i, i] * np.concatenate([polys[i], [0.0]])
        prod = 1.0 + 0j
        for m in range(1, i + 1):
            prod = prod * H[i - m + 1, i - m]
            if prod == 0:
                break
            tail = polys[i - m]
            nxt[: len(tail)] -= H[i - m, i] * prod * tail
        polys.append(nxt)
    return polys[-1][::-1].copy()


def char_poly(X: np.ndarray) -> np.ndarray:
    """Monic coefficients of det(tau I - X), batched over leading axes.

    Hessenberg reduction followed by the La Budde recursion.  The
    Faddeev-LeVerrier trace recursion was tried first and loses every digit
    by M ~ 40 on Grad systems; this path stays near 1e-15 relative.
    """
    from scipy.linalg import hessenberg

    X = np.asarray(X, dtype=complex)
    lead = X.shape[:-2]
    flat = X.reshape(-1, *X.shape[-2:])
    out = np.stack([la_budde(hessenberg(A)) for A in flat])
    return out.reshape(*lead, X.shape[-1] + 1)


def _grad_matrix(sys: GradSystem, xi) -> np.ndarray:
    return -sys.flux(xi) + 1j * sys.B


def grad_dispersion_coeffs(sys: GradSystem, xi) -> np.ndarray:
    """Coefficients of P(., xi) at one or many frequency vectors."""
    return char_poly(_grad_matrix(sys, xi))


def grad_dispersion_roots(sys: GradSystem, xi) -> RootSet:
    xi = np.asarray(xi, float)
    if xi.shape != (sys.n,):
        raise ValueError(f"xi must have length {sys.n}")
    return roots_at(grad_dispersion_coeffs(sys, xi), xi)


def _round_gaussian(c: complex, tol: float = 1e-9) -> complex:
    re, im = round(c.real), round(c.imag)
    if abs(c.real - re) <= tol and abs(c.imag - im) <= tol:
        return complex(re, im)
    return c


def grad_symbol(sys: GradSystem) -> OperatorSymbol:
    """The dispersion polynomial as an :class:`OperatorSymbol`.

    Faddeev-LeVerrier run over matrices of polynomials in xi.  All
    intermediate quantities are Gaussian integers, so floating arithmetic
    is exact at these sizes.
    """
    n, M = sys.n, sys.M
    if M > GRAD_SYMBOLIC_MAX_SIZE:
        raise GradSizeError(f"symbolic expansion limited to size {GRAD_SYMBOLIC_MAX_SIZE}, got {M}")
    zero = SparsePoly(n, {})
    X = [[zero] * M for _ in range(M)]
    for r in range(M):
        for c in range(M):
            terms = {}
            for j in range(n):
                a = sys.A[j][r, c]
                if a:
                    e = [0] * n
                    e[j] = 1
                    terms[tuple(e)] = -a
            if r == c and sys.B[r, r]:
                terms[(0,) * n] = 1j * sys.B[r, r]
            X[r][c] = SparsePoly(n, terms)

    def matmul(P, Q):
        out = [[zero] * M for _ in range(M)]
        for i in range(M):
            row = [(k, P[i][k]) for k in range(M) if not P[i][k].is_zero()]
            for j in range(M):
                acc = zero
                for k, pik in row:
                    if not Q[k][j].is_zero():
                        acc = acc + pik * Q[k][j]
                out[i][j] = acc
        return out

    one = SparsePoly.constant(n, 1.0)
    Mk = [[one if i == j else zero for j in range(M)] for i in range(M)]
    coeffs = []
    for k in range(1, M + 1):
        AM = matmul(X, Mk)
        tr = zero
        for i in range(M):
            tr = tr + AM[i][i]
        ck = tr * (-1.0 / k)
        ck = SparsePoly(n, {a: _round_gaussian(c) for a, c in ck.terms.items()})
        coeffs.append(ck)
        Mk = [[AM[i][j] + (ck if i == j else zero) for j in range(M)] for i in range(M)]
    return OperatorSymbol(n, M, tuple(coeffs))


def grad_matrix_dump(sys: GradSystem) -> dict:
    return {
        "n": sys.n,
        "N": sys.N,
        "M": sys.M,
        "indices": [list(a) for a in sys.indices],
        "A": [Aj.tolist() for Aj in sys.A],
        "B_diagonal": np.diag(sys.B).tolist(),
    }

