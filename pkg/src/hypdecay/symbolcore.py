"""Operator symbols P(tau, xi) = tau^m + sum_j p_j(xi) tau^(m-j).

Symbols are dense in tau and sparse in xi.  Lower-order terms are folded into
the tau coefficients at construction; the principal (homogeneous) parts are
kept alongside for hyperbolicity checks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

#: Tolerance on |Im| and on root gaps at unit frequency.
HYPERBOLICITY_TOL = 1e-9


class SymbolError(ValueError):
    """Raised when a symbol violates its construction contract."""


class DimensionError(SymbolError):
    """Frequency vector length does not match the symbol dimension."""


MultiIndex = tuple[int, ...]


def _check_index(alpha: Sequence[int], n: int) -> MultiIndex:
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != n:
        raise SymbolError(f"multi-index {alpha} has length {len(alpha)}, expected {n}")
    if any(a < 0 for a in alpha):
        raise SymbolError(f"multi-index {alpha} has negative entries")
    return alpha


@dataclass(frozen=True)
class SparsePoly:
    """Polynomial in xi = (xi_1, ..., xi_n) with complex coefficients.

    ``terms`` maps multi-indices to coefficients; zero coefficients are dropped.
    """

    n: int
    terms: Mapping[MultiIndex, complex] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for alpha, c in self.terms.items():
            alpha = _check_index(alpha, self.n)
            c = complex(c)
            if c != 0:
                clean[alpha] = clean.get(alpha, 0) + c
        clean = {a: c for a, c in clean.items() if c != 0}
        object.__setattr__(self, "terms", dict(sorted(clean.items())))

    @classmethod
    def constant(cls, n: int, c: complex) -> SparsePoly:
        return cls(n, {(0,) * n: c})

    @classmethod
    def variable(cls, n: int, j: int) -> SparsePoly:
        alpha = [0] * n
        alpha[j] = 1
        return cls(n, {tuple(alpha): 1.0})

    @classmethod
    def norm_squared(cls, n: int, scale: complex = 1.0) -> SparsePoly:
        """``scale * |xi|^2``."""
        terms = {}
        for j in range(n):
            alpha = [0] * n
            alpha[j] = 2
            terms[tuple(alpha)] = scale
        return cls(n, terms)

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(a) for a in self.terms), default=-1)

    @property
    def min_degree(self) -> int:
        """Lowest total degree present; -1 for the zero polynomial."""
        return min((sum(a) for a in self.terms), default=-1)

    def is_zero(self) -> bool:
        return not self.terms

    def homogeneous_part(self, d: int) -> SparsePoly:
        return SparsePoly(self.n, {a: c for a, c in self.terms.items() if sum(a) == d})

    def is_real(self, tol: float = 0.0) -> bool:
        return all(abs(c.imag) <= tol for c in self.terms.values())

    def __call__(self, xi) -> complex | np.ndarray:
        return self.evaluate(xi)

    def evaluate(self, xi) -> complex | np.ndarray:
        """Evaluate at ``xi`` of shape (n,) or (..., n)."""
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1:] != (self.n,):
            raise DimensionError(f"xi has trailing shape {xi.shape[-1:]}, expected ({self.n},)")
        out = np.zeros(xi.shape[:-1], dtype=complex)
        for alpha, c in self.terms.items():
            mono = np.ones(xi.shape[:-1])
            for j, a in enumerate(alpha):
                if a:
                    mono = mono * xi[..., j] ** a
            out = out + c * mono
        if out.ndim == 0:
            return complex(out)
        return out

    def __add__(self, other: SparsePoly) -> SparsePoly:
        if self.n != other.n:
            raise DimensionError("dimension mismatch in polynomial sum")
        terms = dict(self.terms)
        for a, c in other.terms.items():
            terms[a] = terms.get(a, 0) + c
        return SparsePoly(self.n, terms)

    def __neg__(self) -> SparsePoly:
        return SparsePoly(self.n, {a: -c for a, c in self.terms.items()})

    def __sub__(self, other: SparsePoly) -> SparsePoly:
        return self + (-other)

    def __mul__(self, other) -> SparsePoly:
        if not isinstance(other, SparsePoly):
            return SparsePoly(self.n, {a: c * complex(other) for a, c in self.terms.items()})
        if self.n != other.n:
            raise DimensionError("dimension mismatch in polynomial product")
        terms: dict[MultiIndex, complex] = {}
        for a, ca in self.terms.items():
            for b, cb in other.terms.items():
                k = tuple(x + y for x, y in zip(a, b))
                terms[k] = terms.get(k, 0) + ca * cb
        return SparsePoly(self.n, terms)

    __rmul__ = __mul__

    def allclose(self, other: SparsePoly, atol: float = 1e-12) -> bool:
        keys = set(self.terms) | set(other.terms)
        return all(abs(self.terms.get(k, 0) - other.terms.get(k, 0)) <= atol for k in keys)


@dataclass(frozen=True)
class OperatorSymbol:
    """Monic full symbol of an m-th order operator in n space dimensions.

    ``tau_coeffs[j-1]`` is p_j(xi), the coefficient of tau^(m-j).
    """

    n: int
    m: int
    tau_coeffs: tuple[SparsePoly, ...]
    principal_coeffs: tuple[SparsePoly, ...] = field(init=False)

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise SymbolError(f"need n >= 1 and m >= 1, got n={self.n}, m={self.m}")
        coeffs = tuple(self.tau_coeffs)
        if len(coeffs) != self.m:
            raise SymbolError(f"expected {self.m} tau coefficients, got {len(coeffs)}")
        for j, p in enumerate(coeffs, start=1):
            if p.n != self.n:
                raise DimensionError(f"p_{j} has dimension {p.n}, expected {self.n}")
            if p.degree > j:
                raise SymbolError(f"p_{j} has degree {p.degree} > {j}")
        principal = tuple(p.homogeneous_part(j) for j, p in enumerate(coeffs, start=1))
        for j, p in enumerate(principal, start=1):
            if not p.is_real(tol=1e-14):
                raise SymbolError(f"principal part of p_{j} has complex coefficients")
        object.__setattr__(self, "tau_coeffs", coeffs)
        object.__setattr__(self, "principal_coeffs", principal)

    @classmethod
    def from_terms(cls, n: int, m: int, terms: Iterable[tuple[int, Sequence[int], complex]]) -> OperatorSymbol:
        """Build from ``(tau_power, xi_exponents, coeff)`` triples.

        The leading ``tau^m`` term is implicit and must not be repeated unless
        it is exactly 1.
        """
        polys: list[dict] = [dict() for _ in range(m)]
        for tau_power, alpha, c in terms:
            alpha = _check_index(alpha, n)
            tau_power = int(tau_power)
            if tau_power == m:
                if any(alpha) or complex(c) != 1:
                    raise SymbolError("leading tau^m coefficient must be exactly 1")
                continue
            if not 0 <= tau_power < m:
                raise SymbolError(f"tau power {tau_power} outside [0, {m}]")
            j = m - tau_power
            polys[j - 1][alpha] = polys[j - 1].get(alpha, 0) + complex(c)
        return cls(n, m, tuple(SparsePoly(n, p) for p in polys))

    # -- JSON ---------------------------------------------------------------

    def to_json_dict(self) -> dict:
        terms = [{"tau_power": self.m, "xi_exponents": [0] * self.n, "coeff": [1.0, 0.0]}]
        for j, p in enumerate(self.tau_coeffs, start=1):
            for alpha, c in p.terms.items():
                terms.append({
                    "tau_power": self.m - j,
                    "xi_exponents": list(alpha),
                    "coeff": [float(c.real), float(c.imag)],
                })
        return {"n": self.n, "m": self.m, "terms": terms}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json_dict(cls, data: Mapping) -> OperatorSymbol:
        try:
            n, m = int(data["n"]), int(data["m"])
            raw = data["terms"]
        except (KeyError, TypeError, ValueError) as exc:
            raise SymbolError(f"malformed operator JSON: {exc}") from exc
        leading_seen = False
        triples = []
        for t in raw:
            try:
                tau_power = int(t["tau_power"])
                alpha = list(t["xi_exponents"])
                re, im = t["coeff"]
            except (KeyError, TypeError, ValueError) as exc:
                raise SymbolError(f"malformed term {t!r}: {exc}") from exc
            if tau_power == m:
                if any(alpha) or [float(re), float(im)] != [1.0, 0.0]:
                    raise SymbolError("leading tau^m coefficient must be exactly [1, 0]")
                leading_seen = True
                continue
            triples.append((tau_power, alpha, complex(float(re), float(im))))
        if not leading_seen:
            raise SymbolError("operator JSON lacks the leading tau^m term")
        return cls.from_terms(n, m, triples)

    @classmethod
    def from_json(cls, text: str) -> OperatorSymbol:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SymbolError(f"invalid JSON: {exc}") from exc
        return cls.from_json_dict(data)

    # -- structure ------------------------------------------------------------

    @property
    def lower_order(self) -> int:
        """Largest total order |alpha| + r of the non-principal terms, or -1."""
        order = -1
        for j, p in enumerate(self.tau_coeffs, start=1):
            lower = p - self.principal_coeffs[j - 1]
            if not lower.is_zero():
                order = max(order, (self.m - j) + lower.degree)
        return order

    def principal(self) -> OperatorSymbol:
        return OperatorSymbol(self.n, self.m, self.principal_coeffs)

    def allclose(self, other: OperatorSymbol, atol: float = 1e-12) -> bool:
        return (self.n, self.m) == (other.n, other.m) and all(
            a.allclose(b, atol) for a, b in zip(self.tau_coeffs, other.tau_coeffs)
        )


def _check_xi(sym: OperatorSymbol, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        xi = xi.reshape(1)
    if xi.shape[-1] != sym.n:
        raise DimensionError(f"xi has length {xi.shape[-1]}, symbol dimension is {sym.n}")
    return xi


def tau_poly_at(sym: OperatorSymbol, xi) -> np.ndarray:
    """Monic coefficients ``[1, p_1(xi), ..., p_m(xi)]`` in descending powers of tau."""
    xi = _check_xi(sym, xi)
    if xi.ndim != 1:
        raise DimensionError("tau_poly_at takes a single frequency vector; use tau_poly_batch")
    return tau_poly_batch(sym, xi[None, :])[0]


def tau_poly_batch(sym: OperatorSymbol, nodes) -> np.ndarray:
    """Coefficient rows for every node; ``nodes`` has shape (N, n)."""
    nodes = _check_xi(sym, nodes)
    nodes = nodes.reshape(-1, sym.n)
    out = np.empty((nodes.shape[0], sym.m + 1), dtype=complex)
    out[:, 0] = 1.0
    for j, p in enumerate(sym.tau_coeffs, start=1):
        out[:, j] = p.evaluate(nodes) if not p.is_zero() else 0.0
    return out


def horner(coeffs, tau):
    """Evaluate a descending-power coefficient vector (or batch of rows) at tau."""
    coeffs = np.asarray(coeffs)
    acc = np.zeros(np.broadcast(coeffs[..., 0], tau).shape, dtype=complex)
    for k in range(coeffs.shape[-1]):
        acc = acc * tau + coeffs[..., k]
    return acc


def eval_symbol(sym: OperatorSymbol, tau: complex, xi) -> complex:
    """P(tau, xi) for one frequency vector."""
    xi = _check_xi(sym, xi)
    if xi.ndim != 1:
        raise DimensionError("eval_symbol takes a single frequency vector")
    total = complex(tau) ** sym.m
    for j, p in enumerate(sym.tau_coeffs, start=1):
        total += p.evaluate(xi) * complex(tau) ** (sym.m - j)
    return complex(total)


# -- frequency grids -------------------------------------------------------------


@dataclass(frozen=True)
class FrequencyGrid:
    """Tensor grid on [-extent, extent]^n with ``points_per_axis`` nodes per axis."""

    n: int
    extent: float
    points_per_axis: int
    shells: tuple[float, ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("grid dimension must be >= 1")
        if self.points_per_axis < 2:
            raise ValueError("points_per_axis must be >= 2")
        if not self.extent > 0:
            raise ValueError("extent must be positive")
        object.__setattr__(self, "shells", tuple(float(r) for r in self.shells))

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.extent, self.extent, self.points_per_axis)

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / (self.points_per_axis - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.n

    @property
    def size(self) -> int:
        return self.points_per_axis ** self.n

    @property
    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (size, n), C order over the axes."""
        mesh = np.meshgrid(*([self.axis] * self.n), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    @property
    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.nodes, axis=-1)

    @property
    def weights(self) -> np.ndarray:
        """Tensor trapezoid weights, shape (size,)."""
        w1 = np.full(self.points_per_axis, self.spacing)
        w1[0] = w1[-1] = 0.5 * self.spacing
        w = w1
        for _ in range(self.n - 1):
            w = np.multiply.outer(w, w1)
        return np.asarray(w).ravel()

    def refined(self) -> FrequencyGrid:
        """Same box with roughly twice the resolution (node set is a superset)."""
        return FrequencyGrid(self.n, self.extent, 2 * self.points_per_axis - 1, self.shells)

    def shell_nodes(self, count: int | None = None) -> np.ndarray:
        """Sample points on the refinement shells, shape (k, n)."""
        pts = []
        for r in self.shells:
            pts.append(r * unit_directions(self.n, count))
        if not pts:
            return np.empty((0, self.n))
        return np.concatenate(pts, axis=0)


def unit_directions(n: int, count: int | None = None, seed: int = 0) -> np.ndarray:
    """Deterministic unit vectors: signs in 1-D, circle in 2-D, Fibonacci sphere in 3-D."""
    if count is None:
        count = {1: 64, 2: 256, 3: 1024}.get(n, 1024)
    if n == 1:
        return np.where(np.arange(count) % 2 == 0, 1.0, -1.0)[:, None]
    if n == 2:
        theta = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    if n == 3:
        k = np.arange(count) + 0.5
        z = 1 - 2 * k / count
        phi = np.pi * (1 + math.sqrt(5)) * k
        rho = np.sqrt(1 - z * z)
        return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((count, n))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


# -- hyperbolicity -----------------------------------------------------------------


@dataclass(frozen=True)
class HyperbolicityCheck:
    ok: bool
    min_gap: float
    max_abs_imag: float
    direction: np.ndarray | None = None


def check_strict_hyperbolicity(
    sym: OperatorSymbol, num_directions: int | None = None, tol: float = HYPERBOLICITY_TOL
) -> HyperbolicityCheck:
    """Check that the principal roots are real and pairwise distinct on the unit sphere.

    Returns the smallest root gap found; on failure ``direction`` holds the
    first offending unit vector.
    """
    from .roots import roots_batch

    if num_directions is not None and num_directions < 1:
        raise ValueError("num_directions must be >= 1")
    omegas = unit_directions(sym.n, num_directions)
    coeffs = tau_poly_batch(sym.principal(), omegas)
    roots = roots_batch(coeffs)
    imag = np.abs(roots.imag).max(axis=1)
    if sym.m > 1:
        diff = np.abs(roots[:, :, None] - roots[:, None, :])
        diff[:, np.arange(sym.m), np.arange(sym.m)] = np.inf
        gaps = diff.min(axis=(1, 2))
    else:
        gaps = np.full(len(omegas), np.inf)
    bad = (imag > tol) | (gaps <= tol)
    direction = omegas[np.argmax(bad)] if bad.any() else None
    return HyperbolicityCheck(
        ok=not bad.any(),
        min_gap=float(gaps.min()),
        max_abs_imag=float(imag.max()),
        direction=direction,
    )
