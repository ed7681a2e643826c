"""Gauss quadrature rules built from the raw moments of a randomizer.

The moment Gram matrix is factored, the three-term recurrence coefficients
are read off the factor, and the nodes and weights come from the
eigen-decomposition of the symmetric tridiagonal Jacobi matrix.

Two routes to the recurrence coefficients are provided.  The floating-point
route follows the classical Cholesky recipe literally.  The exact route runs
a square-root-free LDL^T factorization on rational moments; all supported
families have moments that are exact rationals of their (binary) float
hyper-parameters, so the coefficients are obtained without cancellation
and only the final O(1)-conditioned eigenproblem is done in floating point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import ConditioningError, DomainError, InstabilityError, InvariantViolation
from .randomizers import Degenerate, Normal, Randomizer

MAX_ORDER = 20


@dataclass(frozen=True)
class RecurrenceCoefficients:
    alpha: tuple
    beta: tuple

    def __post_init__(self):
        if len(self.beta) != max(len(self.alpha) - 1, 0):
            raise ValueError("need len(beta) == len(alpha) - 1")


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes (ascending) and positive weights of an N-point Gauss rule."""

    nodes: np.ndarray
    weights: np.ndarray
    source_spec: Randomizer
    order: int
    note: str = ""

    def __post_init__(self):
        for arr in (self.nodes, self.weights):
            arr.setflags(write=False)

    def __iter__(self):
        return iter(zip(self.weights, self.nodes))

    def __len__(self):
        return self.order

    def expect(self, fn):
        """Quadrature approximation of ``E[fn(theta)]``."""
        return sum(w * fn(t) for w, t in zip(self.weights, self.nodes))


def _check_order(N):
    if int(N) != N or N < 1:
        raise DomainError(f"quadrature order must be a positive integer, got {N}")
    if N > MAX_ORDER:
        raise DomainError(
            f"quadrature order N={N} exceeds the cap of {MAX_ORDER}; the moment Gram matrix "
            "is too ill-conditioned beyond it"
        )
    return int(N)


def gram_matrix(spec: Randomizer, N: int, exact: bool = False):
    """(N+1)x(N+1) Hankel matrix of raw moments, ``M[i, j] = E[theta^(i+j)]``.

    With ``exact=True`` a nested list of Fractions is returned instead of a
    float array.
    """
    if int(N) != N or N < 0:
        raise DomainError(f"N must be a nonnegative integer, got {N}")
    N = int(N)
    if exact:
        m = [spec.raw_moment_exact(k) for k in range(2 * N + 1)]
        return [[m[i + j] for j in range(N + 1)] for i in range(N + 1)]
    m = np.array([spec.raw_moment(k) for k in range(2 * N + 1)])
    idx = np.arange(N + 1)
    return m[idx[:, None] + idx[None, :]]


def _is_exact(M) -> bool:
    return isinstance(M, list) and bool(M) and isinstance(M[0][0], (Fraction, int))


def _coefficients_cholesky(M):
    M = np.asarray(M, dtype=float)
    n1 = M.shape[0]
    N = n1 - 1
    try:
        R = np.linalg.cholesky(M).T
    except np.linalg.LinAlgError:
        raise ConditioningError(
            f"Gram matrix is not positive definite at N={N}; the randomizer may be "
            "(nearly) degenerate, try a smaller N"
        ) from None
    diag = np.diag(R)
    if not np.all(diag > 1e-14 * max(1.0, abs(M[0, 0]))) or not np.all(np.isfinite(R)):
        raise ConditioningError(
            f"Gram matrix is numerically singular at N={N}; try a smaller N"
        )

    # 1-based r(i, j) with the conventions r(0,0)=1, r(0,1)=0
    def r(i, j):
        if i == 0:
            return 1.0 if j == 0 else 0.0
        return R[i - 1, j - 1]

    alpha = [r(j, j + 1) / r(j, j) - r(j - 1, j) / r(j - 1, j - 1) for j in range(1, N + 1)]
    beta = [(r(j + 1, j + 1) / r(j, j)) ** 2 for j in range(1, N)]
    return alpha, beta


def _coefficients_ldl(M):
    n1 = len(M)
    N = n1 - 1
    L = [[Fraction(0)] * n1 for _ in range(n1)]
    D = [Fraction(0)] * n1
    for j in range(n1):
        D[j] = M[j][j] - sum(L[j][k] ** 2 * D[k] for k in range(j))
        if D[j] <= 0:
            raise ConditioningError(
                f"Gram matrix is singular at N={N} (pivot {j} is {float(D[j]):.3g}); "
                "the randomizer is degenerate or N is too large for it, try a smaller N"
            )
        L[j][j] = Fraction(1)
        for i in range(j + 1, n1):
            L[i][j] = (M[i][j] - sum(L[i][k] * L[j][k] * D[k] for k in range(j))) / D[j]
    # r(i,j) = sqrt(D_i) L[j][i] (0-based), so ratios of R entries are L entries
    alpha = []
    for j in range(N):
        prev = L[j][j - 1] if j > 0 else Fraction(0)
        alpha.append(L[j + 1][j] - prev)
    beta = [D[j] / D[j - 1] for j in range(1, N)]
    return alpha, beta


def recurrence_coefficients(M) -> RecurrenceCoefficients:
    """Three-term recurrence coefficients from a moment Gram matrix.

    A float array goes through Cholesky ``M = R^T R``; a nested list of
    Fractions (from ``gram_matrix(..., exact=True)``) goes through an exact
    LDL^T factorization.  Both return floats.
    """
    if _is_exact(M):
        alpha, beta = _coefficients_ldl(M)
    else:
        alpha, beta = _coefficients_cholesky(M)
    return RecurrenceCoefficients(tuple(float(a) for a in alpha), tuple(float(b) for b in beta))


def jacobi_matrix(coeffs: RecurrenceCoefficients) -> np.ndarray:
    alpha = np.asarray(coeffs.alpha, dtype=float)
    beta = np.asarray(coeffs.beta, dtype=float)
    if np.any(beta < 0):
        raise InvariantViolation(f"recurrence beta must be nonnegative, got {beta[beta < 0]}")
    off = np.sqrt(beta)
    return np.diag(alpha) + np.diag(off, 1) + np.diag(off, -1)


def tridiagonal_eigh(diag, off, max_iter=60):
    """Eigenpairs of a symmetric tridiagonal matrix by implicit-shift QL.

    Returns ``(values, vectors)`` with ``vectors[:, k]`` the unit eigenvector
    for ``values[k]``; no ordering is imposed.
    """
    d = [float(x) for x in diag]
    n = len(d)
    e = [float(x) for x in off] + [0.0]
    if len(e) != n:
        raise ValueError("off-diagonal must have length len(diag) - 1")
    z = np.eye(n)
    eps = np.finfo(float).eps
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                raise InstabilityError(f"tridiagonal QL did not converge for eigenvalue {l}")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            deflated = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi1 = z[:, i + 1].copy()
                z[:, i + 1] = s * z[:, i] + c * zi1
                z[:, i] = c * z[:, i] - s * zi1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return np.array(d), z


def _rule_from_coefficients(coeffs):
    values, vectors = tridiagonal_eigh(coeffs.alpha, np.sqrt(np.asarray(coeffs.beta, dtype=float)))
    order = np.argsort(values)
    return values[order], vectors[0, order] ** 2


@lru_cache(maxsize=512)
def _cached_rule(spec, N, method):
    if isinstance(spec, Degenerate):
        return QuadratureRule(
            np.array([float(spec.theta0)]), np.array([1.0]), spec, 1,
            note="degenerate randomizer: single node at theta0 regardless of N",
        )
    if isinstance(spec, Normal) and (spec.mu, spec.s) != (0.0, 1.0):
        base = _cached_rule(Normal(0.0, 1.0), N, method)
        return QuadratureRule(spec.mu + spec.s * np.array(base.nodes), np.array(base.weights), spec, N)
    M = gram_matrix(spec, N, exact=(method == "exact"))
    coeffs = recurrence_coefficients(M)
    if any(b <= 0 for b in coeffs.beta):
        raise ConditioningError(f"nonpositive recurrence coefficient at N={N}; try a smaller N")
    nodes, weights = _rule_from_coefficients(coeffs)
    return QuadratureRule(nodes, weights, spec, N)


def quadrature_rule(spec: Randomizer, N: int, method: str = "exact") -> QuadratureRule:
    """N-point Gauss rule for the randomizer ``spec``.

    ``method`` selects how the recurrence coefficients are obtained:
    ``"exact"`` (rational LDL^T, default) or ``"cholesky"`` (float Gram
    matrix and Cholesky factor).
    """
    N = _check_order(N)
    if method not in ("exact", "cholesky"):
        raise ValueError(f"method must be 'exact' or 'cholesky', got {method!r}")
    return _cached_rule(spec, N, method)
