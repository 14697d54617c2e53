"""Shifted Jacobi polynomials on [0,1]: evaluation, norms, derivatives,
and Gauss-Jacobi quadrature.

The basis is Q_n^{g,b}(x) = P_n^{g,b}(2x-1), orthogonal on [0,1] against
the weight w^{g,b}(x) = (1-x)^g x^b.  All gamma-function work goes through
log-gamma so that degree can reach 2^14 without overflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import betaln, gammaln


class JacobiParamError(ValueError):
    """Raised for Jacobi exponents outside (-1, inf)."""


@dataclass(frozen=True)
class JacobiParams:
    """Exponent pair (gamma, beta) of the weight (1-x)^gamma x^beta."""

    gamma: float
    beta: float

    def __post_init__(self):
        if not (self.gamma > -1.0 and self.beta > -1.0):
            raise JacobiParamError(
                f"Jacobi parameters must exceed -1, got ({self.gamma}, {self.beta})"
            )

    def swapped(self) -> "JacobiParams":
        return JacobiParams(self.beta, self.gamma)

    def as_tuple(self) -> tuple[float, float]:
        return (self.gamma, self.beta)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Jacobi rule on (0,1) for the weight (1-x)^gamma x^beta."""

    nodes: np.ndarray
    weights: np.ndarray
    params: JacobiParams

    @property
    def npts(self) -> int:
        return self.nodes.size

    def integrate(self, values: np.ndarray) -> float:
        """Integrate a function given by its values at the nodes."""
        return float(np.dot(self.weights, values))


def log_gamma_ratio(n: int | np.ndarray, alpha: float) -> float | np.ndarray:
    """Gamma(n+1+alpha) / Gamma(n+1), stable for n up to 2^14 and beyond."""
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise ValueError("n must be nonnegative")
    if np.any(n + 1 + alpha <= 0):
        raise ValueError(f"gamma pole: n+1+alpha = {n + 1 + alpha} not positive")
    out = np.exp(gammaln(n + 1 + alpha) - gammaln(n + 1))
    return float(out) if out.ndim == 0 else out


def jacobi_norm_sq(n: int | np.ndarray, p: JacobiParams) -> float | np.ndarray:
    """Squared weighted L2 norm h_n^{g,b} of Q_n^{g,b} on [0,1]."""
    g, b = p.gamma, p.beta
    n = np.asarray(n, dtype=float)
    out = np.exp(
        gammaln(n + b + 1) + gammaln(n + g + 1) - gammaln(n + 1) - gammaln(n + g + b + 1)
    ) / (2 * n + g + b + 1)
    return float(out) if out.ndim == 0 else out


def jacobi_matrix(nmax: int, p: JacobiParams, x: np.ndarray) -> np.ndarray:
    """Values Q_n^{g,b}(x) for n = 0..nmax; shape (nmax+1, len(x)).

    Runs the classical three-term recurrence in t = 2x-1.
    """
    g, b = p.gamma, p.beta
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = 2.0 * x - 1.0
    out = np.empty((nmax + 1, x.size))
    out[0] = 1.0
    if nmax >= 1:
        out[1] = 0.5 * ((g + b + 2.0) * t + (g - b))
    for n in range(2, nmax + 1):
        c1 = 2.0 * n * (n + g + b) * (2 * n + g + b - 2)
        c2 = (2 * n + g + b - 1) * (g * g - b * b)
        c3 = (2 * n + g + b - 1) * (2 * n + g + b) * (2 * n + g + b - 2)
        c4 = 2.0 * (n + g - 1) * (n + b - 1) * (2 * n + g + b)
        out[n] = ((c2 + c3 * t) * out[n - 1] - c4 * out[n - 2]) / c1
    return out


def eval_jacobi(n: int, p: JacobiParams, x: float | np.ndarray) -> float | np.ndarray:
    """Q_n^{g,b}(x) on [0,1] by forward recurrence."""
    if n < 0:
        raise ValueError("degree must be nonnegative")
    x = np.asarray(x, dtype=float)
    vals = jacobi_matrix(n, p, np.atleast_1d(x))[n]
    return float(vals[0]) if x.ndim == 0 else vals


def jacobi_series(coeffs: np.ndarray, p: JacobiParams, x: np.ndarray) -> np.ndarray:
    """sum_n coeffs[n] Q_n^{g,b}(x), streaming the recurrence (O(1) rows kept)."""
    g, b = p.gamma, p.beta
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = 2.0 * x - 1.0
    nmax = len(coeffs) - 1
    pm2 = np.ones_like(x)
    acc = coeffs[0] * pm2
    if nmax == 0:
        return acc
    pm1 = 0.5 * ((g + b + 2.0) * t + (g - b))
    acc += coeffs[1] * pm1
    for n in range(2, nmax + 1):
        c1 = 2.0 * n * (n + g + b) * (2 * n + g + b - 2)
        c2 = (2 * n + g + b - 1) * (g * g - b * b)
        c3 = (2 * n + g + b - 1) * (2 * n + g + b) * (2 * n + g + b - 2)
        c4 = 2.0 * (n + g - 1) * (n + b - 1) * (2 * n + g + b)
        pm2, pm1 = pm1, ((c2 + c3 * t) * pm1 - c4 * pm2) / c1
        if coeffs[n] != 0.0:
            acc += coeffs[n] * pm1
    return acc


def gauss_jacobi_rule(npts: int, p: JacobiParams) -> QuadratureRule:
    """Gauss-Jacobi rule on (0,1), exact through polynomial degree 2*npts-1.

    Golub-Welsch: eigen-decompose the symmetric tridiagonal recurrence
    matrix; nodes are eigenvalues, weights come from first eigenvector
    components scaled by the zeroth moment B(g+1, b+1).
    """
    if npts < 1:
        raise ValueError("npts must be >= 1")
    g, b = p.gamma, p.beta
    ab = g + b
    k = np.arange(npts, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        denom = (2 * k + ab) * (2 * k + ab + 2)
        diag = np.where(denom == 0.0, 0.0, (b * b - g * g) / denom)
    diag[0] = (b - g) / (ab + 2.0)  # k=0 always has this closed form
    j = np.arange(1, npts, dtype=float)
    s = 2 * j + ab
    off_sq = 4 * j * (j + g) * (j + b) * (j + ab) / (s * s * (s * s - 1.0))
    if npts > 1 and ab + 1.0 == 0.0:
        # j=1 cancels (j+ab) against the (s^2-1) zero
        off_sq[0] = 4 * (1 + g) * (1 + b) / ((2 + ab) ** 2 * (3 + ab))
    try:
        t, v = eigh_tridiagonal(diag, np.sqrt(off_sq))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise RuntimeError(f"Golub-Welsch eigensolve failed for {p}") from exc
    mu0 = np.exp(betaln(g + 1.0, b + 1.0))
    return QuadratureRule(nodes=(t + 1.0) / 2.0, weights=mu0 * v[0] ** 2, params=p)


@dataclass(frozen=True)
class DerivativeReindex:
    """Result of differentiating in the Jacobi frame: D^k maps degree n,
    params (g,b) to degree n-k, params (g+k,b+k), times a scalar.

    plain_scale:    factor in D^k Q_n^{g,b} = plain_scale * Q_{n-k}^{g+k,b+k}
    weighted_scale: factor in
                    D^k [w^{g+k,b+k} Q_{n-k}^{g+k,b+k}] = weighted_scale * w^{g,b} Q_n^{g,b}
    """

    plain_scale: float
    weighted_scale: float
    degree: int
    params: JacobiParams
    is_zero: bool = False


def derivative_reindex(n: int, k: int, p: JacobiParams) -> DerivativeReindex:
    """Scales and reindexing for the k-th derivative of Q_n^{g,b}."""
    if k < 0 or n < 0:
        raise ValueError("degree and order must be nonnegative")
    if k > n:
        return DerivativeReindex(0.0, 0.0, 0, JacobiParams(p.gamma + k, p.beta + k), True)
    g, b = p.gamma, p.beta
    plain = np.exp(gammaln(n + k + g + b + 1) - gammaln(n + g + b + 1))
    weighted = (-1.0) ** k * np.exp(gammaln(n + 1) - gammaln(n - k + 1))
    return DerivativeReindex(
        plain_scale=float(plain),
        weighted_scale=float(weighted),
        degree=n - k,
        params=JacobiParams(g + k, b + k),
    )
