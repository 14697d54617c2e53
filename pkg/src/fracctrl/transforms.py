"""Jacobi connection (conversion) matrices and fast coefficient transforms.

A one-parameter conversion maps the coefficients of a Jacobi series in
Q^{from} to the coefficients of the same polynomial in Q^{to}, where the
two parameter pairs differ in a single slot.  The dense form is built by a
quadrature oracle (the normative definition); the Factored form stores the
closed-form decomposition C = D1 (T o H) D2 with T Toeplitz and H Hankel,
and applies it in O(r k log k) via FFT after a pivoted Cholesky of the
positive-semidefinite Hankel factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct, irfft, rfft
from scipy.special import gammaln

from .jacobi import JacobiParams, gauss_jacobi_rule, jacobi_matrix, jacobi_norm_sq


class TransformError(ValueError):
    """Raised on malformed conversion requests (size/parameter mismatch)."""


@dataclass(frozen=True)
class SpectralFunction:
    """A function w^{a,b}(x) * sum_n coeffs[n] Q_n^{poly_params}(x).

    weight_exponents (a, b) are metadata, never discretized pointwise;
    (0, 0) means a plain polynomial series.
    """

    weight_exponents: tuple[float, float]
    poly_params: JacobiParams
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def poly_values(self, x: np.ndarray) -> np.ndarray:
        """The polynomial part sum_n coeffs[n] Q_n(x), without the weight."""
        E = jacobi_matrix(self.degree, self.poly_params, np.atleast_1d(x))
        return self.coeffs @ E

    def values(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        a, b = self.weight_exponents
        v = self.poly_values(x)
        if a != 0.0 or b != 0.0:
            v = (1.0 - x) ** a * x**b * v
        return v

    def padded(self, n: int) -> "SpectralFunction":
        """Zero-pad (or truncate-check) the coefficient vector to length n+1."""
        if n + 1 < len(self.coeffs):
            raise TransformError("cannot pad to a shorter vector")
        c = np.zeros(n + 1)
        c[: len(self.coeffs)] = self.coeffs
        return SpectralFunction(self.weight_exponents, self.poly_params, c)


def connection_dense(
    k: int, from_params: JacobiParams, to_params: JacobiParams
) -> np.ndarray:
    """Lower-triangular C with Q-series coefficients mapped source -> target.

    Built by the quadrature oracle C[m, n] = (Q_m^{from}, Q_n^{to})_{w^{to}}
    / h_n^{to}; a coefficient vector transforms as v_to = C^T v_from.
    """
    rule = gauss_jacobi_rule(k + 2, to_params)
    Ef = jacobi_matrix(k, from_params, rule.nodes)
    Et = jacobi_matrix(k, to_params, rule.nodes)
    C = (Ef * rule.weights) @ Et.T / jacobi_norm_sq(np.arange(k + 1), to_params)
    if np.max(np.abs(C)) > 1e12:
        raise TransformError(
            f"ill-conditioned projection {from_params} -> {to_params}: "
            f"entry magnitude {np.max(np.abs(C)):.3e}"
        )
    # exact triangularity up to quadrature rounding
    C[np.abs(C) < 1e-300] = 0.0
    return C


def _pivoted_cholesky_hankel(hfun, n: int, tol: float = 1e-15, rmax: int = 200) -> np.ndarray:
    """Low-rank L with H ~= L L^T where H[i,j] = hfun(i+j) is PSD
    (a Hausdorff moment sequence).  Columns are chosen by diagonal pivoting.
    """
    d = np.asarray(hfun(2.0 * np.arange(n)), dtype=float).copy()
    scale = d.max()
    idx = np.arange(n, dtype=float)
    cols: list[np.ndarray] = []
    pivots: list[int] = []
    while len(cols) < min(rmax, n):
        p = int(np.argmax(d))
        if d[p] <= tol * scale:
            break
        col = np.asarray(hfun(idx + p), dtype=float)
        for lj in cols:
            col -= lj * lj[p]
        col /= np.sqrt(d[p])
        cols.append(col)
        pivots.append(p)
        d -= col * col
        np.maximum(d, 0.0, out=d)
    return np.array(cols).T if cols else np.zeros((n, 0))


def _closed_form_parts(k: int, g: float, s: float, b: float):
    """Pieces of the first-parameter change g -> s at fixed second param b:
    C[n, m] = D1[n] * t[n-m] * h[n+m] * D2[m] for n >= m.
    """
    n = np.arange(k + 1, dtype=float)
    D1 = np.exp(gammaln(n + b + 1) - gammaln(n + g + b + 1))
    D2 = (2 * n + s + b + 1) * np.exp(gammaln(n + s + b + 1) - gammaln(n + b + 1))
    # Toeplitz symbol t_j = (g-s)_j / j!, by the Pochhammer recurrence so the
    # integer-difference case (g-s a negative integer) terminates exactly
    t = np.empty(k + 1)
    t[0] = 1.0
    for j in range(1, k + 1):
        t[j] = t[j - 1] * (g - s + j - 1) / j

    def hfun(sv):
        sv = np.asarray(sv, dtype=float)
        return np.exp(gammaln(sv + g + b + 1) - gammaln(sv + s + b + 2))

    return D1, t, hfun, D2


@dataclass
class ConversionMatrix:
    """One-parameter Jacobi conversion in Factored (fast) form.

    kind is "first" (change of the first weight exponent at fixed second)
    or "second" (change of the second at fixed first; realized through the
    reflection identity, which introduces (-1)^n sign diagonals).
    Coefficient vectors transform by apply(v, transpose=True); apply(v)
    multiplies by the connection matrix itself (polynomial-to-polynomial).
    """

    k: int
    kind: str
    from_params: JacobiParams
    to_params: JacobiParams
    _D1: np.ndarray = field(repr=False, default=None)
    _D2: np.ndarray = field(repr=False, default=None)
    _L: np.ndarray = field(repr=False, default=None)
    _that: np.ndarray = field(repr=False, default=None)
    _that_T: np.ndarray = field(repr=False, default=None)
    _nfft: int = 0

    @classmethod
    def build(
        cls, k: int, from_params: JacobiParams, to_params: JacobiParams, tol: float = 1e-15
    ) -> "ConversionMatrix":
        fg, fb = from_params.as_tuple()
        tg, tb = to_params.as_tuple()
        if fb == tb and fg != tg:
            kind, g, s, b, sign = "first", fg, tg, fb, False
        elif fg == tg and fb != tb:
            # reflect x -> 1-x: second-parameter change becomes a first-
            # parameter change conjugated by (-1)^n diagonals
            kind, g, s, b, sign = "second", fb, tb, fg, True
        elif fg == tg and fb == tb:
            kind, g, s, b, sign = "first", fg, tg, fb, False
        else:
            raise TransformError(
                f"conversion must change one parameter at a time: {from_params} -> {to_params}"
            )
        D1, t, hfun, D2 = _closed_form_parts(k, g, s, b)
        if sign:
            sgn = (-1.0) ** np.arange(k + 1)
            D1 = D1 * sgn
            D2 = D2 * sgn
        L = _pivoted_cholesky_hankel(hfun, k + 1, tol=tol)
        nfft = 1
        while nfft < 2 * (k + 1):
            nfft *= 2
        tpad = np.zeros(nfft)
        tpad[: k + 1] = t
        that = rfft(tpad)
        tpad_T = np.zeros(nfft)
        tpad_T[0] = t[0]
        if k >= 1:
            tpad_T[-k:] = t[1:][::-1]
        that_T = rfft(tpad_T)
        return cls(
            k=k, kind=kind, from_params=from_params, to_params=to_params,
            _D1=D1, _D2=D2, _L=L, _that=that, _that_T=that_T, _nfft=nfft,
        )

    @property
    def rank(self) -> int:
        return self._L.shape[1]

    def _toeplitz_block(self, X: np.ndarray, hat: np.ndarray) -> np.ndarray:
        Y = irfft(rfft(X, n=self._nfft, axis=0) * hat[:, None], n=self._nfft, axis=0)
        return Y[: self.k + 1]

    def apply(self, v: np.ndarray, transpose: bool = False) -> np.ndarray:
        """C @ v, or C.T @ v with transpose=True (the coefficient map)."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.k + 1,):
            raise TransformError(f"expected vector of length {self.k + 1}, got {v.shape}")
        if transpose:
            X = self._L * (self._D1 * v)[:, None]
            Y = self._toeplitz_block(X, self._that_T)
            return self._D2 * np.einsum("ij,ij->i", self._L, Y)
        X = self._L * (self._D2 * v)[:, None]
        Y = self._toeplitz_block(X, self._that)
        return self._D1 * np.einsum("ij,ij->i", self._L, Y)

    def dense(self) -> np.ndarray:
        """Materialize the matrix (for testing / small k)."""
        out = np.empty((self.k + 1, self.k + 1))
        e = np.zeros(self.k + 1)
        for j in range(self.k + 1):
            e[j] = 1.0
            out[:, j] = self.apply(e)
            e[j] = 0.0
        return out


class ConversionCache:
    """Memoizes Factored conversions keyed by (k, from, to).

    Safe for concurrent reads after single-threaded population.
    """

    def __init__(self):
        self._store: dict[tuple, ConversionMatrix] = {}

    def get(self, k: int, from_params: JacobiParams, to_params: JacobiParams) -> ConversionMatrix:
        key = (k, from_params.as_tuple(), to_params.as_tuple())
        if key not in self._store:
            self._store[key] = ConversionMatrix.build(k, from_params, to_params)
        return self._store[key]


def jacobi_to_jacobi(f: SpectralFunction, target: JacobiParams,
                     cache: ConversionCache | None = None) -> SpectralFunction:
    """Re-expand the polynomial part of f in the target Jacobi basis.

    General parameter changes are composed from two one-parameter
    conversions through the intermediate (target.gamma, source.beta).
    """
    src = f.poly_params
    k = f.degree
    coeffs = f.coeffs
    if src == target:
        return f
    cache = cache or ConversionCache()
    if src.gamma != target.gamma:
        mid = JacobiParams(target.gamma, src.beta)
        coeffs = cache.get(k, src, mid).apply(coeffs, transpose=True)
        src = mid
    if src.beta != target.beta:
        coeffs = cache.get(k, src, target).apply(coeffs, transpose=True)
    return SpectralFunction(f.weight_exponents, target, coeffs)


def chebyshev_expand(g, M: int = 64) -> SpectralFunction:
    """Expand a smooth scalar callable on [0,1] in Q_n^{-1/2,-1/2}.

    Samples at M+1 Gauss-Lobatto points and inverts by a type-1 DCT, then
    rescales from the Chebyshev normalization T_n to the Jacobi one
    (Q_n^{-1/2,-1/2}(1) = Gamma(n+1/2) / (Gamma(1/2) n!)).
    """
    if M < 1:
        raise TransformError("truncation must be >= 1")
    j = np.arange(M + 1)
    x = (1.0 + np.cos(np.pi * j / M)) / 2.0
    vals = np.asarray(g(x), dtype=float)
    c = dct(vals, type=1) / M
    c[0] /= 2.0
    c[-1] /= 2.0
    n = np.arange(M + 1, dtype=float)
    q_at_one = np.exp(gammaln(n + 0.5) - gammaln(0.5) - gammaln(n + 1))
    return SpectralFunction((0.0, 0.0), JacobiParams(-0.5, -0.5), c / q_at_one)
