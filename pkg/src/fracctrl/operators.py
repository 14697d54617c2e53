"""Discrete optimality system: stiffness S (diagonal), mass M, advection
D and Dhat, the rectangular advection factor W with row-shift diagonal
Lambda, preconditioners, and right-hand-side assembly.

State system:    (S - lam1*D + lam2*M) U = F
Adjoint system:  (S + lam1*Dhat + lam2*M^T) Z = G

Dense assembly via exact Gauss-Jacobi quadrature is the normative
definition; the fast path applies the same operators in O(N log N) through
factored Jacobi conversions and is validated against the dense form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .fracparams import ExponentPair, lambda_coeff
from .jacobi import JacobiParams, gauss_jacobi_rule, jacobi_matrix, jacobi_norm_sq
from .transforms import ConversionCache, SpectralFunction


class AssemblyError(RuntimeError):
    """Raised when an operator or right-hand side cannot be assembled."""


def _recurrence_step(n, g, b, t, pm1, pm2):
    """One step of the Jacobi three-term recurrence at fixed nodes."""
    c1 = 2.0 * n * (n + g + b) * (2 * n + g + b - 2)
    c2 = (2 * n + g + b - 1) * (g * g - b * b)
    c3 = (2 * n + g + b - 1) * (2 * n + g + b) * (2 * n + g + b - 2)
    c4 = 2.0 * (n + g - 1) * (n + b - 1) * (2 * n + g + b)
    return ((c2 + c3 * t) * pm1 - c4 * pm2) / c1


def stiffness_diagonal(N: int, pair: ExponentPair) -> np.ndarray:
    """S_n = lambda_n * h_n^{sigma,sigma*}; strictly positive for alpha in (1,2).

    The eigenvalue is computed for both theta and 1-theta and asserted
    equal (they coincide because the formula is symmetric under the
    sigma <-> sigma* swap); the theta form is returned.
    """
    nn = np.arange(N + 1)
    lam = lambda_coeff(nn, pair)
    lam_swapped = lambda_coeff(nn, pair.swapped())
    if not np.allclose(lam, lam_swapped, rtol=1e-13, atol=0.0):
        raise AssemblyError("eigenvalue theta/(1-theta) symmetry violated")
    h = jacobi_norm_sq(nn, JacobiParams(pair.sigma, pair.sigma_star))
    return lam * h


class FastOperatorApply:
    """O(N log N) application of S - sgn*lam1*D + lam2*M in the trial frame
    with polynomial parameters (g, b).

    The state operator A uses (g, b) = (sigma, sigma*) and sgn = +1;
    the adjoint operator B is the same construction with parameters
    swapped and sgn = -1 (its advection enters with a plus sign and its
    mass matrix is the transpose, which is the swapped-frame mass).
    """

    def __init__(self, N: int, pair: ExponentPair, g: float, b: float, sgn: float,
                 lam1: float, lam2: float, cache: ConversionCache | None = None):
        self.N = N
        self.sgn = sgn
        self.lam1, self.lam2 = lam1, lam2
        a = pair.alpha
        cache = cache or ConversionCache()
        nn = np.arange(N + 1)
        self.S = stiffness_diagonal(N, pair)
        self.h_aa = jacobi_norm_sq(nn, JacobiParams(a, a))
        self.h_a1 = jacobi_norm_sq(np.arange(N + 2), JacobiParams(a - 1, a - 1))
        P = JacobiParams
        # U^alpha route: transpose conversions (g,b) -> (a,b) -> (a,a)
        self.Ca1 = cache.get(N, P(g, b), P(a, b))
        self.Ca2 = cache.get(N, P(a, b), P(a, a))
        # mass left factor: forward conversions (b,a) <- ... giving
        # MU = C^{b,g->a} C^{b->a,a} (h_aa * U^alpha)
        self.Cm2 = cache.get(N, P(b, g), P(b, a))
        self.Cm1 = cache.get(N, P(b, a), P(a, a))
        # advection right factor: U^{alpha-1} route, (g,b) -> (a-1,b) -> (a-1,a-1)
        self.Cw_r1 = cache.get(N, P(g, b), P(a - 1, b))
        self.Cw_r2 = cache.get(N, P(a - 1, b), P(a - 1, a - 1))
        # advection left factor, one degree larger:
        # (b-1,g-1) -> (b-1,a-1) -> (a-1,a-1), applied forward
        self.Cw_l2 = cache.get(N + 1, P(b - 1, g - 1), P(b - 1, a - 1))
        self.Cw_l1 = cache.get(N + 1, P(b - 1, a - 1), P(a - 1, a - 1))

    def mass_apply(self, U: np.ndarray) -> np.ndarray:
        Ua = self.Ca2.apply(self.Ca1.apply(U, transpose=True), transpose=True)
        return self.Cm2.apply(self.Cm1.apply(self.h_aa * Ua))

    def advection_apply(self, U: np.ndarray) -> np.ndarray:
        Ua1 = self.Cw_r2.apply(self.Cw_r1.apply(U, transpose=True), transpose=True)
        mid = np.zeros(self.N + 2)
        mid[: self.N + 1] = self.h_a1[: self.N + 1] * Ua1
        WU = self.Cw_l2.apply(self.Cw_l1.apply(mid))
        # Lambda * (W with first row removed) * U
        return -(np.arange(self.N + 1) + 1.0) * WU[1:]

    def __call__(self, U: np.ndarray) -> np.ndarray:
        out = self.S * U
        if self.lam1 != 0.0:
            out -= self.sgn * self.lam1 * self.advection_apply(U)
        if self.lam2 != 0.0:
            out += self.lam2 * self.mass_apply(U)
        return out


@dataclass
class OperatorSet:
    """The assembled discrete operators at truncation N.

    In dense mode M, D, Dhat, W are materialized matrices; in fast mode
    apply_A / apply_B route through factored transforms and the dense
    fields are None.
    """

    N: int
    pair: ExponentPair
    lam1: float
    lam2: float
    S: np.ndarray
    mode: str
    M: np.ndarray | None = None
    D: np.ndarray | None = None
    Dhat: np.ndarray | None = None
    W: np.ndarray | None = None
    Q_diag: np.ndarray | None = None
    _fast_A: FastOperatorApply | None = field(default=None, repr=False)
    _fast_B: FastOperatorApply | None = field(default=None, repr=False)

    @property
    def Lambda(self) -> np.ndarray:
        return -(np.arange(self.N + 1) + 1.0)

    def dense_A(self) -> np.ndarray:
        if self.mode != "dense":
            raise AssemblyError("dense matrix requested from fast-mode OperatorSet")
        return np.diag(self.S) - self.lam1 * self.D + self.lam2 * self.M

    def dense_B(self) -> np.ndarray:
        if self.mode != "dense":
            raise AssemblyError("dense matrix requested from fast-mode OperatorSet")
        return np.diag(self.S) + self.lam1 * self.Dhat + self.lam2 * self.M.T

    def apply_A(self, U: np.ndarray) -> np.ndarray:
        if self.mode == "dense":
            return self.dense_A() @ U
        return self._fast_A(U)

    def apply_B(self, Z: np.ndarray) -> np.ndarray:
        if self.mode == "dense":
            return self.dense_B() @ Z
        return self._fast_B(Z)


def assemble_dense(N: int, pair: ExponentPair, lam1: float, lam2: float) -> OperatorSet:
    """Exact quadrature assembly of S, M, D, Dhat (and W for inspection)."""
    if N < 1:
        raise AssemblyError("truncation must be >= 1")
    a = pair.alpha
    g, b = pair.sigma, pair.sigma_star
    nn = np.arange(N + 1)
    S = stiffness_diagonal(N, pair)
    rule_m = gauss_jacobi_rule(N + 3, JacobiParams(a, a))
    Eu = jacobi_matrix(N, JacobiParams(g, b), rule_m.nodes)
    Ev = jacobi_matrix(N, JacobiParams(b, g), rule_m.nodes)
    M = (Ev * rule_m.weights) @ Eu.T
    rule_d = gauss_jacobi_rule(N + 3, JacobiParams(a - 1, a - 1))
    Eu2 = jacobi_matrix(N, JacobiParams(g, b), rule_d.nodes)
    Et2 = jacobi_matrix(N + 1, JacobiParams(b - 1, g - 1), rule_d.nodes)
    W = (Et2 * rule_d.weights) @ Eu2.T
    D = -(nn[:, None] + 1) * W[1:]
    Ev2 = jacobi_matrix(N, JacobiParams(b, g), rule_d.nodes)
    Eth2 = jacobi_matrix(N + 1, JacobiParams(g - 1, b - 1), rule_d.nodes)
    Dhat = -(nn[:, None] + 1) * ((Eth2[1:] * rule_d.weights) @ Ev2.T)
    return OperatorSet(
        N=N, pair=pair, lam1=lam1, lam2=lam2, S=S, mode="dense",
        M=M, D=D, Dhat=Dhat, W=W,
        Q_diag=jacobi_norm_sq(nn, JacobiParams(a, a)),
    )


def assemble_fast(N: int, pair: ExponentPair, lam1: float, lam2: float,
                  cache: ConversionCache | None = None) -> OperatorSet:
    """Factored-transform assembly; applies match dense to ~1e-12 relative."""
    if N < 1:
        raise AssemblyError("truncation must be >= 1")
    cache = cache or ConversionCache()
    g, b = pair.sigma, pair.sigma_star
    fa = FastOperatorApply(N, pair, g, b, +1.0, lam1, lam2, cache)
    fb = FastOperatorApply(N, pair, b, g, -1.0, lam1, lam2, cache)
    return OperatorSet(
        N=N, pair=pair, lam1=lam1, lam2=lam2, S=fa.S, mode="fast",
        Q_diag=jacobi_norm_sq(np.arange(N + 1), JacobiParams(pair.alpha, pair.alpha)),
        _fast_A=fa, _fast_B=fb,
    )


def fast_apply_A(ops: OperatorSet, U: np.ndarray) -> np.ndarray:
    if ops._fast_A is None:
        raise AssemblyError("OperatorSet has no fast transforms (dense mode)")
    return ops._fast_A(np.asarray(U, dtype=float))


def fast_apply_B(ops: OperatorSet, Z: np.ndarray) -> np.ndarray:
    if ops._fast_B is None:
        raise AssemblyError("OperatorSet has no fast transforms (dense mode)")
    return ops._fast_B(np.asarray(Z, dtype=float))


def advection_offdiagonals(N: int, pair: ExponentPair, adjoint: bool = False):
    """First super- and sub-diagonal of D (or Dhat) by streaming quadrature.

    Returns (up, lo) with up[n] = D[n, n+1] for n = 0..N-1 and
    lo[n] = D[n+1, n] for n = 0..N-1 (index N entries are scratch).
    Memory O(npts); never materializes the dense matrix.
    """
    g, b = (pair.sigma, pair.sigma_star) if not adjoint else (pair.sigma_star, pair.sigma)
    a = pair.alpha
    rule = gauss_jacobi_rule(N + 3, JacobiParams(a - 1, a - 1))
    t = 2.0 * rule.nodes - 1.0
    w = rule.weights
    npts = rule.npts
    a1, b1 = g, b            # trial Q^{g,b}
    a2, b2 = b - 1, g - 1    # test Q^{b-1,g-1}
    P1 = [np.ones(npts), 0.5 * ((a1 + b1 + 2) * t + (a1 - b1))]
    P2 = [np.ones(npts), 0.5 * ((a2 + b2 + 2) * t + (a2 - b2))]
    up = np.empty(N + 1)
    lo = np.empty(N + 1)
    for d in range(2, N + 3):
        P1.append(_recurrence_step(d, a1, b1, t, P1[-1], P1[-2]))
        P2.append(_recurrence_step(d, a2, b2, t, P2[-1], P2[-2]))
        if len(P1) > 3:
            P1.pop(0)
            P2.pop(0)
        n = d - 2
        if n <= N:
            # D[n, n+1] = -(n+1) * int w Q_{n+1}^{trial} Q_{n+1}^{test}
            # D[n+1, n] = -(n+2) * int w Q_n^{trial} Q_{n+2}^{test}
            up[n] = -(n + 1) * np.dot(w, P1[1] * P2[1])
            lo[n] = -(n + 2) * np.dot(w, P1[0] * P2[2])
    return up, lo


@dataclass
class BandedPreconditioner:
    """Tridiagonal P stored in scipy solve_banded (1,1) layout."""

    bands: np.ndarray  # shape (3, N+1): super, main, sub

    def solve(self, r: np.ndarray) -> np.ndarray:
        return solve_banded((1, 1), self.bands, r)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        sup, mid, sub = self.bands
        out = mid * v
        out[:-1] += sup[1:] * v[1:]
        out[1:] += sub[:-1] * v[:-1]
        return out


def build_preconditioners(ops: OperatorSet) -> tuple[BandedPreconditioner, BandedPreconditioner]:
    """P = S - lam1*K + lam2*Q and Phat = S + lam1*Khat + lam2*Q, where
    K / Khat carry only the first off-diagonals of D / Dhat and Q is the
    diagonal of mass norms h_n^{alpha,alpha}.
    """
    N = ops.N
    diag = ops.S + ops.lam2 * ops.Q_diag
    out = []
    for adjoint, sign in ((False, -1.0), (True, +1.0)):
        if ops.lam1 != 0.0:
            if ops.mode == "dense":
                Dm = ops.Dhat if adjoint else ops.D
                up = np.diag(Dm, 1)
                lo = np.diag(Dm, -1)
            else:
                u, l = advection_offdiagonals(N, ops.pair, adjoint=adjoint)
                up, lo = u[:-1], l[:-1]
        else:
            up = np.zeros(N)
            lo = np.zeros(N)
        bands = np.zeros((3, N + 1))
        bands[0, 1:] = sign * ops.lam1 * up
        bands[1] = diag
        bands[2, :-1] = sign * ops.lam1 * lo
        if np.any(bands[1] == 0.0):
            raise AssemblyError("singular preconditioner diagonal")
        out.append(BandedPreconditioner(bands))
    return out[0], out[1]


class RhsAssembler:
    """Precomputed pieces of the right-hand sides F and G.

    F_m = (f + q_N, Q_m^{s*,s})_{w^{s*,s}}
        = [data part, fixed] + c*h_0^{s*,s}*e_0 - (1/gamma) * M2 @ Zq
    G_m = (u_N - u_d, Q_m^{s,s*})_{w^{s,s*}}
        = M3 @ U - [data part, fixed]

    where M2 is the (s*,s)-frame Gram matrix under weight w^{2s*,2s} and
    M3 its sigma-swapped counterpart, both applied through factored
    conversions in O(N log N).
    """

    def __init__(self, N: int, pair: ExponentPair, f: SpectralFunction | None,
                 u_d: SpectralFunction | None, cache: ConversionCache | None = None):
        self.N = N
        self.pair = pair
        g, b = pair.sigma, pair.sigma_star
        cache = cache or ConversionCache()
        P = JacobiParams
        nn = np.arange(N + 1)
        self.h0_zframe = float(jacobi_norm_sq(0, P(b, g)))
        # z-part Gram factors: (b,g) -> (2b,g) -> (2b,2g)
        self.Cq1 = cache.get(N, P(b, g), P(2 * b, g))
        self.Cq2 = cache.get(N, P(2 * b, g), P(2 * b, 2 * g))
        self.hq = jacobi_norm_sq(nn, P(2 * b, 2 * g))
        # state Gram factors for G: (g,b) -> (2g,b) -> (2g,2b)
        self.Cu1 = cache.get(N, P(g, b), P(2 * g, b))
        self.Cu2 = cache.get(N, P(2 * g, b), P(2 * g, 2 * b))
        self.hu = jacobi_norm_sq(nn, P(2 * g, 2 * b))
        self.F_data = self._project_data(f, P(b, g)) if f is not None else np.zeros(N + 1)
        self.G_data = self._project_data(u_d, P(g, b)) if u_d is not None else np.zeros(N + 1)

    def _project_data(self, fun: SpectralFunction, test: JacobiParams) -> np.ndarray:
        """(fun, Q_m^{test})_{w^{test}} by a rule exact for the combined
        weight w^{test + fun.weight} against polynomial integrands."""
        wa, wb = fun.weight_exponents
        combined = JacobiParams(test.gamma + wa, test.beta + wb)
        npts = (self.N + fun.degree) // 2 + 3
        rule = gauss_jacobi_rule(npts, combined)
        Et = jacobi_matrix(self.N, test, rule.nodes)
        return (Et * rule.weights) @ fun.poly_values(rule.nodes)

    def gram_z(self, Zq: np.ndarray) -> np.ndarray:
        """M2 @ Zq via the factored conversion route."""
        t = self.Cq2.apply(self.Cq1.apply(Zq, transpose=True), transpose=True)
        return self.Cq1.apply(self.Cq2.apply(self.hq * t, transpose=False), transpose=False)

    def gram_u(self, U: np.ndarray) -> np.ndarray:
        """M3 @ U via the factored conversion route."""
        t = self.Cu2.apply(self.Cu1.apply(U, transpose=True), transpose=True)
        return self.Cu1.apply(self.Cu2.apply(self.hu * t, transpose=False), transpose=False)

    def rhs_F(self, c: float, Zq: np.ndarray, gamma: float) -> np.ndarray:
        F = self.F_data.copy()
        F[0] += c * self.h0_zframe
        if np.any(Zq):
            F -= self.gram_z(Zq) / gamma
        return F

    def rhs_G(self, U: np.ndarray) -> np.ndarray:
        return self.gram_u(U) - self.G_data


def assemble_rhs_F(f: SpectralFunction | None, qN, pair: ExponentPair, N: int,
                   gamma: float = 1.0) -> np.ndarray:
    """One-shot F assembly; qN is a ControlFunction or None (q = 0)."""
    asm = RhsAssembler(N, pair, f, None)
    if qN is None:
        return asm.rhs_F(0.0, np.zeros(N + 1), gamma)
    z = np.zeros(N + 1)
    zc = qN.z_part.coeffs
    z[: len(zc)] = zc
    return asm.rhs_F(qN.constant_part, z, qN.gamma)


def assemble_rhs_G(uN: SpectralFunction, u_d: SpectralFunction | None,
                   pair: ExponentPair, N: int) -> np.ndarray:
    """One-shot G assembly from the current state iterate and target."""
    asm = RhsAssembler(N, pair, None, u_d)
    U = np.zeros(N + 1)
    U[: len(uN.coeffs)] = uN.coeffs
    return asm.rhs_G(U)
