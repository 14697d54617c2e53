"""Fractional-operator parameters: the boundary-exponent pair (sigma, sigma*)
attached to a two-sided fractional derivative of order alpha with directional
weight theta, the operator eigenvalues in the Jacobi frame, and
convergence-order predictions from the regularity theory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .jacobi import log_gamma_ratio


class ParameterDomainError(ValueError):
    """Raised when (alpha, theta) fall outside the supported domain."""


@dataclass(frozen=True)
class ExponentPair:
    """Exponents (sigma, sigma_star) with sigma + sigma_star = alpha and
    theta = sin(pi sigma_star) / (sin(pi sigma_star) + sin(pi sigma)).
    """

    sigma: float
    sigma_star: float
    alpha: float
    theta: float

    def __post_init__(self):
        if abs(self.sigma + self.sigma_star - self.alpha) > 1e-14:
            raise ParameterDomainError(
                f"sigma + sigma* = {self.sigma + self.sigma_star} != alpha = {self.alpha}"
            )
        res = self.residual()
        if res > 1e-14:
            raise ParameterDomainError(
                f"exponent pair fails defining relation: residual {res:.3e}"
            )

    def residual(self) -> float:
        """|theta*(sin(pi(a-s)) + sin(pi s)) - sin(pi(a-s))|."""
        ss = math.sin(math.pi * (self.alpha - self.sigma))
        s = math.sin(math.pi * self.sigma)
        return abs(self.theta * (ss + s) - ss)

    def swapped(self) -> "ExponentPair":
        """The pair for weight 1 - theta (sigma and sigma* trade places)."""
        return ExponentPair(self.sigma_star, self.sigma, self.alpha, 1.0 - self.theta)


def _theta_of_sigma(alpha: float, sigma: float) -> float:
    ss = math.sin(math.pi * (alpha - sigma))
    s = math.sin(math.pi * sigma)
    return ss / (ss + s)


def solve_sigma(theta: float, alpha: float) -> ExponentPair:
    """Solve for (sigma, sigma*) given weight theta in [0,1] and order
    alpha in (1,2).

    Closed forms at theta in {0, 1/2, 1}; otherwise 40 bisection steps on
    the monotone map sigma -> theta followed by Newton polishing.
    """
    if not (1.0 < alpha < 2.0):
        raise ParameterDomainError(f"alpha must lie in (1,2), got {alpha}")
    if not (0.0 <= theta <= 1.0):
        raise ParameterDomainError(f"theta must lie in [0,1], got {theta}")
    if theta == 0.5:
        sigma = alpha / 2.0
    elif theta == 1.0:
        sigma = 1.0
    elif theta == 0.0:
        sigma = alpha - 1.0
    else:
        # theta(sigma) increases from 0 at sigma=alpha-1 to 1 at sigma=1
        lo, hi = alpha - 1.0 + 1e-12, 1.0 - 1e-12
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if _theta_of_sigma(alpha, mid) < theta:
                lo = mid
            else:
                hi = mid
        sigma = 0.5 * (lo + hi)
        for _ in range(6):
            f = _theta_of_sigma(alpha, sigma) - theta
            h = 1e-7
            df = (_theta_of_sigma(alpha, sigma + h) - _theta_of_sigma(alpha, sigma - h)) / (2 * h)
            if df == 0.0:
                break
            step = f / df
            if not (alpha - 1.0 < sigma - step < 1.0):
                break
            sigma -= step
            if abs(f) < 1e-16:
                break
    return ExponentPair(sigma, alpha - sigma, alpha, theta)


def lambda_coeff(n, pair: ExponentPair):
    """Eigenvalue of the two-sided operator on the weighted Jacobi mode
    w^{sigma,sigma*} Q_n^{sigma,sigma*}; positive for alpha in (1,2).

    Accepts scalar or array n.
    """
    a = pair.alpha
    pref = -math.sin(math.pi * a) / (
        math.sin(math.pi * pair.sigma_star) + math.sin(math.pi * pair.sigma)
    )
    return pref * log_gamma_ratio(n, a)


@dataclass(frozen=True)
class OrderPrediction:
    """Expected algebraic convergence orders from the regularity theory."""

    state_order: float
    adjoint_order: float
    control_order: float
    regularity_s: float


def predict_orders(pair: ExponentPair, r: float = 100.0) -> OrderPrediction:
    """Expected order min(r + alpha, 2*alpha + min(sigma,sigma*) - 1).

    r is the data-regularity index; use a large sentinel (default 100) for
    analytic data so the second branch governs.  For data of the form
    w^{beta,beta} times an analytic factor the conventional value is
    r = 2*beta + min(sigma, sigma*) + 1, supplied by the caller.
    """
    if r < 0:
        raise ParameterDomainError(f"data-regularity index must be >= 0, got {r}")
    s_reg = 2.0 * pair.alpha + min(pair.sigma, pair.sigma_star) - 1.0
    m = min(r + pair.alpha, s_reg)
    return OrderPrediction(state_order=m, adjoint_order=m, control_order=m, regularity_s=s_reg)
