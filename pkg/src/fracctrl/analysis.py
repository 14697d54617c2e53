"""Weighted error norms, observed convergence orders, and the
convergence-study driver with a disk-backed reference-solution cache.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln

from .jacobi import JacobiParams, gauss_jacobi_rule, jacobi_matrix, jacobi_norm_sq
from .solver import (
    ControlFunction,
    OptimalTriple,
    ProblemSpec,
    SolverConfig,
    optimize,
)
from .transforms import ConversionCache, SpectralFunction

CACHE_MAGIC = "FRACCTRL-REF"
CACHE_VERSION = 1


class AnalysisError(ValueError):
    """Raised on mismatched error-norm operands or bad study setup."""


def _pad(c: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    out[: len(c)] = c
    return out


def _weighted_poly_norm_sq(coeffs: np.ndarray, params: JacobiParams,
                           weight: tuple[float, float]) -> float:
    """Integral of w^{weight} * (sum coeffs Q_n^{params})^2 by quadrature."""
    wa, wb = weight
    if wa <= -1.0 or wb <= -1.0:
        return float("nan")
    rule = gauss_jacobi_rule(len(coeffs) + 1, JacobiParams(wa, wb))
    vals = coeffs @ jacobi_matrix(len(coeffs) - 1, params, rule.nodes)
    return rule.integrate(vals**2)


def _weighted_poly_integral(coeffs: np.ndarray, params: JacobiParams,
                            weight: tuple[float, float]) -> float:
    """Integral of w^{weight} * (sum coeffs Q_n^{params}) by quadrature."""
    wa, wb = weight
    if wa <= -1.0 or wb <= -1.0:
        return float("nan")
    rule = gauss_jacobi_rule(len(coeffs) // 2 + 2, JacobiParams(wa, wb))
    vals = coeffs @ jacobi_matrix(len(coeffs) - 1, params, rule.nodes)
    return rule.integrate(vals)


def _control_norm_sq(c: float, zc: np.ndarray, params: JacobiParams,
                     gamma: float, a: float, b: float) -> float:
    """||c - w*p/gamma||^2 in the w^{a,b} norm, where w*p is the weighted
    series with exponents equal to the polynomial parameters.

    Expands the square into three exactly-integrable terms; returns NaN
    when any term's combined weight is non-integrable.
    """
    wa, wb = params.gamma, params.beta
    if a <= -1.0 or b <= -1.0:
        return float("nan")
    const_term = c * c * float(np.exp(betaln(a + 1.0, b + 1.0)))
    cross = _weighted_poly_integral(zc, params, (a + wa, b + wb))
    square = _weighted_poly_norm_sq(zc, params, (a + 2 * wa, b + 2 * wb))
    return const_term - 2.0 * c / gamma * cross + square / gamma**2


def weighted_error(p_N, p_ref, a: float, b: float, *, use_quadrature: bool = False) -> float:
    """Relative weighted L2 error ||p_N - p_ref||_{w^{a,b}} / ||p_ref||.

    Both arguments must be SpectralFunctions in the same basis, or both
    ControlFunctions.  When (a, b) exactly cancels the functions' intrinsic
    weight the coefficientwise (Parseval) formula is used; otherwise exact
    Gauss-Jacobi quadrature of the squared difference.
    """
    if isinstance(p_N, ControlFunction) and isinstance(p_ref, ControlFunction):
        z1, z2 = p_N.z_part, p_ref.z_part
        if z1.poly_params != z2.poly_params:
            raise AnalysisError("control functions use different bases")
        n = max(len(z1.coeffs), len(z2.coeffs))
        dz = _pad(z2.coeffs, n) - _pad(z1.coeffs, n)
        dc = p_ref.constant_part - p_N.constant_part
        num = _control_norm_sq(dc, dz, z1.poly_params, p_ref.gamma, a, b)
        den = _control_norm_sq(p_ref.constant_part, _pad(z2.coeffs, n),
                               z2.poly_params, p_ref.gamma, a, b)
        if not np.isfinite(num) or not np.isfinite(den):
            return float("nan")
        return float(np.sqrt(max(num, 0.0) / den))
    if not (isinstance(p_N, SpectralFunction) and isinstance(p_ref, SpectralFunction)):
        raise AnalysisError("operands must both be SpectralFunction or ControlFunction")
    if p_N.poly_params != p_ref.poly_params or p_N.weight_exponents != p_ref.weight_exponents:
        raise AnalysisError("basis mismatch between candidate and reference")
    wa, wb = p_N.weight_exponents
    n = max(len(p_N.coeffs), len(p_ref.coeffs))
    diff = _pad(p_ref.coeffs, n) - _pad(p_N.coeffs, n)
    ref = _pad(p_ref.coeffs, n)
    if a == -wa and b == -wb and not use_quadrature:
        # Parseval: the combined weight is the orthogonality weight
        h = jacobi_norm_sq(np.arange(n), p_N.poly_params)
        return float(np.sqrt(np.dot(diff**2, h) / np.dot(ref**2, h)))
    combined = (a + 2 * wa, b + 2 * wb)
    num = _weighted_poly_norm_sq(diff, p_N.poly_params, combined)
    den = _weighted_poly_norm_sq(ref, p_ref.poly_params, combined)
    if not np.isfinite(num) or not np.isfinite(den):
        return float("nan")
    return float(np.sqrt(num / den))


def eoc(errors, Ns) -> list[float]:
    """Observed orders log2(E(N)/E(2N)) for a doubling sequence of Ns."""
    errors = list(errors)
    Ns = list(Ns)
    if len(errors) < 2 or len(errors) != len(Ns):
        raise AnalysisError("need at least two errors aligned with Ns")
    for n1, n2 in zip(Ns, Ns[1:]):
        if n2 != 2 * n1:
            raise AnalysisError(f"Ns must double: {n1} -> {n2}")
    out = []
    for e1, e2 in zip(errors, errors[1:]):
        if not (np.isfinite(e1) and np.isfinite(e2)) or e1 <= 0 or e2 <= 0:
            out.append(float("nan"))
        else:
            out.append(float(np.log2(e1 / e2)))
    return out


# ---------------------------------------------------------------------------
# reference-solution disk cache


def cache_dir() -> str:
    return os.environ.get(
        "FRACCTRL_CACHE_DIR",
        os.path.join(os.path.expanduser("~"), ".cache", "fracctrl"),
    )


def _spec_digest(spec: ProblemSpec, N: int, config: SolverConfig) -> str:
    """Content hash identifying a reference solve."""
    blob = io.BytesIO()
    meta = {
        "version": CACHE_VERSION,
        "alpha": spec.alpha, "theta": spec.theta,
        "lambda1": spec.lambda1, "lambda2": spec.lambda2, "gamma": spec.gamma,
        "N": N, "inner_tol": config.inner_tol, "outer_tol": config.outer_tol,
        "mode": config.mode,
    }
    blob.write(json.dumps(meta, sort_keys=True).encode())
    for fun in (spec.f, spec.u_d):
        if fun is None:
            blob.write(b"none")
        else:
            blob.write(np.asarray(fun.weight_exponents).tobytes())
            blob.write(np.asarray(fun.poly_params.as_tuple()).tobytes())
            blob.write(fun.coeffs.tobytes())
    return hashlib.sha256(blob.getvalue()).hexdigest()


def _payload_digest(U, Z, c) -> str:
    h = hashlib.sha256()
    h.update(np.asarray(U).tobytes())
    h.update(np.asarray(Z).tobytes())
    h.update(np.float64(c).tobytes())
    return h.hexdigest()


def cache_path(digest: str) -> str:
    return os.path.join(cache_dir(), f"{digest}.npz")


def save_reference(triple: OptimalTriple, digest: str) -> str:
    os.makedirs(cache_dir(), exist_ok=True)
    path = cache_path(digest)
    tmp = path + f".tmp{os.getpid()}"
    meta = json.dumps({
        "magic": CACHE_MAGIC, "version": CACHE_VERSION, "digest": digest,
        "payload_digest": _payload_digest(
            triple.U.coeffs, triple.Z.coeffs, triple.q.constant_part),
        "alpha": triple.pair.alpha, "theta": triple.pair.theta,
        "outer_iterations": triple.stats.outer_iterations,
        "wall_time": triple.stats.wall_time,
    })
    with open(tmp, "wb") as fh:
        np.savez(fh, meta=np.array(meta), U=triple.U.coeffs, Z=triple.Z.coeffs,
                 c=np.float64(triple.q.constant_part))
    os.replace(tmp, path)
    return path


def load_reference(digest: str, spec: ProblemSpec) -> OptimalTriple | None:
    """Load a cached reference; returns None on miss or corruption."""
    path = cache_path(digest)
    if not os.path.exists(path):
        return None
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("magic") != CACHE_MAGIC or meta.get("version") != CACHE_VERSION:
                return None
            U, Z, c = data["U"], data["Z"], float(data["c"])
            if meta.get("payload_digest") != _payload_digest(U, Z, c):
                return None
    except Exception:
        return None
    pair = spec.exponent_pair()
    g, b = pair.sigma, pair.sigma_star
    u_fun = SpectralFunction((g, b), JacobiParams(g, b), U)
    z_fun = SpectralFunction((b, g), JacobiParams(b, g), Z)
    q_fun = ControlFunction(c, SpectralFunction((b, g), JacobiParams(b, g), Z), spec.gamma)
    stats_iters = meta.get("outer_iterations", 0)
    from .solver import SolveStats
    st = SolveStats(outer_iterations=stats_iters, wall_time=meta.get("wall_time", 0.0))
    return OptimalTriple(U=u_fun, Z=z_fun, q=q_fun, pair=pair, stats=st)


def reference_solve(spec: ProblemSpec, N_ref: int, config: SolverConfig,
                    use_cache: bool = True,
                    cache: ConversionCache | None = None) -> OptimalTriple:
    """Solve at the reference truncation, consulting the disk cache."""
    ref_cfg = SolverConfig(
        N=N_ref, mode=config.mode, inner_tol=config.inner_tol,
        inner_max=config.inner_max, outer_tol=config.outer_tol,
        outer_max=config.outer_max, bootstrap_N=config.bootstrap_N,
    )
    digest = _spec_digest(spec, N_ref, ref_cfg)
    if use_cache:
        hit = load_reference(digest, spec)
        if hit is not None:
            return hit
    triple = optimize(spec, ref_cfg, cache=cache)
    if use_cache:
        save_reference(triple, digest)
    return triple


# ---------------------------------------------------------------------------
# convergence study


@dataclass
class ConvergenceReport:
    spec: ProblemSpec
    Ns: list[int]
    N_ref: int
    errors: dict = field(default_factory=dict)   # name -> list per N
    orders: dict = field(default_factory=dict)   # name -> list (len-1)
    iters: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    expected_order: float = float("nan")

    VARIABLES = ("u_weighted", "z_weighted", "q_weighted", "u_l2", "z_l2", "q_l2")

    def rows(self) -> list[dict]:
        """Flat per-N rows matching the CSV column contract."""
        out = []
        for i, N in enumerate(self.Ns):
            row = {"alpha": self.spec.alpha, "theta": self.spec.theta, "N": N}
            row["err_u_weighted"] = self.errors["u_weighted"][i]
            row["ord_u"] = self.orders["u_weighted"][i - 1] if i > 0 else float("nan")
            row["err_z_weighted"] = self.errors["z_weighted"][i]
            row["ord_z"] = self.orders["z_weighted"][i - 1] if i > 0 else float("nan")
            row["err_q_weighted"] = self.errors["q_weighted"][i]
            row["ord_q"] = self.orders["q_weighted"][i - 1] if i > 0 else float("nan")
            row["err_q_l2"] = self.errors["q_l2"][i]
            row["ord_q_l2"] = self.orders["q_l2"][i - 1] if i > 0 else float("nan")
            row["iters"] = self.iters[i]
            row["seconds"] = self.seconds[i]
            row["expected_order"] = self.expected_order
            out.append(row)
        return out


def triple_errors(triple: OptimalTriple, ref: OptimalTriple) -> dict:
    """All six relative error norms of a solve against the reference."""
    pair = triple.pair
    g, b = pair.sigma, pair.sigma_star
    return {
        "u_weighted": weighted_error(triple.U, ref.U, -g, -b),
        "z_weighted": weighted_error(triple.Z, ref.Z, -b, -g),
        "q_weighted": weighted_error(triple.q, ref.q, -b, -g),
        "u_l2": weighted_error(triple.U, ref.U, 0.0, 0.0),
        "z_l2": weighted_error(triple.Z, ref.Z, 0.0, 0.0),
        "q_l2": weighted_error(triple.q, ref.q, 0.0, 0.0),
    }


def convergence_study(spec: ProblemSpec, Ns, N_ref: int, config: SolverConfig,
                      use_cache: bool = True) -> ConvergenceReport:
    """Solve at each N against a (cached) reference at N_ref and tabulate
    errors, observed orders, iteration counts and wall times."""
    Ns = sorted(int(n) for n in Ns)
    if not Ns:
        raise AnalysisError("empty truncation list")
    if len(Ns) == 1 and Ns[0] == N_ref:
        raise AnalysisError("degenerate study: Ns equals N_ref")
    if N_ref < 4 * max(Ns):
        raise AnalysisError(f"N_ref = {N_ref} must be >= 4*max(Ns) = {4 * max(Ns)}")
    from .fracparams import predict_orders
    pair = spec.exponent_pair()
    shared = ConversionCache()
    ref = reference_solve(spec, N_ref, config, use_cache=use_cache, cache=shared)
    report = ConvergenceReport(spec=spec, Ns=Ns, N_ref=N_ref)
    report.expected_order = predict_orders(
        pair, spec.data_regularity if spec.data_regularity is not None else 100.0
    ).state_order
    per_var = {k: [] for k in ConvergenceReport.VARIABLES}
    for N in Ns:
        cfg = SolverConfig(
            N=N, mode=config.mode, inner_tol=config.inner_tol,
            inner_max=config.inner_max, outer_tol=config.outer_tol,
            outer_max=config.outer_max, bootstrap_N=config.bootstrap_N,
        )
        t0 = time.perf_counter()
        triple = optimize(spec, cfg, cache=shared)
        dt = time.perf_counter() - t0
        errs = triple_errors(triple, ref)
        for k in per_var:
            per_var[k].append(errs[k])
        report.iters.append(triple.stats.outer_iterations)
        report.seconds.append(dt)
    report.errors = per_var
    if len(Ns) >= 2:
        for k, es in per_var.items():
            report.orders[k] = eoc(es, Ns)
    else:
        report.orders = {k: [] for k in per_var}
    return report
