"""Tests for the projected-gradient driver: inner fixed-point solves,
control projection, and full optimize runs in both modes."""

import numpy as np
import pytest

from fracctrl.fracparams import solve_sigma
from fracctrl.jacobi import JacobiParams, jacobi_norm_sq
from fracctrl.operators import (
    RhsAssembler,
    assemble_dense,
    assemble_fast,
    build_preconditioners,
)
from fracctrl.solver import (
    ControlFunction,
    ProblemSpec,
    SolverConfig,
    SolverError,
    direct_solve_state,
    fixed_point_solve,
    optimize,
    project_control,
)
from fracctrl.transforms import ConversionCache, SpectralFunction, chebyshev_expand


def example1_spec(alpha=1.4, theta=0.7, gamma=1.0):
    return ProblemSpec(
        alpha=alpha, theta=theta, lambda1=1.0, lambda2=1.0, gamma=gamma,
        f=chebyshev_expand(np.sin, M=64), u_d=chebyshev_expand(np.cos, M=64),
    )


class TestConfig:
    def test_bad_mode_rejected(self):
        with pytest.raises(ValueError):
            SolverConfig(mode="iterative")

    def test_nonpositive_tolerance_rejected(self):
        with pytest.raises(ValueError):
            SolverConfig(inner_tol=0.0)
        with pytest.raises(ValueError):
            SolverConfig(outer_tol=-1e-12)

    def test_bootstrap_clamped_to_n(self):
        cfg = SolverConfig(N=4, bootstrap_N=8)
        assert cfg.bootstrap_N == 4


class TestProjectControl:
    def test_positive_mean_keeps_constant(self):
        pair = solve_sigma(0.7, 1.4)
        h0 = float(jacobi_norm_sq(0, JacobiParams(pair.sigma_star, pair.sigma)))
        Z = np.array([1.5, -0.2, 0.3])
        q = project_control(Z, 2.0, pair)
        assert q.constant_part == pytest.approx(1.5 * h0 / 2.0, rel=1e-14)
        # projection keeps the control admissible: mean exactly zero here
        assert q.mean() == pytest.approx(0.0, abs=1e-15)

    def test_negative_mean_clipped(self):
        pair = solve_sigma(0.7, 1.4)
        h0 = float(jacobi_norm_sq(0, JacobiParams(pair.sigma_star, pair.sigma)))
        Z = np.array([-1.5, 0.2, 0.0])
        q = project_control(Z, 1.0, pair)
        assert q.constant_part == 0.0
        # mean = -z0 h0 / gamma > 0 when z0 < 0
        assert q.mean() == pytest.approx(1.5 * h0, rel=1e-14)

    def test_gamma_must_be_positive(self):
        with pytest.raises(ValueError):
            project_control(np.zeros(3), 0.0, solve_sigma(0.5, 1.5))

    def test_values_match_definition(self):
        pair = solve_sigma(0.5, 1.6)
        Z = np.array([0.4, 0.1])
        gamma = 3.0
        q = project_control(Z, gamma, pair)
        x = np.linspace(0.05, 0.95, 7)
        z_vals = q.z_part.values(x)
        assert np.allclose(q.values(x), q.constant_part - z_vals / gamma)

    def test_rep_vector_layout(self):
        pair = solve_sigma(0.5, 1.6)
        q = project_control(np.array([2.0, -1.0]), 4.0, pair)
        rep = q.rep_vector()
        assert rep[0] == q.constant_part
        assert np.allclose(rep[1:], np.array([2.0, -1.0]) / 4.0)


class TestFixedPoint:
    def test_solves_state_system(self):
        pair = solve_sigma(0.7, 1.8)
        N = 64
        cache = ConversionCache()
        dense = assemble_dense(N, pair, 1.0, 1.0)
        fast = assemble_fast(N, pair, 1.0, 1.0, cache)
        P, _ = build_preconditioners(fast)
        asm = RhsAssembler(N, pair, chebyshev_expand(np.sin, M=64), None, cache)
        F = asm.rhs_F(0.0, np.zeros(N + 1), 1.0)
        U_direct = direct_solve_state(dense, F)
        U_fast, iters, converged = fixed_point_solve(
            fast.apply_A, P, F, SolverConfig(N=N)
        )
        assert converged
        assert iters < 200
        assert np.linalg.norm(U_fast - U_direct) < 1e-10 * np.linalg.norm(U_direct)

    def test_zero_rhs_short_circuits(self):
        pair = solve_sigma(0.5, 1.5)
        fast = assemble_fast(16, pair, 1.0, 1.0)
        P, _ = build_preconditioners(fast)
        x, iters, converged = fixed_point_solve(
            fast.apply_A, P, np.zeros(17), SolverConfig(N=16)
        )
        assert converged and iters == 0 and np.all(x == 0)

    def test_divergence_detected(self):
        # an anti-preconditioner (wrong sign) makes the iteration blow up
        pair = solve_sigma(0.7, 1.4)
        fast = assemble_fast(32, pair, 1.0, 1.0)
        P, _ = build_preconditioners(fast)
        bad = type(P)(bands=-3.0 * P.bands)
        rhs = np.ones(33)
        with pytest.raises(SolverError):
            fixed_point_solve(fast.apply_A, bad, rhs, SolverConfig(N=32))


class TestOptimize:
    def test_direct_and_fast_agree(self):
        spec = example1_spec(alpha=1.6, theta=0.7)
        cache = ConversionCache()
        t_direct = optimize(spec, SolverConfig(N=64, mode="direct"), cache=cache)
        t_fast = optimize(spec, SolverConfig(N=64, mode="fast"), cache=cache)
        for a, b in ((t_direct.U, t_fast.U), (t_direct.Z, t_fast.Z)):
            assert np.linalg.norm(a.coeffs - b.coeffs) < 1e-9 * np.linalg.norm(a.coeffs)
        assert t_direct.q.constant_part == pytest.approx(
            t_fast.q.constant_part, abs=1e-12
        )

    def test_optimality_identity_holds(self):
        # by construction gamma*q + z - max{0, integral z} = 0 pointwise
        spec = example1_spec(alpha=1.8, theta=0.7, gamma=2.0)
        triple = optimize(spec, SolverConfig(N=48, mode="direct"))
        x = np.linspace(0.02, 0.98, 33)
        resid = (
            spec.gamma * triple.q.values(x)
            + triple.Z.values(x)
            - spec.gamma * triple.q.constant_part
        )
        assert np.max(np.abs(resid)) < 1e-13 * max(np.max(np.abs(triple.Z.values(x))), 1)

    def test_control_admissible(self):
        for gamma in (1.0, 0.1):
            spec = example1_spec(alpha=1.4, gamma=gamma)
            triple = optimize(spec, SolverConfig(N=48, mode="direct"))
            assert triple.q.mean() >= -1e-13

    def test_large_gamma_suppresses_control(self):
        small = optimize(example1_spec(gamma=1.0), SolverConfig(N=32, mode="direct"))
        big = optimize(example1_spec(gamma=1e6), SolverConfig(N=32, mode="direct"))
        x = np.linspace(0.05, 0.95, 9)
        assert np.max(np.abs(big.q.values(x))) < 1e-4 * np.max(np.abs(small.q.values(x)))

    def test_zero_data_gives_zero_solution(self):
        spec = ProblemSpec(alpha=1.6, theta=0.5, lambda1=1.0, lambda2=1.0,
                           gamma=1.0, f=None, u_d=None)
        triple = optimize(spec, SolverConfig(N=24, mode="direct"))
        assert np.max(np.abs(triple.U.coeffs)) < 1e-14
        assert np.max(np.abs(triple.Z.coeffs)) < 1e-14
        assert triple.q.constant_part == 0.0

    def test_stats_recorded(self):
        spec = example1_spec()
        triple = optimize(spec, SolverConfig(N=32, mode="fast"))
        st = triple.stats
        assert st.outer_iterations >= 3
        assert len(st.inner_iterations) == st.outer_iterations
        assert len(st.residual_history) == st.outer_iterations
        assert st.residual_history[-1] <= 1e-12
        assert st.wall_time > 0

    def test_outer_iteration_count_mesh_independent(self):
        spec = example1_spec(alpha=1.8, theta=0.7)
        counts = [
            optimize(spec, SolverConfig(N=N, mode="fast")).stats.outer_iterations
            for N in (32, 64)
        ]
        assert abs(counts[0] - counts[1]) <= 2

    def test_diagnostic_mode_lambda1_zero(self):
        # lambda1 = 0 (no advection) is accepted for manufactured tests
        spec = ProblemSpec(alpha=1.5, theta=0.5, lambda1=0.0, lambda2=0.0,
                           gamma=1.0, f=chebyshev_expand(np.sin, M=64), u_d=None)
        triple = optimize(spec, SolverConfig(N=32, mode="fast"))
        assert np.all(np.isfinite(triple.U.coeffs))
