import numpy as np
import pytest

from seedbank import (
    FlowKind,
    SlowEnvSpec,
    build_flow,
    delta_matrix,
    drift_bound,
    drift_k1_closed,
    drift_k2_closed,
    drift_second_derivative,
    eigvecs_on_gamma,
    fast_second_derivatives_k1,
    fd_hessians,
    fd_jacobian,
    h_function,
    hessians_on_gamma,
    jacobian_on_gamma,
    manifold_chart,
    null_eigenpair,
    phi0_derivatives,
    projections,
    reduce_point,
    slow_env_derivatives,
    solve_theta,
    theta_fast_closed_k1,
    theta_g_closed,
    validate_distribution,
)
from seedbank.errors import UnsupportedK, ValidationError
from seedbank.seedbank_flows import left_eigvec_prime
from conftest import random_simplex


def slow_spec():
    return SlowEnvSpec(0.2, 2.0, alpha=lambda x: 0.0, eta=lambda x: 0.0)


def test_flow_kind_validation():
    d = validate_distribution([0.5, 0.5])
    with pytest.raises(ValidationError):
        FlowKind("bogus", d)
    assert FlowKind("constant", d).dim == 2
    assert FlowKind("slow_env", d).dim == 3
    assert FlowKind("fast_env", d).dim == 3


def test_flows_vanish_on_manifold():
    rng = np.random.default_rng(2)
    for k in (1, 2, 3):
        d = random_simplex(rng, k)
        x0 = rng.uniform(0.0, 1.0)
        for tag in ("constant", "linearized"):
            flow = build_flow(FlowKind(tag, d))
            np.testing.assert_allclose(flow(np.full(k + 1, x0)), 0.0, atol=1e-14)
        flow = build_flow(FlowKind("fast_env", d))
        state = np.concatenate([np.full(k + 1, x0), np.zeros(k)])
        np.testing.assert_allclose(flow(state), 0.0, atol=1e-14)
        flow = build_flow(FlowKind("slow_env", d, env=slow_spec()))
        xi = rng.uniform(max(0.2, x0), 2.0)
        state = np.concatenate([np.full(k + 1, x0), [xi]])
        np.testing.assert_allclose(flow(state), 0.0, atol=1e-14)


def test_constant_flow_example():
    d = validate_distribution([0.5, 0.5])
    flow = build_flow(FlowKind("constant", d))
    out = flow(np.array([0.0, 1.0]))
    assert out[0] == pytest.approx(1.0 / 3.0)
    assert out[1] == pytest.approx(-1.0)


def test_slow_env_scaling_identity():
    # the slow-environment field is a time change of the constant one
    rng = np.random.default_rng(7)
    for _ in range(25):
        k = rng.integers(1, 4)
        d = random_simplex(rng, k)
        const = build_flow(FlowKind("constant", d))
        slow = build_flow(FlowKind("slow_env", d, env=slow_spec()))
        xi = rng.uniform(0.5, 2.0)
        x = rng.uniform(0.0, min(xi, 1.0), k + 1)
        x[0] = min(x[0], xi)
        got = slow(np.concatenate([x, [xi]]))
        want = xi * const(x / xi)
        np.testing.assert_allclose(got[: k + 1], want, atol=1e-12)
        assert got[k + 1] == 0.0


def test_jacobian_examples():
    d = validate_distribution([0.5, 0.5])
    kind = FlowKind("constant", d)
    np.testing.assert_allclose(
        jacobian_on_gamma(kind, 0.0), [[-0.5, 0.5], [1.0, -1.0]]
    )
    np.testing.assert_allclose(jacobian_on_gamma(kind, 1.0)[0], [0.0, 0.0])
    fast = jacobian_on_gamma(FlowKind("fast_env", d), 0.3)
    assert fast[0, -1] == pytest.approx(0.5 * 0.3 * 0.7)


def test_closed_jacobians_match_finite_differences():
    rng = np.random.default_rng(13)
    for k in (1, 2, 3):
        d = random_simplex(rng, k)
        x0 = rng.uniform(0.05, 0.95)
        for tag in ("constant", "linearized", "fast_env"):
            kind = FlowKind(tag, d)
            flow = build_flow(kind)
            point = manifold_chart(kind).gamma(x0)
            fd = fd_jacobian(flow.func, point)
            np.testing.assert_allclose(jacobian_on_gamma(kind, x0), fd, atol=1e-7)


def test_closed_hessians_match_finite_differences():
    rng = np.random.default_rng(19)
    for k in (1, 2, 3):
        d = random_simplex(rng, k)
        x0 = rng.uniform(0.05, 0.95)
        for tag in ("constant", "linearized", "fast_env"):
            kind = FlowKind(tag, d)
            flow = build_flow(kind)
            point = manifold_chart(kind).gamma(x0)
            fd = fd_hessians(flow.func, point)
            closed = hessians_on_gamma(kind, x0)
            for a, b in zip(closed, fd):
                np.testing.assert_allclose(a, b, atol=5e-6)


def test_eigvecs_examples():
    d = validate_distribution([0.5, 0.5])
    u, v = eigvecs_on_gamma(FlowKind("constant", d), 0.0)
    np.testing.assert_allclose(u, [1.0, 1.0])
    np.testing.assert_allclose(v, [2.0 / 3.0, 1.0 / 3.0])
    u, v = eigvecs_on_gamma(FlowKind("fast_env", d), 0.3)
    np.testing.assert_allclose(u, [1.0, 1.0, 0.0])
    # (u, v) is a null pair of the closed Jacobian with <u, v> = 1
    jac = jacobian_on_gamma(FlowKind("fast_env", d), 0.3)
    np.testing.assert_allclose(jac @ u, np.zeros(3), atol=1e-14)
    np.testing.assert_allclose(v @ jac, np.zeros(3), atol=1e-14)
    assert abs(u @ v - 1.0) < 1e-14


def test_left_eigvec_prime_matches_finite_differences():
    rng = np.random.default_rng(37)
    for k in (1, 2, 3):
        d = random_simplex(rng, k)
        x0 = rng.uniform(0.1, 0.9)
        for tag in ("constant", "fast_env"):
            kind = FlowKind(tag, d)
            step = 1e-6
            fd = (
                eigvecs_on_gamma(kind, x0 + step)[1]
                - eigvecs_on_gamma(kind, x0 - step)[1]
            ) / (2 * step)
            np.testing.assert_allclose(left_eigvec_prime(kind, x0), fd, atol=1e-7)


def test_theta_g_closed_examples():
    d = validate_distribution([0.5, 0.5])
    np.testing.assert_allclose(theta_g_closed(d, 1.0), np.zeros((2, 2)))
    theta = theta_g_closed(d, 0.0)
    assert theta[0, 0] == pytest.approx(-2.0 / 27.0)
    rng = np.random.default_rng(41)
    for _ in range(10):
        k = rng.integers(1, 6)
        d = random_simplex(rng, k)
        theta = theta_g_closed(d, rng.uniform(0.0, 1.0))
        np.testing.assert_allclose(theta @ np.ones(k + 1), 0.0, atol=1e-12)


def test_delta_matrix():
    d = validate_distribution([0.5, 0.5])
    delta, spectrum = delta_matrix(d)
    np.testing.assert_allclose(sorted(np.linalg.eigvalsh(delta)), sorted(spectrum),
                               atol=1e-12)
    assert spectrum[-1] == pytest.approx(-0.5)
    np.testing.assert_allclose(delta @ np.ones(2), 0.0, atol=1e-14)
    delta0, _ = delta_matrix(validate_distribution([1.0, 0.0]))
    np.testing.assert_allclose(delta0, np.zeros((2, 2)))
    # the full Hessian equals the linearized one plus 2 (1 - x0) Delta
    rng = np.random.default_rng(43)
    for _ in range(10):
        k = rng.integers(1, 5)
        d = random_simplex(rng, k)
        x0 = rng.uniform(0.0, 1.0)
        delta, _ = delta_matrix(d)
        full = hessians_on_gamma(FlowKind("constant", d), x0)[0]
        lin = hessians_on_gamma(FlowKind("linearized", d), x0)[0]
        np.testing.assert_allclose(full, lin + 2.0 * (1.0 - x0) * delta, atol=1e-12)


def test_drift_closed_forms():
    rng = np.random.default_rng(47)
    for _ in range(20):
        b0 = rng.uniform(0.05, 1.0)
        x0 = rng.uniform(0.0, 1.0)
        d = validate_distribution([b0, 1.0 - b0])
        assert abs(drift_second_derivative(d, x0) - drift_k1_closed(b0, x0)) < 1e-10
    for _ in range(20):
        d = random_simplex(rng, 2)
        x0 = rng.uniform(0.0, 1.0)
        assert abs(drift_second_derivative(d, x0) - drift_k2_closed(d, x0)) < 1e-10


def test_drift_boundary_and_bound():
    rng = np.random.default_rng(53)
    for k in range(1, 7):
        d = random_simplex(rng, k)
        big_b = d.mean_time
        assert abs(drift_second_derivative(d, 1.0) - 2.0 * big_b) < 1e-9
        assert drift_bound(big_b, 1.0) == pytest.approx(2.0 * big_b)
        for x0 in rng.uniform(0.0, 1.0, 10):
            val = drift_second_derivative(d, x0)
            assert val <= drift_bound(big_b, x0) + 1e-12
    assert drift_bound(0.0, 0.5) == 0.0
    assert drift_bound(1.0, 0.0) == pytest.approx(0.375)


def test_drift_strictly_increasing():
    d = validate_distribution([0.4, 0.3, 0.3])
    xs = np.linspace(0.0, 1.0, 100)
    vals = np.array([drift_second_derivative(d, x) for x in xs])
    assert np.all(np.diff(vals) > 0)


def test_drift_positive_for_k1():
    for b0 in (0.2, 0.5, 0.9):
        for x0 in np.linspace(0.01, 0.99, 20):
            assert drift_k1_closed(b0, x0) > 0


def fast_pipeline_k1(b0, x0):
    """Generic-engine fast-regime reduction for K = 1 with analytic derivatives."""
    d = validate_distribution([b0, 1.0 - b0])
    kind = FlowKind("fast_env", d)
    flow = build_flow(kind)
    flow.jac = lambda s: jacobian_on_gamma(kind, s[0])
    flow.hess = lambda s: hessians_on_gamma(kind, s[0])
    chart = manifold_chart(kind)
    jac = jacobian_on_gamma(kind, x0)
    u, v = eigvecs_on_gamma(kind, x0)
    _, p_s = projections(u, v)
    theta = solve_theta(jac, hessians_on_gamma(kind, x0), v, p_s, u)
    grad, hess = phi0_derivatives(
        chart, x0, lambda s: eigvecs_on_gamma(kind, s)[1], theta,
        v_prime_fn=lambda s: left_eigvec_prime(kind, s),
    )
    return theta, hess


def test_fast_second_derivatives_examples():
    a, b = fast_second_derivatives_k1(1.0, 0.4)
    assert a == 0.0 == b
    _, b = fast_second_derivatives_k1(0.3, 1.0)
    assert b == 0.0
    theta, hess = fast_pipeline_k1(0.5, 0.3)
    d2_xu, d2_uu = fast_second_derivatives_k1(0.5, 0.3)
    assert abs(hess[0, 2] - d2_xu) < 1e-8
    assert abs(hess[2, 2] - d2_uu) < 1e-8
    th_xu, th_uu = theta_fast_closed_k1(0.5, 0.3)
    assert abs(theta[0, 2] - th_xu) < 1e-10
    assert abs(theta[2, 2] - th_uu) < 1e-10


def test_fast_theta_top_left_block_is_constant_theta():
    rng = np.random.default_rng(59)
    for k in (1, 2):
        d = random_simplex(rng, k)
        x0 = rng.uniform(0.05, 0.95)
        fast = FlowKind("fast_env", d)
        jac = jacobian_on_gamma(fast, x0)
        u, v = eigvecs_on_gamma(fast, x0)
        _, p_s = projections(u, v)
        theta_fast = solve_theta(jac, hessians_on_gamma(fast, x0), v, p_s, u)
        const = FlowKind("constant", d)
        jac_c = jacobian_on_gamma(const, x0)
        u_c, v_c = eigvecs_on_gamma(const, x0)
        _, p_s_c = projections(u_c, v_c)
        theta_c = solve_theta(jac_c, hessians_on_gamma(const, x0), v_c, p_s_c, u_c)
        np.testing.assert_allclose(theta_fast[: k + 1, : k + 1], theta_c, atol=1e-9)


def test_h_function():
    assert abs(h_function(0.0, 0.0) - 5.0 / 6.0) < 1e-14
    xs = np.linspace(0.0, 1.0, 101)
    for x0 in xs:
        assert h_function(x0, 1.0) == pytest.approx(0.0, abs=1e-14)
    grid = np.array([[h_function(x, b) for b in xs] for x in xs])
    assert np.all(grid >= -1e-12)
    assert grid.max() <= 5.0 / 6.0 + 1e-12


def test_manifold_chart_unsupported():
    d = validate_distribution([0.5, 0.5])
    with pytest.raises(UnsupportedK):
        manifold_chart(FlowKind("slow_env", d, env=slow_spec()))
    with pytest.raises(UnsupportedK):
        jacobian_on_gamma(FlowKind("slow_env", d, env=slow_spec()), 0.3)
    with pytest.raises(UnsupportedK):
        drift_k2_closed(d, 0.3)


def test_slow_env_derivatives():
    rng = np.random.default_rng(61)
    for _ in range(10):
        k = rng.integers(1, 4)
        d = random_simplex(rng, k)
        xi = rng.uniform(0.5, 2.0)
        x0 = rng.uniform(0.0, xi * 0.99)
        out = slow_env_derivatives(d, x0, xi)
        rho = x0 / xi
        big_b = d.mean_time
        den_rho = big_b * (1.0 - rho) + 1.0
        # first derivative equals the constant-environment gradient at rho
        assert abs(out["dx0"] - 1.0 / den_rho) < 1e-12
        assert out["dxi"] == 0.0
        assert out["dxidxi"] == 0.0
        # second derivative scales like 1/xi by the time-change identity
        assert abs(out["dx0dx0"] - drift_second_derivative(d, rho) / xi) < 1e-10
        assert abs(out["dxidx0"] + big_b * x0 / (big_b * (xi - x0) + xi) ** 2) < 1e-14
