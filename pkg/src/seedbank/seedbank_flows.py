"""Concrete seed-bank flow fields and their closed-form reduction quantities.

Four flows are provided, all sharing the attractor manifold "all generations at
the same mutant frequency":

* ``constant`` — the drift field of the constant-environment model (dim K+1),
* ``linearized`` — the same field with the rational denominator dropped
  (dim K+1); its curvature matrix has a simple closed form used as an oracle,
* ``slow_env`` — the field coupled to a population-size variable xi (dim K+2),
* ``fast_env`` — the field augmented with the last K environment marks
  (dim 2K+1).

Alongside the generic engine interface (build_flow + closed Jacobians,
eigenvectors and Hessians on the manifold), this module exposes the headline
scalar quantities: the second derivative of the projection map (the diffusion
drift factor), its closed K=1 and K=2 forms and upper bound, the fast-regime
mixed second derivatives for K=1, and the extra-drift function h.
"""

from dataclasses import dataclass

import numpy as np

from .core_model import GerminationDistribution, tail_sums
from .errors import UnsupportedK, ValidationError
from .manifold_reduction import (
    FlowField,
    diagonal_chart,
    ManifoldChart,
    projections,
    solve_theta,
)

TAGS = ("constant", "linearized", "slow_env", "fast_env")


@dataclass(frozen=True)
class FlowKind:
    """Selects one of the four built-in flows for a germination distribution."""

    tag: str
    d: GerminationDistribution
    env: object = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValidationError(f"unknown flow tag {self.tag!r}; expected one of {TAGS}")

    @property
    def dim(self):
        k = self.d.k
        return {"constant": k + 1, "linearized": k + 1, "slow_env": k + 2,
                "fast_env": 2 * k + 1}[self.tag]


def _constant_field(d):
    b = d.array

    def func(x):
        x0 = x[0]
        num = b[1:] @ x[1:] - (1.0 - b[0]) * x0
        den = (1.0 - x0) + b @ x
        out = np.empty_like(x)
        out[0] = (1.0 - x0) * num / den
        out[1:] = x[:-1] - x[1:]
        return out

    return func


def _linearized_field(d):
    b = d.array

    def func(x):
        x0 = x[0]
        out = np.empty_like(x)
        out[0] = (1.0 - x0) * (b[1:] @ x[1:] - (1.0 - b[0]) * x0)
        out[1:] = x[:-1] - x[1:]
        return out

    return func


def _slow_env_field(d):
    b = d.array
    k = d.k

    def func(state):
        x = state[: k + 1]
        xi = state[k + 1]
        num = b[1:] @ x[1:] - (1.0 - b[0]) * x[0]
        den = (xi - x[0]) + b @ x
        out = np.empty_like(state)
        out[0] = (xi - x[0]) * num / den
        out[1 : k + 1] = x[:-1] - x[1:]
        out[k + 1] = 0.0
        return out

    return func


def _fast_env_field(d):
    b = d.array
    k = d.k

    def func(state):
        x = state[: k + 1]
        ups = state[k + 1 :]
        weights = b[1:] * (1.0 + ups)
        num = weights @ x[1:] - (1.0 - b[0]) * x[0]
        den = (1.0 - x[0]) + b[0] * x[0] + weights @ x[1:]
        out = np.empty_like(state)
        out[0] = (1.0 - x[0]) * num / den
        out[1 : k + 1] = x[:k] - x[1 : k + 1]
        out[k + 1] = -ups[0]
        if k > 1:
            out[k + 2 :] = ups[:-1] - ups[1:]
        return out

    return func


def build_flow(kind):
    """Build the FlowField for a FlowKind, with analytic derivatives where known."""
    d = kind.d
    k = d.k
    if kind.tag in ("constant", "linearized"):
        domain = np.tile([0.0, 1.0], (k + 1, 1))
        func = _constant_field(d) if kind.tag == "constant" else _linearized_field(d)
        return FlowField(dim=k + 1, domain=domain, func=func)
    if kind.tag == "slow_env":
        if kind.env is None:
            raise ValidationError("slow_env flow requires a SlowEnvSpec")
        xi_max = kind.env.xi_max
        domain = np.vstack([np.tile([0.0, xi_max], (k + 1, 1)), [[kind.env.xi_min, xi_max]]])
        return FlowField(
            dim=k + 2,
            domain=domain,
            func=_slow_env_field(d),
            constraint=lambda s: s[0] <= s[k + 1] + 1e-9,
        )
    # fast_env
    domain = np.vstack([np.tile([0.0, 1.0], (k + 1, 1)), np.tile([-1.0, 1.0], (k, 1))])
    return FlowField(dim=2 * k + 1, domain=domain, func=_fast_env_field(d))


def jacobian_on_gamma(kind, x0):
    """Closed-form Jacobian at the manifold point with frequency x0 (marks 0)."""
    d = kind.d
    b = d.array
    k = d.k
    one_minus = 1.0 - x0
    # shared (K+1)x(K+1) block: rational and linearized fields agree on the manifold
    core = np.zeros((k + 1, k + 1))
    core[0, 0] = -(1.0 - b[0]) * one_minus
    core[0, 1:] = b[1:] * one_minus
    for i in range(1, k + 1):
        core[i, i - 1] = 1.0
        core[i, i] = -1.0
    if kind.tag in ("constant", "linearized"):
        return core
    if kind.tag == "fast_env":
        jac = np.zeros((2 * k + 1, 2 * k + 1))
        jac[: k + 1, : k + 1] = core
        jac[0, k + 1 :] = b[1:] * x0 * one_minus
        for i in range(k):
            jac[k + 1 + i, k + 1 + i] = -1.0
            if i >= 1:
                jac[k + 1 + i, k + i] = 1.0
        return jac
    raise UnsupportedK("no closed-form manifold Jacobian for the slow_env flow")


def eigvecs_on_gamma(kind, x0):
    """Closed-form null eigenvectors (u, v) on the manifold, with <u, v> = 1."""
    d = kind.d
    b = d.array
    k = d.k
    tails = tail_sums(d).tail
    big_b = d.mean_time
    den = big_b * (1.0 - x0) + 1.0
    if kind.tag in ("constant", "linearized"):
        u = np.ones(k + 1)
        v = np.concatenate([[1.0], tails * (1.0 - x0)]) / den
        return u, v
    if kind.tag == "fast_env":
        u = np.concatenate([np.ones(k + 1), np.zeros(k)])
        v = np.concatenate(
            [[1.0], tails * (1.0 - x0), tails * x0 * (1.0 - x0)]
        ) / den
        return u, v
    raise UnsupportedK("no closed-form manifold eigenvectors for the slow_env flow")


def left_eigvec_prime(kind, x0):
    """Analytic derivative of v along the manifold chart (w.r.t. x0)."""
    d = kind.d
    k = d.k
    tails = tail_sums(d).tail
    big_b = d.mean_time
    den = big_b * (1.0 - x0) + 1.0
    vp_x = np.concatenate([[big_b], -tails]) / den**2
    if kind.tag in ("constant", "linearized"):
        return vp_x
    if kind.tag == "fast_env":
        vp_marks = tails * ((1.0 - 2.0 * x0) * den + big_b * x0 * (1.0 - x0)) / den**2
        return np.concatenate([vp_x, vp_marks])
    raise UnsupportedK("no closed-form eigenvector derivative for the slow_env flow")


def hessians_on_gamma(kind, x0):
    """Closed-form component Hessians on the manifold (marks 0 for fast_env).

    Only the first component of each flow is nonlinear; the ageing and mark
    components are linear, so their Hessians vanish.
    """
    d = kind.d
    b = d.array
    k = d.k
    x = x0
    one_minus = 1.0 - x

    hess_lin = np.zeros((k + 1, k + 1))
    hess_lin[0, 0] = 2.0 * (1.0 - b[0])
    hess_lin[0, 1:] = -b[1:]
    hess_lin[1:, 0] = -b[1:]
    if kind.tag == "linearized":
        return [hess_lin] + [np.zeros((k + 1, k + 1)) for _ in range(k)]

    hess0 = np.empty((k + 1, k + 1))
    hess0[0, 0] = 2.0 * (1.0 - b[0]) - 2.0 * (1.0 - b[0]) ** 2 * one_minus
    row = 2.0 * b[1:] * (1.0 - b[0]) * one_minus - b[1:]
    hess0[0, 1:] = row
    hess0[1:, 0] = row
    hess0[1:, 1:] = -2.0 * np.outer(b[1:], b[1:]) * one_minus
    if kind.tag == "constant":
        return [hess0] + [np.zeros((k + 1, k + 1)) for _ in range(k)]

    if kind.tag == "fast_env":
        dim = 2 * k + 1
        h = np.zeros((dim, dim))
        h[: k + 1, : k + 1] = hess0
        # mixed x-mark block
        x0_mark = 2.0 * b[1:] * (1.0 - b[0]) * x * one_minus - b[1:] * x
        h[0, k + 1 :] = x0_mark
        h[k + 1 :, 0] = x0_mark
        for i in range(1, k + 1):
            for j in range(k):
                val = -2.0 * b[i] * b[j + 1] * x * one_minus
                if i == j + 1:
                    val += b[i] * one_minus
                h[i, k + 1 + j] = val
                h[k + 1 + j, i] = val
        # mark-mark block
        h[k + 1 :, k + 1 :] = -2.0 * np.outer(b[1:], b[1:]) * x**2 * one_minus
        return [h] + [np.zeros((dim, dim)) for _ in range(dim - 1)]
    raise UnsupportedK("no closed-form manifold Hessians for the slow_env flow")


def manifold_chart(kind):
    """Chart of the attractor manifold by the mutant frequency."""
    k = kind.d.k
    if kind.tag in ("constant", "linearized"):
        return diagonal_chart(k + 1)
    if kind.tag == "fast_env":
        mask = np.concatenate([np.ones(k + 1), np.zeros(k)])
        return ManifoldChart(
            gamma=lambda x0: x0 * mask,
            gamma_prime=lambda x0: mask.copy(),
            gamma_second=lambda x0: np.zeros(2 * k + 1),
        )
    raise UnsupportedK("the slow_env manifold is two-dimensional; no 1-D chart")


def theta_g_closed(d, x0):
    """Closed-form curvature matrix of the linearized flow."""
    tails = tail_sums(d).tail
    big_b = d.mean_time
    den = big_b * (1.0 - x0) + 1.0
    w = np.concatenate([[-big_b], tails])
    return -np.outer(w, w) * (1.0 - x0) / den**3


def delta_matrix(d):
    """The rank-one defect between the full and linearized Hessians.

    Hess F0 = Hess G0 + 2 (1 - x0) Delta on the manifold.  Returns the matrix
    and its spectrum {0 (multiplicity K), -( (1-b0)^2 + sum b_i^2 )}.
    """
    b = d.array
    w = np.concatenate([[1.0 - b[0]], -b[1:]])
    delta = -np.outer(w, w)
    spectrum = np.concatenate([np.zeros(d.k), [-(w @ w)]])
    return delta, spectrum


def drift_bound(big_b, x0):
    """Upper bound B(B(1-x0)+2)/(B(1-x0)+1)^3 for the drift second derivative."""
    den = big_b * (1.0 - x0) + 1.0
    return big_b * (big_b * (1.0 - x0) + 2.0) / den**3


def drift_second_derivative(d, x0):
    """Second derivative of the projection map's first component on the manifold.

    Computed as the closed-form bound minus the (0,0) entry of the curvature
    matrix attributable to the rank-one Hessian defect, the latter obtained
    from the semistable Lyapunov solver.
    """
    kind = FlowKind("constant", d)
    jac = jacobian_on_gamma(kind, x0)
    u, v = eigvecs_on_gamma(kind, x0)
    _, p_s = projections(u, v)
    delta, _ = delta_matrix(d)
    hessians = [2.0 * (1.0 - x0) * delta] + [np.zeros_like(delta)] * d.k
    theta_delta = solve_theta(jac, hessians, v, p_s, u)
    return drift_bound(d.mean_time, x0) - theta_delta[0, 0]


def drift_k1_closed(b0, x0):
    """Closed-form drift second derivative for dormancy depth one."""
    q = 1.0 - b0
    den = q * (1.0 - x0) + 1.0
    return q * (2.0 - q**2 * (1.0 - x0) ** 2) / den**3


def drift_k2_closed(d, x0):
    """Closed-form drift second derivative for dormancy depth two."""
    if d.k != 2:
        raise UnsupportedK("this closed form requires K = 2")
    b0, b1, b2 = d.b
    big_b = d.mean_time
    one_minus = 1.0 - x0
    num = one_minus * (
        big_b
        * (1.0 - b0)
        * (1.0 - (1.0 - b0) * one_minus)
        * (big_b * one_minus + 2.0)
        + b2 * (2.0 * b1 + 3.0 * b2)
    ) + big_b * (4.0 - big_b**2 * one_minus**2)
    den = (big_b * one_minus + 1.0) ** 3 * ((1.0 - b0) * one_minus + 2.0)
    return num / den


def fast_second_derivatives_k1(b0, x0):
    """Mixed second derivatives of the fast-regime projection map at K = 1.

    Returns (d2Phi0/dx0 dups0, d2Phi0/dups0^2) evaluated on the manifold.
    Exact rational functions of q = 1 - b0 and x0.
    """
    q = 1.0 - b0
    x = x0
    den = (q * (1.0 - x) + 2.0) * (q * (1.0 - x) + 1.0) ** 3
    p3 = (
        q**3 * x**4
        - 3.0 * q**3 * x**3
        + 3.0 * q**3 * x**2
        - q**3 * x
        - 2.0 * q**2 * x**3
        + 3.0 * q**2 * x**2
        - q**2
        - q * x**2
        + 3.0 * q * x
        - 2.0 * q
        + 3.0 * x
        - 1.0
    )
    d2_x0_ups0 = -q * p3 / den
    d2_ups0_ups0 = x * (1.0 - x) * _fast_ups_ups_reduced_k1(b0, x0)
    return d2_x0_ups0, d2_ups0_ups0


def _fast_ups_ups_reduced_k1(b0, x0):
    """d2Phi0/dups0^2 divided by its exact factor x0 (1 - x0); boundary-safe."""
    q = 1.0 - b0
    x = x0
    den = (q * (1.0 - x) + 2.0) * (q * (1.0 - x) + 1.0) ** 3
    p4 = (
        2.0 * q**2 * x**3
        - 5.0 * q**2 * x**2
        + 4.0 * q**2 * x
        - q**2
        - 6.0 * q * x**2
        + 8.0 * q * x
        - 2.0 * q
        + 5.0 * x
        - 1.0
    )
    return -(q**2) * p4 / den


def theta_fast_closed_k1(b0, x0):
    """Closed-form environment entries of the fast-regime curvature matrix at K=1.

    Returns (theta_x0_ups0, theta_ups0_ups0); the frequency-frequency block of
    the fast curvature matrix coincides with the constant-environment one.
    """
    q = 1.0 - b0
    x = x0
    den = (q * (1.0 - x) + 2.0) * (q * (1.0 - x) + 1.0) ** 3
    p1 = (
        q**3 * x**3
        - 2.0 * q**3 * x**2
        + q**3 * x
        - 2.0 * q**2 * x**2
        + 2.0 * q**2 * x
        + q * x
        - q
        - 1.0
    )
    theta_x_ups = -q * (1.0 - x) * p1 / den
    theta_ups_ups = (
        q**2
        * x
        * (1.0 - x) ** 2
        * (q**2 * (1.0 - x) + 2.0 * q * (2.0 - x) + 3.0)
        / den
    )
    return theta_x_ups, theta_ups_ups


def h_function(x0, b0):
    """Extra-drift shape of the fast environment (per unit p s^2 x0 (1-x0)).

    Assembled from the constant-environment drift second derivative and the
    fast-regime mixed derivatives; the removable 1/(x0 (1-x0)) singularity is
    cancelled algebraically using the exact x0 (1-x0) factor of the second
    mark derivative.
    """
    q = 1.0 - b0
    d2_x0_ups0, _ = fast_second_derivatives_k1(b0, x0)
    term1 = q**2 * x0 * (1.0 - x0) * drift_k1_closed(b0, x0)
    term2 = _fast_ups_ups_reduced_k1(b0, x0)
    term3 = -2.0 * q * d2_x0_ups0
    term4 = 2.0 * q * ((1.0 - x0) + b0 * x0) / (q * (1.0 - x0) + 1.0)
    return term1 + term2 + term3 + term4


def slow_env_derivatives(d, x0, xi):
    """Closed-form derivatives of the slow-environment projection map.

    The slow-environment manifold is two-dimensional (frequency and population
    size), so these come from the scaling identity rather than the generic 1-D
    engine.  Returns a dict with keys dx0, dxi, dx0dx0, dxidxi, dxidx0.
    """
    big_b = d.mean_time
    den = big_b * (xi - x0) + xi
    return {
        "dx0": xi / den,
        "dxi": 0.0,
        "dx0dx0": drift_second_derivative(d, x0 / xi) / xi,
        "dxidxi": 0.0,
        "dxidx0": -big_b * x0 / den**2,
    }
