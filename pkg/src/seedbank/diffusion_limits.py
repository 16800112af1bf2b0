"""Limiting diffusions, fixation probabilities, and the backward PDE solver.

Provides the limiting SDEs of the three regimes (constant environment, slowly
varying population size, fast environment marks), an Euler-Maruyama integrator
with absorbing boundaries, scale-function fixation probabilities for
autonomous 1-D diffusions, the closed-form fixation bound Psi(B, y), the sign
diagnostic g for stochastic population-size fluctuations, and a Crank-Nicolson
backward Kolmogorov solver for the non-autonomous logistic-environment
fixation probability.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded

from .branching_phase import psi
from .errors import (
    DegenerateDiffusion,
    NoConvergence,
    StepSizeInvalid,
    UnsupportedK,
    ValidationError,
)
from .seedbank_flows import (
    drift_k1_closed,
    drift_k2_closed,
    drift_second_derivative,
    h_function,
)


def drift_factor_fn(d):
    """Second derivative of the projection map as a fast callable of x0.

    Uses the closed K <= 2 forms (which equal the engine output) and falls
    back to the Lyapunov-solver pipeline for deeper seed banks.
    """
    if d.k == 1:
        b0 = d.b[0]
        return lambda x0: drift_k1_closed(b0, x0)
    if d.k == 2:
        return lambda x0: drift_k2_closed(d, x0)
    return lambda x0: drift_second_derivative(d, x0)


@dataclass
class SdeSpec:
    """Drift/diffusion coefficients of a limiting diffusion.

    ``drift(y, t)`` returns a (dim,) vector and ``diffusion(y, t)`` a
    (dim, n_noise) matrix whose columns correspond to independent Brownian
    motions.  ``absorbing`` lists, per coordinate, a tuple of absorbing values
    (or an empty tuple).
    """

    dim: int
    drift: callable
    diffusion: callable
    domain: np.ndarray
    absorbing: tuple


def sde_constant(d):
    """Limiting 1-D diffusion of the constant-environment model."""
    phi2 = drift_factor_fn(d)
    big_b = d.mean_time

    def drift(y, t=0.0):
        x = y[0]
        return np.array([0.5 * x * (1.0 - x) * phi2(x)])

    def diffusion(y, t=0.0):
        x = y[0]
        return np.array([[math.sqrt(max(x * (1.0 - x), 0.0)) / (big_b * (1.0 - x) + 1.0)]])

    return SdeSpec(
        dim=1,
        drift=drift,
        diffusion=diffusion,
        domain=np.array([[0.0, 1.0]]),
        absorbing=((0.0, 1.0),),
    )


def sde_slow_env(d, env, variable="proportion"):
    """Coupled 2-D diffusion of the slowly varying environment.

    State is (x0, xi) for ``variable="count"`` and (rho0, xi) for
    ``variable="proportion"``; the two noise columns are (W_0, W_env).
    """
    if variable not in ("count", "proportion"):
        raise ValidationError("variable must be 'count' or 'proportion'")
    phi2 = drift_factor_fn(d)
    big_b = d.mean_time
    alpha, eta = env.alpha, env.eta

    if variable == "count":

        def drift(y, t=0.0):
            x0, xi = y
            rho = min(max(x0 / xi, 0.0), 1.0)
            den = big_b * (xi - x0) + xi
            e = eta(xi)
            mu_x = (
                0.5 * phi2(rho) * (x0 * (xi - x0) + e**2 * x0**2 / xi) / xi**2
                + x0 * alpha(xi) / den
                - big_b * x0**2 * e**2 / (xi * den**2)
            )
            return np.array([mu_x, alpha(xi)])

        def diffusion(y, t=0.0):
            x0, xi = y
            den = big_b * (xi - x0) + xi
            e = eta(xi)
            g0 = math.sqrt(max(xi * x0 * (xi - x0), 0.0)) / den
            return np.array([[g0, x0 * e / den], [0.0, e]])

        domain = np.array([[0.0, env.xi_max], [env.xi_min, env.xi_max]])
        return SdeSpec(
            dim=2,
            drift=drift,
            diffusion=diffusion,
            domain=domain,
            absorbing=((0.0,), ()),
        )

    def drift(y, t=0.0):
        rho, xi = y
        rho = min(max(rho, 0.0), 1.0)
        den = big_b * (1.0 - rho) + 1.0
        e = eta(xi)
        f2 = phi2(rho)
        mu_rho = (
            0.5 * f2 * rho * (1.0 - rho) / xi
            - big_b * rho * (1.0 - rho) * alpha(xi) / (den * xi)
            + big_b * rho * (1.0 - rho) * e**2 / (den * xi**2)
            + rho**2 * e**2 / (2.0 * xi**2) * (f2 - 2.0 * big_b / den**2)
        )
        return np.array([mu_rho, alpha(xi)])

    def diffusion(y, t=0.0):
        rho, xi = y
        rho = min(max(rho, 0.0), 1.0)
        den = big_b * (1.0 - rho) + 1.0
        e = eta(xi)
        g0 = math.sqrt(max(rho * (1.0 - rho), 0.0)) / (den * math.sqrt(xi))
        g_env = -big_b * rho * (1.0 - rho) * e / (den * xi)
        return np.array([[g0, g_env], [0.0, e]])

    domain = np.array([[0.0, 1.0], [env.xi_min, env.xi_max]])
    return SdeSpec(
        dim=2,
        drift=drift,
        diffusion=diffusion,
        domain=domain,
        absorbing=((0.0, 1.0), ()),
    )


def sde_fast_env(d, fenv):
    """Limiting 1-D diffusion of the fast environment (dormancy depth one).

    Drift is the constant-environment drift plus p s^2 x0 (1 - x0) h(x0, b0);
    the environmental noise averages out, so the diffusion coefficient is that
    of the constant-environment model.
    """
    if d.k != 1:
        raise UnsupportedK("fast-environment SDE requires K = 1 (no closed-form "
                           "mixed derivative is available for deeper seed banks)")
    base = sde_constant(d)
    b0 = d.b[0]
    p, s = fenv.p, fenv.s

    def drift(y, t=0.0):
        x = y[0]
        extra = p * s**2 * x * (1.0 - x) * h_function(x, b0)
        return base.drift(y, t) + np.array([extra])

    return SdeSpec(
        dim=1,
        drift=drift,
        diffusion=base.diffusion,
        domain=base.domain,
        absorbing=base.absorbing,
    )


def integrate_sde(spec, x0, t_end, dt, seed):
    """Euler-Maruyama path with clamping and absorbing-boundary freezing.

    Returns (times, path, absorbed) where ``absorbed`` maps coordinate index
    to (absorbing value, absorption time) for coordinates that froze.
    """
    if not dt > 0 or dt > t_end:
        raise StepSizeInvalid(f"invalid step dt={dt} for horizon {t_end}")
    rng = np.random.default_rng(seed)
    n_steps = int(round(t_end / dt))
    y = np.asarray(x0, dtype=float).copy()
    n_noise = np.asarray(spec.diffusion(y, 0.0)).shape[1]
    lo, hi = spec.domain[:, 0], spec.domain[:, 1]
    path = np.empty((n_steps + 1, spec.dim))
    path[0] = y
    frozen = np.zeros(spec.dim, dtype=bool)
    absorbed = {}
    for n in range(n_steps):
        t = n * dt
        dw = rng.standard_normal(n_noise) * math.sqrt(dt)
        step = spec.drift(y, t) * dt + np.asarray(spec.diffusion(y, t)) @ dw
        y = np.where(frozen, y, np.clip(y + step, lo, hi))
        for i in range(spec.dim):
            if frozen[i]:
                continue
            for val in spec.absorbing[i]:
                if abs(y[i] - val) < 1e-9:
                    y[i] = val
                    frozen[i] = True
                    absorbed[i] = (val, (n + 1) * dt)
                    break
        path[n + 1] = y
    times = np.arange(n_steps + 1) * dt
    return times, path, absorbed


def vectorized_coefficients(spec):
    """Vectorized (drift, diffusion) callables of a 1-D autonomous spec.

    Returns functions mapping an array of states to arrays of coefficients,
    for use with ``sample_absorption``.
    """
    if spec.dim != 1:
        raise ValidationError("vectorized coefficients require a 1-D spec")

    def drift_vec(x):
        return np.array([spec.drift(np.array([xi]))[0] for xi in x])

    def diff_vec(x):
        return np.array([spec.diffusion(np.array([xi]))[0, 0] for xi in x])

    return drift_vec, diff_vec


def sample_absorption(drift_vec, diff_vec, start, dt, seed, replicates, max_time):
    """Vectorized absorption sampling for a 1-D diffusion on [0, 1].

    ``drift_vec`` and ``diff_vec`` map an array of states to arrays of
    coefficients.  Returns (fixed, lost, censored) replicate counts.
    """
    if not dt > 0:
        raise StepSizeInvalid(f"invalid step dt={dt}")
    rng = np.random.default_rng(seed)
    y = np.full(replicates, float(start))
    active = np.ones(replicates, dtype=bool)
    fixed = lost = 0
    n_steps = int(round(max_time / dt))
    sqrt_dt = math.sqrt(dt)
    for _ in range(n_steps):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        x = y[idx]
        x = np.clip(
            x + drift_vec(x) * dt + diff_vec(x) * sqrt_dt * rng.standard_normal(idx.size),
            0.0,
            1.0,
        )
        hit_lost = x < 1e-9
        hit_fixed = x > 1.0 - 1e-9
        lost += int(hit_lost.sum())
        fixed += int(hit_fixed.sum())
        y[idx] = x
        active[idx] = ~(hit_lost | hit_fixed)
    censored = int(active.sum())
    return fixed, lost, censored


def constant_coefficients_vec(d):
    """Vectorized drift/diffusion of the constant-environment diffusion."""
    phi2 = drift_factor_fn(d)
    big_b = d.mean_time

    def drift_vec(x):
        return 0.5 * x * (1.0 - x) * np.array([phi2(z) for z in x])

    def diff_vec(x):
        return np.sqrt(np.maximum(x * (1.0 - x), 0.0)) / (big_b * (1.0 - x) + 1.0)

    return drift_vec, diff_vec


def scale_fixation(drift_fn, diff_fn, start):
    """P(hit 1 before 0) for an autonomous 1-D diffusion on [0, 1].

    Integrates the joint ODE dI/dw = 2 mu / sigma^2, dS/dw = exp(-I) from 0,
    then returns S(start)/S(1).
    """

    def rhs(w, y):
        z = min(max(w, 1e-12), 1.0 - 1e-12)
        sig = diff_fn(z)
        s2 = sig * sig
        if not s2 > 0:
            raise DegenerateDiffusion(f"diffusion vanishes at interior point {z}")
        return [2.0 * drift_fn(z) / s2, math.exp(-y[0])]

    sol = solve_ivp(rhs, (0.0, 1.0), [0.0, 0.0], method="RK45",
                    rtol=1e-11, atol=1e-13, dense_output=True)
    if not sol.success:
        raise NoConvergence(f"scale-function integration failed: {sol.message}")
    s_start = sol.sol(float(start))[1]
    s_one = sol.y[1, -1]
    if not s_one > 0:
        raise DegenerateDiffusion("scale function is degenerate on [0, 1]")
    return float(s_start / s_one)


def scale_closed_form(big_b, v):
    """Closed-form scale function of the bounding diffusion,
    S(v) = (1 - e^{-Bv} + v e^{-Bv})/(B + 1)."""
    v = np.asarray(v, dtype=float)
    out = (1.0 - np.exp(-big_b * v) + v * np.exp(-big_b * v)) / (big_b + 1.0)
    return out.item() if out.ndim == 0 else out


def psi_cap(big_b, y):
    """Fixation-probability bound Psi(B, y) = 1 - e^{-B psi} + psi e^{-B psi}."""
    p = psi(big_b, y)
    e = np.exp(-np.asarray(big_b, dtype=float) * p)
    out = 1.0 - e + p * e
    return out.item() if np.ndim(out) == 0 else out


def g_function(d, rho0, xi):
    """Sign diagnostic of stochastic population-size fluctuations.

    Positive values mean the fluctuations favour the dormancy trait at
    proportion rho0 and population size xi; negative values disfavour it.
    """
    big_b = d.mean_time
    phi2 = drift_factor_fn(d)
    den = big_b * (1.0 - rho0) + 1.0
    return rho0 * (
        big_b * (1.0 - rho0) / (den * xi)
        + 0.5 * rho0 * (phi2(rho0) - 2.0 * big_b / den)
    )


@dataclass(frozen=True)
class PdeGrid:
    """Space/time resolution of the backward Kolmogorov solver."""

    n_space: int = 201
    dt: float = 0.005

    def __post_init__(self):
        if self.n_space < 51:
            raise ValidationError("n_space must be at least 51")
        if not 0 < self.dt <= 0.01:
            raise StepSizeInvalid("dt must lie in (0, 0.01]")


def _pde_operator_rows(mu, half_sig2, h):
    """Tridiagonal rows (sub, diag, super) of the discrete generator at the
    interior nodes, with upwinding of the advection when the cell Peclet
    number exceeds 2."""
    n = mu.size
    sub = np.empty(n)
    diag = np.empty(n)
    sup = np.empty(n)
    for i in range(n):
        a = half_sig2[i] / h**2
        m = mu[i]
        peclet = abs(m) * h / half_sig2[i] if half_sig2[i] > 0 else np.inf
        if peclet > 2.0:
            if m > 0:
                sub[i] = a
                diag[i] = -2.0 * a - m / h
                sup[i] = a + m / h
            else:
                sub[i] = a - m / h
                diag[i] = -2.0 * a + m / h
                sup[i] = a
        else:
            sub[i] = a - m / (2.0 * h)
            diag[i] = -2.0 * a
            sup[i] = a + m / (2.0 * h)
    return sub, diag, sup


def _solve_tridiag(sub, diag, sup, rhs):
    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = sup[:-1]
    ab[1, :] = diag
    ab[2, :-1] = sub[1:]
    return solve_banded((1, 1), ab, rhs)


def logistic_xi(r, xi_inf, t):
    """Closed-form logistic population size with xi(0) = 1."""
    t = np.asarray(t, dtype=float)
    out = xi_inf / (1.0 + (xi_inf - 1.0) * np.exp(-r * xi_inf * t))
    return out.item() if out.ndim == 0 else out


def kolmogorov_fixation(d, logistic, start_rho, grid=None):
    """Fixation probability under a deterministic logistic population size.

    The population size follows dxi/dt = r xi (xi_inf - xi) with xi(0) = 1;
    the mutant proportion follows the deterministic-environment diffusion.
    Solves the backward equation du/dt + L(t) u = 0 with u(t, 0) = 0,
    u(t, 1) = 1, closing at the time the environment has settled
    (|xi - xi_inf| <= 1e-8) with the autonomous stationary profile, and
    returns u(0, start_rho).
    """
    if grid is None:
        grid = PdeGrid()
    r = float(logistic["r"])
    xi_inf = float(logistic["xi_inf"])
    if not (r > 0 and xi_inf > 0):
        raise ValidationError("logistic parameters r and xi_inf must be positive")
    if not 0.0 < start_rho < 1.0:
        raise ValidationError("start_rho must lie in (0, 1)")

    big_b = d.mean_time
    phi2 = drift_factor_fn(d)
    n = grid.n_space
    h = 1.0 / (n - 1)
    rho = np.linspace(0.0, 1.0, n)
    interior = rho[1:-1]
    phi2_grid = np.array([phi2(z) for z in interior])
    den = big_b * (1.0 - interior) + 1.0
    rho_fac = interior * (1.0 - interior)

    def coefficients(xi):
        mu = (
            0.5 * phi2_grid * rho_fac / xi
            - big_b * rho_fac * r * xi * (xi_inf - xi) / (den * xi)
        )
        half_sig2 = 0.5 * rho_fac / (den**2 * xi)
        return mu, half_sig2

    # settle time: smallest multiple of dt with |xi - xi_inf| <= 1e-8
    if abs(xi_inf - 1.0) < 1e-12:
        t_switch = 0.0
    else:
        t_switch = grid.dt
        while abs(logistic_xi(r, xi_inf, t_switch) - xi_inf) > 1e-8:
            t_switch += grid.dt
            if t_switch > 1e4:
                raise NoConvergence("environment never settled within the budget")

    # terminal condition: discrete stationary profile of the autonomous
    # operator at xi_inf (exactly stationary under the scheme by construction)
    mu_inf, half_sig2_inf = coefficients(xi_inf)
    sub, diag, sup = _pde_operator_rows(mu_inf, half_sig2_inf, h)
    rhs = np.zeros(n - 2)
    rhs[-1] = -sup[-1] * 1.0  # Dirichlet u(1) = 1
    u_interior = _solve_tridiag(sub, diag, sup, rhs)
    u = np.concatenate([[0.0], u_interior, [1.0]])

    # march backward from t_switch to 0 with Crank-Nicolson
    n_steps = int(round(t_switch / grid.dt))
    identity = np.ones(n - 2)
    for step in range(n_steps):
        t_new = t_switch - (step + 1) * grid.dt
        t_mid = t_new + 0.5 * grid.dt
        mu, half_sig2 = coefficients(logistic_xi(r, xi_inf, t_mid))
        sub, diag, sup = _pde_operator_rows(mu, half_sig2, h)
        lam = 0.5 * grid.dt
        # explicit half
        v = u[1:-1]
        lv = sub * u[:-2] + diag * v + sup * u[2:]
        rhs = v + lam * lv
        # implicit half: (I - lam L) u_new = rhs, boundaries folded in
        rhs[0] += lam * sub[0] * 0.0
        rhs[-1] += lam * sup[-1] * 1.0
        u_new = _solve_tridiag(-lam * sub, identity - lam * diag, -lam * sup, rhs)
        if not np.all(np.isfinite(u_new)):
            raise NoConvergence("backward PDE produced non-finite values")
        u = np.concatenate([[0.0], u_new, [1.0]])

    return float(np.interp(start_rho, rho, u))
