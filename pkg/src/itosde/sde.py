"""Linear scalar SDEs, their Gaussian transition kernels, and numerical oracles.

A linear SDE here is dX = [C(t) X + d(t)] dt + g(t) dW with scalar
coefficient functions acting componentwise, so the transition density
p(x(t)|x(0)) is an isotropic Gaussian whose mean coefficient alpha(t) and
variance var(t) obey simple ODEs.  Two families have closed forms:

* variance-exploding (VE): zero drift, g(t) = sigma0 (sigma1/sigma0)^t
  sqrt(2 ln(sigma1/sigma0)); alpha = 1, var(t) = sigma0^2((sigma1/sigma0)^{2t} - 1).
* variance-preserving (VP): C(t) = -beta(t)/2, g(t) = sqrt(beta(t)) with a
  linear schedule beta(t) = beta0 + t (beta1 - beta0);
  alpha(t) = exp(-beta0 t / 2 - t^2 (beta1 - beta0)/4),
  var(t) = 1 - exp(-beta0 t - t^2 (beta1 - beta0)/2).

Everything the closed forms claim is checkable against two independent
oracles that live here as well: an RK4 integrator for the moment ODEs and a
1-D finite-difference Fokker-Planck solver for the full density.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .rng import RandomSource

# Scores are only evaluated at t >= T_MIN: var(t) vanishes at t = 0 and the
# score -(x_t - alpha x_0)/var diverges.
T_MIN = 1e-5


class SdeKind(enum.Enum):
    GENERIC_SCALAR = "generic_scalar"
    VARIANCE_EXPLODING = "ve"
    VARIANCE_PRESERVING = "vp"


@dataclass(frozen=True)
class LinearSde:
    """Scalar-coefficient linear SDE dX = [C(t)X + d(t)]dt + g(t)dW on [0, T].

    Coefficient callables must be numpy-vectorized in t.  `params` carries the
    family hyperparameters (sigma0/sigma1 or beta0/beta1) for closed forms and
    serialization.
    """

    kind: SdeKind
    c_fn: Callable[[np.ndarray], np.ndarray]
    d_fn: Callable[[np.ndarray], np.ndarray]
    g_fn: Callable[[np.ndarray], np.ndarray]
    horizon_T: float
    params: dict = field(default_factory=dict)

    def drift(self, x: np.ndarray, t) -> np.ndarray:
        """f(x, t) = C(t) x + d(t), broadcasting scalar coefficients."""
        return self.c_fn(t) * x + self.d_fn(t)


@dataclass(frozen=True)
class TransitionKernel:
    """Gaussian kernel p(x(t)|x(0)) = N(alpha(t) x(0) + offset(t), var(t) I).

    offset is identically zero for VE/VP (their d(t) is zero); it is kept so
    generic SDEs with a drift offset still get a correct kernel.
    """

    alpha: Callable[[np.ndarray], np.ndarray]
    var: Callable[[np.ndarray], np.ndarray]
    offset: Callable[[np.ndarray], np.ndarray]

    def std(self, t) -> np.ndarray:
        return np.sqrt(self.var(t))


@dataclass(frozen=True)
class Trajectory:
    """A simulated path: states x(t_i) plus the standard-normal draws used."""

    times: np.ndarray       # (N+1,), strictly monotone
    states: np.ndarray      # (N+1, *state_shape)
    noise_draws: np.ndarray  # (N, *state_shape)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError(
                f"times ({len(self.times)}) and states ({len(self.states)}) lengths differ"
            )
        dt = np.diff(self.times)
        if not (np.all(dt > 0) or np.all(dt < 0)):
            raise ValueError("times must be strictly monotone")


# ---------------------------------------------------------------------------
# Constructors


def make_ve_sde(sigma0: float, sigma1: float, T: float = 1.0) -> LinearSde:
    """Variance-exploding SDE with geometric noise scale sigma0 -> sigma1."""
    if sigma0 <= 0:
        raise ValueError(f"sigma0 must be > 0, got {sigma0}")
    if sigma1 <= sigma0:
        raise ValueError(f"sigma1 must exceed sigma0, got sigma1={sigma1} <= sigma0={sigma0}")
    if T <= 0:
        raise ValueError(f"T must be > 0, got {T}")
    ratio = sigma1 / sigma0
    root_2log = math.sqrt(2.0 * math.log(ratio))

    def g_fn(t):
        return sigma0 * ratio ** np.asarray(t, dtype=np.float64) * root_2log

    zero = lambda t: np.zeros_like(np.asarray(t, dtype=np.float64))
    return LinearSde(
        kind=SdeKind.VARIANCE_EXPLODING,
        c_fn=zero,
        d_fn=zero,
        g_fn=g_fn,
        horizon_T=float(T),
        params={"sigma0": float(sigma0), "sigma1": float(sigma1)},
    )


def make_vp_sde(beta0: float, beta1: float, T: float = 1.0) -> LinearSde:
    """Variance-preserving SDE with linear schedule beta(t) = beta0 + t(beta1-beta0)."""
    if beta0 <= 0:
        raise ValueError(f"beta0 must be > 0, got {beta0}")
    if beta1 <= beta0:
        raise ValueError(f"beta1 must exceed beta0, got beta1={beta1} <= beta0={beta0}")
    if T <= 0:
        raise ValueError(f"T must be > 0, got {T}")

    def beta(t):
        return beta0 + np.asarray(t, dtype=np.float64) * (beta1 - beta0)

    return LinearSde(
        kind=SdeKind.VARIANCE_PRESERVING,
        c_fn=lambda t: -0.5 * beta(t),
        d_fn=lambda t: np.zeros_like(np.asarray(t, dtype=np.float64)),
        g_fn=lambda t: np.sqrt(beta(t)),
        horizon_T=float(T),
        params={"beta0": float(beta0), "beta1": float(beta1)},
    )


def make_generic_sde(c_fn, d_fn, g_fn, T: float) -> LinearSde:
    """Generic scalar linear SDE; its kernel is computed numerically."""
    if T <= 0:
        raise ValueError(f"T must be > 0, got {T}")
    return LinearSde(
        kind=SdeKind.GENERIC_SCALAR,
        c_fn=lambda t: np.asarray(c_fn(np.asarray(t, dtype=np.float64)), dtype=np.float64),
        d_fn=lambda t: np.asarray(d_fn(np.asarray(t, dtype=np.float64)), dtype=np.float64),
        g_fn=lambda t: np.asarray(g_fn(np.asarray(t, dtype=np.float64)), dtype=np.float64),
        horizon_T=float(T),
    )


# ---------------------------------------------------------------------------
# Transition kernels


def transition_kernel(sde: LinearSde, oracle_steps: int = 10_000) -> TransitionKernel:
    """Closed-form kernel for VE/VP; RK4-integrated kernel for generic SDEs."""
    zeros = lambda t: np.zeros_like(np.asarray(t, dtype=np.float64))

    if sde.kind is SdeKind.VARIANCE_EXPLODING:
        s0 = sde.params["sigma0"]
        ratio = sde.params["sigma1"] / s0

        def alpha(t):
            return np.ones_like(np.asarray(t, dtype=np.float64))

        def var(t):
            t = np.asarray(t, dtype=np.float64)
            return s0 * s0 * (ratio ** (2.0 * t) - 1.0)

        return TransitionKernel(alpha=alpha, var=var, offset=zeros)

    if sde.kind is SdeKind.VARIANCE_PRESERVING:
        b0 = sde.params["beta0"]
        db = sde.params["beta1"] - b0

        def int_beta(t):
            t = np.asarray(t, dtype=np.float64)
            return b0 * t + 0.5 * db * t * t

        return TransitionKernel(
            alpha=lambda t: np.exp(-0.5 * int_beta(t)),
            var=lambda t: 1.0 - np.exp(-int_beta(t)),
            offset=zeros,
        )

    def num_alpha(t):
        a, _, _ = _integrate_moments(sde, t, oracle_steps)
        return a

    def num_var(t):
        _, _, v = _integrate_moments(sde, t, oracle_steps)
        return v

    def num_offset(t):
        _, b, _ = _integrate_moments(sde, t, oracle_steps)
        return b

    return TransitionKernel(alpha=num_alpha, var=num_var, offset=num_offset)


def _integrate_moments(sde: LinearSde, t, steps: int):
    """RK4 integration of the kernel-moment ODEs from 0 to each requested t.

    Integrates da/dt = C a (a(0)=1, the x(0) coefficient of the mean),
    db/dt = C b + d (b(0)=0, the mean offset), and dV/dt = 2 C V + g^2
    (V(0)=0), vectorized over an array of endpoints, each with its own step
    size t_i/steps.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    scalar = np.isscalar(t) or np.ndim(t) == 0
    dt = t_arr / steps
    a = np.ones_like(t_arr)
    b = np.zeros_like(t_arr)
    v = np.zeros_like(t_arr)

    def deriv(tau, a, b, v):
        c = sde.c_fn(tau)
        return c * a, c * b + sde.d_fn(tau), 2.0 * c * v + sde.g_fn(tau) ** 2

    for j in range(steps):
        tau = j * dt
        k1 = deriv(tau, a, b, v)
        k2 = deriv(tau + 0.5 * dt, a + 0.5 * dt * k1[0], b + 0.5 * dt * k1[1], v + 0.5 * dt * k1[2])
        k3 = deriv(tau + 0.5 * dt, a + 0.5 * dt * k2[0], b + 0.5 * dt * k2[1], v + 0.5 * dt * k2[2])
        k4 = deriv(tau + dt, a + dt * k3[0], b + dt * k3[1], v + dt * k3[2])
        a = a + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        b = b + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        v = v + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])

    if scalar:
        return float(a[0]), float(b[0]), float(v[0])
    return a, b, v


def ode_moments_oracle(sde: LinearSde, t, steps: int = 10_000):
    """Independent RK4 oracle for (alpha(t), var(t)); `t` may be an array.

    This is the reference the closed-form kernels are validated against, so
    it deliberately shares no code with them.
    """
    if steps < 100:
        raise ValueError(f"steps must be >= 100, got {steps}")
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(t_arr < 0) or np.any(t_arr > sde.horizon_T):
        raise ValueError(f"t must lie in [0, {sde.horizon_T}], got {t}")
    a, _, v = _integrate_moments(sde, t, steps)
    return a, v


# ---------------------------------------------------------------------------
# Scores, sampling, simulation


def exact_score(sde: LinearSde, x_t: np.ndarray, x_0: np.ndarray, t: float) -> np.ndarray:
    """Score of the Gaussian kernel: -(x_t - alpha(t) x_0 - offset(t)) / var(t)."""
    x_t = np.asarray(x_t, dtype=np.float64)
    x_0 = np.asarray(x_0, dtype=np.float64)
    if x_t.shape != x_0.shape:
        raise ValueError(f"x_t shape {x_t.shape} != x_0 shape {x_0.shape}")
    if t < T_MIN:
        raise ValueError(f"t={t} below T_MIN={T_MIN}: kernel variance underflows")
    kern = transition_kernel(sde)
    return -(x_t - kern.alpha(t) * x_0 - kern.offset(t)) / kern.var(t)


def sample_transition(kernel: TransitionKernel, x_0: np.ndarray, t: float, rng: RandomSource):
    """Draw x(t) ~ p(x(t)|x(0)); returns (x_t, xi) with the noise that made it.

    xi is returned because the denoising-score-matching target is
    -xi/sqrt(var(t)): exact_score(x_t, x_0, t) equals that by construction.
    """
    x_0 = np.asarray(x_0, dtype=np.float64)
    xi = np.asarray(rng.normal(x_0.shape), dtype=np.float64).reshape(x_0.shape)
    x_t = kernel.alpha(t) * x_0 + kernel.offset(t) + np.sqrt(kernel.var(t)) * xi
    return x_t, xi


def sample_transition_batch(kernel: TransitionKernel, x_0: np.ndarray, t: np.ndarray, rng: RandomSource):
    """Batched sample_transition: x_0 is (B, ...), t is (B,), one time per item."""
    x_0 = np.asarray(x_0, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (x_0.shape[0],):
        raise ValueError(f"t shape {t.shape} must be ({x_0.shape[0]},)")
    bshape = (-1,) + (1,) * (x_0.ndim - 1)
    alpha = kernel.alpha(t).reshape(bshape)
    off = kernel.offset(t).reshape(bshape)
    std = np.sqrt(kernel.var(t)).reshape(bshape)
    xi = rng.normal(x_0.shape)
    return alpha * x_0 + off + std * xi, xi


def forward_simulate(sde: LinearSde, x_0: np.ndarray, N: int, rng: RandomSource) -> Trajectory:
    """Euler-Maruyama on [0, T]: x_{i+1} = x_i + (C x_i + d) dt + g(t_i) sqrt(dt) xi_i."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    x = np.asarray(x_0, dtype=np.float64).copy()
    dt = sde.horizon_T / N
    sqrt_dt = math.sqrt(dt)
    times = np.linspace(0.0, sde.horizon_T, N + 1)
    states = np.empty((N + 1,) + x.shape)
    noise = np.empty((N,) + x.shape)
    states[0] = x
    for i in range(N):
        t_i = times[i]
        xi = rng.normal(x.shape)
        noise[i] = xi
        x = x + sde.drift(x, t_i) * dt + sde.g_fn(t_i) * sqrt_dt * xi
        states[i + 1] = x
    return Trajectory(times=times, states=states, noise_draws=noise)


def simulate_moments(
    sde: LinearSde,
    x0_value: float,
    n_paths: int,
    N: int,
    ts: list[float],
    rng: RandomSource,
    chunk: int = 50_000,
):
    """Monte-Carlo mean/variance of Euler-Maruyama paths at requested times.

    Paths are generated in fixed-size chunks, each from its own child
    RandomSource, so the result does not depend on how chunks are scheduled
    across workers.  Requested times must land on the step grid.

    Returns {t: (mean, variance)} over n_paths 1-D paths started at x0_value.
    """
    dt = sde.horizon_T / N
    idx = {}
    for t in ts:
        k = round(t / dt)
        if not math.isclose(k * dt, t, rel_tol=0.0, abs_tol=1e-12):
            raise ValueError(f"t={t} is not on the step grid with dt={dt}")
        idx[t] = k
    sums = {t: 0.0 for t in ts}
    sqs = {t: 0.0 for t in ts}
    done = 0
    shard = 0
    times = np.linspace(0.0, sde.horizon_T, N + 1)
    sqrt_dt = math.sqrt(dt)
    g_at = sde.g_fn(times[:-1])
    c_at = sde.c_fn(times[:-1])
    d_at = sde.d_fn(times[:-1])
    targets = sorted(set(idx.values()))
    while done < n_paths:
        m = min(chunk, n_paths - done)
        gen = rng.child(shard)
        x = np.full(m, float(x0_value))
        for i in range(N):
            x = x + (c_at[i] * x + d_at[i]) * dt + g_at[i] * sqrt_dt * gen.normal(m)
            step = i + 1
            if step in targets:
                for t, k in idx.items():
                    if k == step:
                        sums[t] += float(x.sum())
                        sqs[t] += float((x * x).sum())
        for t, k in idx.items():
            if k == 0:
                sums[t] += m * float(x0_value)
                sqs[t] += m * float(x0_value) ** 2
        done += m
        shard += 1
    out = {}
    for t in ts:
        mean = sums[t] / n_paths
        var = sqs[t] / n_paths - mean * mean
        out[t] = (mean, var)
    return out


def log_prior(sde: LinearSde, x_T: np.ndarray) -> float:
    """Log density of the terminal prior: N(0, sigma1^2 I) for VE, N(0, I) for VP.

    Generic SDEs fall back to N(0, var(T) I), the kernel variance from a point
    mass at the origin.
    """
    x = np.asarray(x_T, dtype=np.float64)
    d = x.size
    if sde.kind is SdeKind.VARIANCE_EXPLODING:
        s2 = sde.params["sigma1"] ** 2
    elif sde.kind is SdeKind.VARIANCE_PRESERVING:
        s2 = 1.0
    else:
        s2 = float(transition_kernel(sde).var(sde.horizon_T))
    return -0.5 * d * math.log(2.0 * math.pi * s2) - float(np.sum(x * x)) / (2.0 * s2)


def prior_scale(sde: LinearSde) -> float:
    """Variance s of the sampling prior N(0, s I) for this family."""
    if sde.kind is SdeKind.VARIANCE_EXPLODING:
        return sde.params["sigma1"] ** 2
    if sde.kind is SdeKind.VARIANCE_PRESERVING:
        return 1.0
    return float(transition_kernel(sde).var(sde.horizon_T))


# ---------------------------------------------------------------------------
# Fokker-Planck density oracle


def fpk_evolve_1d(
    sde: LinearSde,
    grid: np.ndarray,
    p0: np.ndarray,
    t_end: float,
    dt: float,
) -> np.ndarray:
    """Explicit finite-volume evolution of the 1-D Fokker-Planck equation.

    dp/dt = -d/dx[(C x + d) p] + 1/2 d^2/dx^2 [g^2 p], marched in flux form
    with zero-flux boundaries so total mass is conserved to rounding.  Serves
    as a density oracle that is independent of the Gaussian closed forms.
    """
    grid = np.asarray(grid, dtype=np.float64)
    p = np.asarray(p0, dtype=np.float64).copy()
    if grid.shape != p.shape or grid.ndim != 1:
        raise ValueError(f"grid shape {grid.shape} and p0 shape {p.shape} must be equal 1-D")
    dx = np.diff(grid)
    if not np.allclose(dx, dx[0], rtol=1e-9, atol=0.0):
        raise ValueError("grid must be uniform")
    dx = float(dx[0])
    if np.any(p < 0):
        raise ValueError("p0 must be nonnegative")
    mass = float(p.sum() * dx)
    if abs(mass - 1.0) > 1e-6:
        raise ValueError(f"p0 must integrate to 1 (cell-width weighted), got {mass}")

    g_max = float(np.max(sde.g_fn(np.linspace(0.0, t_end, 2001))))
    dt_bound = dx * dx / (g_max * g_max)
    if dt > dt_bound:
        raise ValueError(
            f"dt={dt} violates the diffusion stability bound dt <= dx^2/g_max^2 = {dt_bound:.3e}"
        )

    n_steps = max(1, math.ceil(t_end / dt))
    dt_eff = t_end / n_steps
    x_face = 0.5 * (grid[:-1] + grid[1:])
    for j in range(n_steps):
        t_mid = (j + 0.5) * dt_eff
        c = float(sde.c_fn(t_mid))
        d_off = float(sde.d_fn(t_mid))
        diff = 0.5 * float(sde.g_fn(t_mid)) ** 2
        p_face = 0.5 * (p[:-1] + p[1:])
        flux = (c * x_face + d_off) * p_face - diff * (p[1:] - p[:-1]) / dx
        dp = np.empty_like(p)
        dp[0] = -flux[0] / dx
        dp[-1] = flux[-1] / dx
        dp[1:-1] = -(flux[1:] - flux[:-1]) / dx
        p = p + dt_eff * dp
    return p
