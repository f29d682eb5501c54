"""Mean-field particle systems and propagation of chaos.

Particles follow

    dX^i = [-grad_confine(X^i) + N^{-1} sum_j grad_interact(X^i - X^j)] dt + sqrt(2) dB^i

and are coupled index by index to i.i.d. copies of the nonlinear process,
which sees the limit law instead of the empirical measure.  The limit law is
either the closed-form Gaussian law of the quadratic model or a large proxy
ensemble.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from uitlab.errors import ConfigError, InvalidArgument
from uitlab.metrics import ErrorCurve, column_mean_se
from uitlab.stochastic import TimeGrid, check_finite, make_stream, output_indices, run_blocks

H_STEP = 1e-3
REPLICA_BLOCK = 100
PROXY_FACTOR = 16
SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ParticleModel:
    """Confinement/interaction gradients and particle count.

    ``quadratic`` holds ``(a, kappa)`` when both potentials are quadratic;
    the interaction sum then collapses to ``kappa (x - mean)``.
    """

    grad_confine: Callable
    grad_interact: Callable
    N: int
    dim: int = 1
    quadratic: tuple | None = None

    def __post_init__(self):
        if self.N < 2:
            raise InvalidArgument("N must be at least 2")
        if self.dim != 1:
            raise InvalidArgument("only one-dimensional particles are supported")
        z = np.linspace(-5.0, 5.0, 41)
        if np.max(np.abs(self.grad_interact(-z) + self.grad_interact(z))) > 1e-12:
            raise InvalidArgument("grad_interact must be odd")

    @classmethod
    def quadratic_model(cls, a, kappa, N):
        if kappa >= a:
            raise InvalidArgument(f"kappa = {kappa} must be below a = {a} for contractivity")
        return cls(lambda x: a * x, lambda z: kappa * z, N, quadratic=(a, kappa))

    def with_n(self, N):
        return ParticleModel(self.grad_confine, self.grad_interact, N, self.dim, self.quadratic)

    def interaction(self, x):
        """``N^{-1} sum_j grad_interact(x_i - x_j)`` along the last axis."""
        if self.quadratic is not None:
            return self.quadratic[1] * (x - x.mean(axis=-1, keepdims=True))
        return interaction_against(self.grad_interact, x, x)


def interaction_against(grad_interact, x, z):
    """Mean of ``grad_interact(x_i - z_j)`` over ``j`` by direct summation."""
    diff = x[..., :, None] - z[..., None, :]
    return grad_interact(diff).mean(axis=-1)


@dataclass
class Ensemble:
    state: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=float)
        if not np.all(np.isfinite(self.state)):
            raise InvalidArgument("ensemble entries must be finite")


def particle_drift(model, ens):
    """Full mean-field drift by the direct O(N^2) sum."""
    x = ens.state.reshape(-1)
    drift = -model.grad_confine(x) + interaction_against(model.grad_interact, x, x)
    check_finite(drift, 0, "particle drift")
    return drift.reshape(ens.state.shape)


@dataclass(frozen=True)
class GaussianClosure:
    kappa: float
    a: float
    m0: float = 0.0
    v0: float = 1.0

    def __post_init__(self):
        if not self.kappa < self.a:
            raise InvalidArgument(f"kappa = {self.kappa} must be below a = {self.a}")
        if self.v0 < 0:
            raise InvalidArgument("initial variance must be non-negative")

    @property
    def stationary_variance(self):
        return 1.0 / (self.a - self.kappa)

    def mean(self, t):
        return self.m0 * np.exp(-self.a * np.asarray(t, dtype=float))

    def variance(self, t):
        v_inf = self.stationary_variance
        return v_inf + (self.v0 - v_inf) * np.exp(-2.0 * (self.a - self.kappa) * np.asarray(t, float))


def gaussian_closure_law(g, t):
    """``(mean, variance)`` of the nonlinear process at time ``t`` (quadratic case)."""
    return g.mean(t), g.variance(t)


def _initial(seed, b, shape, m0, v0):
    z = make_stream(seed, ("meanfield-init", b, 0)).standard_normal(shape)
    return m0 + math.sqrt(v0) * z


def proxy_limit_ensemble(model, M, horizon, seed, m0=0.0, v0=1.0, h=H_STEP, n_max=None):
    """Evolve an ``M``-particle system as a stand-in for the limit law.

    Returns ``(times, snapshots)`` with the proxy state at the output times.
    ``M`` must be at least 16 times the largest particle count it will serve.
    """
    n_max = model.N if n_max is None else n_max
    if M < PROXY_FACTOR * n_max:
        raise ConfigError(f"proxy size M = {M} is below {PROXY_FACTOR} x N = {PROXY_FACTOR * n_max}")
    grid = TimeGrid.covering(horizon, h)
    rec = output_indices(grid.n_steps)
    proxy = _ProxyLaw(model, M, seed, m0, v0, grid.dt)
    snaps = np.empty((len(rec), M))
    j = 0
    if rec[0] == 0:
        snaps[0] = proxy.z
        j = 1
    for k in range(1, grid.n_steps + 1):
        proxy.advance()
        if j < len(rec) and rec[j] == k:
            snaps[j] = proxy.z
            j += 1
    return grid.t0 + rec * grid.dt, snaps


class _ProxyLaw:
    """Proxy ensemble advanced in lockstep with the experiment's time grid."""

    def __init__(self, model, M, seed, m0, v0, h):
        self.model = model.with_n(M)
        self.stream = make_stream(seed, ("meanfield-proxy", M, 0))
        self.z = m0 + math.sqrt(v0) * make_stream(seed, ("meanfield-proxy-init", M, 0)).standard_normal(M)
        self.h = h

    def field(self, x):
        """Mean-field interaction felt at ``x`` under the current proxy law."""
        if self.model.quadratic is not None:
            return self.model.quadratic[1] * (x - self.z.mean())
        return interaction_against(self.model.grad_interact, x, self.z)

    def advance(self):
        z = self.z
        drift = -self.model.grad_confine(z) + self.model.interaction(z)
        self.z = z + self.h * drift + SQRT2 * math.sqrt(self.h) * self.stream.standard_normal(len(z))


def simulate_poc_error(model, horizon, n_reps, seed, limit="closure", m0=1.0, v0=1.0,
                       h=H_STEP, proxy_size=None, threads=None, return_moments=False):
    """``N^{-1} sum_i E|Xbar^i_t - X^{i,N}_t|^2`` under index-wise synchronous coupling.

    Both systems start from the same i.i.d. ``N(m0, v0)`` points and share the
    Brownian increments of each index.  ``limit`` selects the limit-law
    provider: ``"closure"`` (quadratic model only) or ``"proxy"``.

    With ``return_moments`` the per-replica particle mean and unbiased
    sample variance at the output times are returned as well.
    """
    if limit == "closure":
        if model.quadratic is None:
            raise ConfigError("the Gaussian closure needs a quadratic model")
        a, kappa = model.quadratic
        closure = GaussianClosure(kappa, a, m0, v0)
    elif limit == "proxy":
        closure = None
        proxy_size = proxy_size or PROXY_FACTOR * model.N
        if proxy_size < PROXY_FACTOR * model.N:
            raise ConfigError(f"proxy size {proxy_size} is below {PROXY_FACTOR} x N")
    else:
        raise ConfigError(f"no limit-law provider named {limit!r}")

    grid = TimeGrid.covering(horizon, h)
    rec = output_indices(grid.n_steps)
    dt, N = grid.dt, model.N
    sdt = SQRT2 * math.sqrt(dt)

    def block(b, first, size):
        st = make_stream(seed, ("meanfield", N, b, 0))
        x = _initial(seed, b, (size, N), m0, v0)
        xb = x.copy()
        proxy = _ProxyLaw(model, proxy_size, seed, m0, v0, dt) if closure is None else None
        out = np.zeros((3, size, len(rec)))
        j = 0
        if rec[0] == 0:
            out[1, :, 0] = x.mean(axis=1)
            out[2, :, 0] = x.var(axis=1, ddof=1)
            j = 1
        for k in range(1, grid.n_steps + 1):
            t = grid.time(k - 1)
            if closure is not None:
                field = kappa * (xb - closure.mean(t))
            else:
                field = proxy.field(xb)
                proxy.advance()
            dB = st.standard_normal((size, N))
            dB *= sdt
            x = x + dt * (-model.grad_confine(x) + model.interaction(x)) + dB
            xb = xb + dt * (-model.grad_confine(xb) + field) + dB
            if j < len(rec) and rec[j] == k:
                out[0, :, j] = ((xb - x) ** 2).mean(axis=1)
                out[1, :, j] = x.mean(axis=1)
                out[2, :, j] = x.var(axis=1, ddof=1)
                j += 1
            if k % 1000 == 0:
                check_finite(x, k, "particle state", first)
        check_finite(x, grid.n_steps, "particle state", first)
        return out.transpose(1, 0, 2)

    data = run_blocks(block, n_reps, threads, block_size=REPLICA_BLOCK)
    mean, se = column_mean_se(data[:, 0])
    times = grid.t0 + rec * dt
    meta = {"N": N, "replicas": n_reps, "seed": seed, "limit": limit, "h": dt, "flags": []}
    curve = ErrorCurve(times, mean, se, meta)
    if return_moments:
        return curve, data[:, 1], data[:, 2]
    return curve
