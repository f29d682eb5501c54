"""One-step integration kernels.

All kernels are pure functions that broadcast over leading batch axes; the
last axis is the state dimension (or absent for scalar models).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from uitlab.errors import InvalidArgument, NumericalBlowup


@dataclass(frozen=True)
class SdeModel:
    """``dX = drift(X) dt + diffusion dW`` with a constant diffusion matrix."""

    dim: int
    drift: Callable
    diffusion: np.ndarray
    label: str = ""

    def __post_init__(self):
        sigma = np.atleast_2d(np.asarray(self.diffusion, dtype=float))
        if sigma.shape != (self.dim, self.dim):
            raise InvalidArgument(f"diffusion must be {self.dim}x{self.dim}")
        object.__setattr__(self, "diffusion", sigma)


@dataclass(frozen=True)
class KineticModel:
    dim: int
    grad_potential: Callable
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidArgument("friction gamma must be positive")


@dataclass(frozen=True)
class OuParams:
    theta: float
    mean: np.ndarray | float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.theta > 0:
            raise InvalidArgument("theta must be positive")
        if self.sigma < 0:
            raise InvalidArgument("sigma must be non-negative")


def _finite_or_raise(arr, what, step):
    if not np.all(np.isfinite(arr)):
        where = "" if step is None else f" at step {step}"
        raise NumericalBlowup(f"non-finite {what}{where}", step=step)
    return arr


def euler_step(model, x, dt, dW, step=None):
    x = np.asarray(x, dtype=float)
    if not dt > 0:
        raise InvalidArgument("dt must be positive")
    b = _finite_or_raise(np.asarray(model.drift(x), dtype=float), "drift", step)
    return x + b * dt + np.asarray(dW, dtype=float) @ model.diffusion.T


def ou_step_coefficients(p, dt):
    """``(decay, noise_scale)`` of the exact OU transition over ``dt``."""
    if dt < 0:
        raise InvalidArgument("dt must be non-negative")
    decay = math.exp(-p.theta * dt)
    scale = p.sigma * math.sqrt(-math.expm1(-2.0 * p.theta * dt) / (2.0 * p.theta))
    return decay, scale


def exact_ou_step(p, x, dt, xi):
    decay, scale = ou_step_coefficients(p, dt)
    return p.mean + decay * (np.asarray(x, dtype=float) - p.mean) + scale * np.asarray(xi)


# --- UBU splitting ---------------------------------------------------------

# Taylor coefficients (z^3 .. z^9) of f(z) = z - 2(1 - e^-z) + (1 - e^-2z)/2
_F_SERIES = (1 / 3, -1 / 4, 7 / 60, -1 / 24, 31 / 2520, -1 / 320, 127 / 181440)
# Taylor coefficients (z^4 .. z^11) of g(z) = 2(1 - e^-2z) f(z) - (1 - e^-z)^4
_G_SERIES = (
    1 / 3, -1 / 3, 17 / 90, -7 / 90, 43 / 1680, -107 / 15120, 769 / 453600, -163 / 453600,
)
_SERIES_CUTOFF = 0.05


def _poly(coeffs, z, lowest):
    return sum(c * z ** (lowest + k) for k, c in enumerate(coeffs))


@dataclass(frozen=True)
class UFlowCoefficients:
    """Exact flow of ``dX = V dt, dV = -gamma V dt + sqrt(2 gamma) dB`` over time ``s``.

    ``x' = x + drift_coef * v + eta_x`` and ``v' = decay * v + eta_v`` where
    ``(eta_x, eta_v)`` is centred Gaussian with the given covariance; ``chol``
    maps two standard normals onto that pair.
    """

    s: float
    gamma: float
    decay: float
    drift_coef: float
    var_x: float
    var_v: float
    cov: float
    chol: tuple

    @classmethod
    def compute(cls, s, gamma):
        if s < 0:
            raise InvalidArgument("step must be non-negative")
        if not gamma > 0:
            raise InvalidArgument("gamma must be positive")
        z = gamma * s
        em1 = -math.expm1(-z)  # 1 - e^-z
        var_v = -math.expm1(-2.0 * z)
        cov = em1 * em1 / gamma
        if z < _SERIES_CUTOFF:
            f = _poly(_F_SERIES, z, 3)
            g = _poly(_G_SERIES, z, 4)
        else:
            f = z - 2.0 * em1 + var_v / 2.0
            g = 2.0 * var_v * f - em1**4
        f, g = max(f, 0.0), max(g, 0.0)
        var_x = 2.0 * f / gamma**2
        if f > 0:
            c11 = math.sqrt(2.0 * f) / gamma
            c21 = em1 * em1 / math.sqrt(2.0 * f)
            c22 = math.sqrt(g / (2.0 * f))
        else:
            c11 = c21 = c22 = 0.0
        return cls(s, gamma, 1.0 - em1, em1 / gamma, var_x, var_v, cov, (c11, c21, c22))

    def noise(self, xi1, xi2):
        c11, c21, c22 = self.chol
        return c11 * xi1, c21 * xi1 + c22 * xi2

    def standardise(self, eta_x, eta_v):
        """Inverse of :meth:`noise`."""
        c11, c21, c22 = self.chol
        xi1 = eta_x / c11
        return xi1, (eta_v - c21 * xi1) / c22


def u_flow(x, v, coef, eta_x, eta_v):
    return x + coef.drift_coef * v + eta_x, coef.decay * v + eta_v


def ubu_step(model, x, v, h, noises, step=None):
    """One UBU step; ``noises`` stacks four standard-normal arrays.

    Rows 0-1 drive the first half-step U-flow and rows 2-3 the second.
    """
    if h < 0:
        raise InvalidArgument("step must be non-negative")
    noises = np.asarray(noises, dtype=float)
    if noises.shape[0] != 4:
        raise InvalidArgument("noises must stack four standard normal arrays")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if h == 0:
        return x.copy(), v.copy()
    coef = UFlowCoefficients.compute(h / 2.0, model.gamma)
    x, v = u_flow(x, v, coef, *coef.noise(noises[0], noises[1]))
    g = _finite_or_raise(np.asarray(model.grad_potential(x), dtype=float), "gradient", step)
    v = v - h * g
    x, v = u_flow(x, v, coef, *coef.noise(noises[2], noises[3]))
    _finite_or_raise(x, "position", step)
    return x, v


# --- Hamiltonian kernels ---------------------------------------------------


def leapfrog(grad_potential, x, v, eps, L, step=None):
    if int(L) != L or L < 1:
        raise InvalidArgument("L must be a positive integer")
    if eps < 0:
        raise InvalidArgument("eps must be non-negative")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float) - 0.5 * eps * np.asarray(grad_potential(x))
    for i in range(int(L)):
        x = x + eps * v
        g = np.asarray(grad_potential(x))
        v = v - (eps if i < L - 1 else 0.5 * eps) * g
    _finite_or_raise(x, "position", step)
    _finite_or_raise(v, "velocity", step)
    return x, v


def hmc_kernel(grad_potential, x, eps, L, stream, momentum=None, step=None):
    """One unadjusted HMC transition: full momentum refresh, leapfrog, no accept/reject.

    ``momentum`` overrides the draw from ``stream`` (used by tests).
    """
    x = np.asarray(x, dtype=float)
    v = stream.standard_normal(x.shape) if momentum is None else np.asarray(momentum, dtype=float)
    return leapfrog(grad_potential, x, v, eps, L, step=step)[0]


def harmonic_flow(x, v, a, T):
    """Exact Hamiltonian flow for ``U(x) = a x^2 / 2`` over time ``T``."""
    w = math.sqrt(a)
    c, s = math.cos(w * T), math.sin(w * T)
    return c * x + (s / w) * v, -w * s * x + c * v
