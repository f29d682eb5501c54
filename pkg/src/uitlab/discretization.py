"""Strong error of Langevin-type discretisations against their exact dynamics.

Each experiment couples the numerical chain to a reference path driven by the
same Brownian motion and reports ``E|X_{l delta} - X_l^delta|^2`` at chain
times ``l delta``:

* ULA against the exact OU transition (quadratic potential) or a fine Euler
  path (perturbed quadratic);
* UBU against a fine-grid UBU path, with every U-flow fed the exact
  stochastic integrals of one shared Brownian path;
* unadjusted HMC against the exact Hamiltonian-flow chain with identical
  momentum refreshments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from uitlab.errors import BudgetExceeded, FitFailure, InvalidArgument
from uitlab.integrators import (
    OuParams,
    UFlowCoefficients,
    exact_ou_step,
    harmonic_flow,
    leapfrog,
    ou_step_coefficients,
    u_flow,
)
from uitlab.metrics import ErrorCurve, column_mean_se, fit_power_law, plateau_stat
from uitlab.stochastic import (
    check_finite,
    coarsen_along,
    make_stream,
    output_indices,
    run_blocks,
)

MAX_STEPS = 10**7
FLOOR_FACTOR = 5.0
EARLY_WINDOW = (2.0, 5.0)
SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class PotentialSpec:
    """``U(x) = a x^2 / 2 + b log cosh x`` (``b = 0`` is the quadratic case)."""

    kind: str
    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("quadratic", "perturbed_quadratic"):
            raise InvalidArgument(f"unknown potential kind {self.kind!r}")
        if not self.a > 0:
            raise InvalidArgument("a must be positive")
        if self.kind == "quadratic" and self.b != 0:
            raise InvalidArgument("quadratic potential takes no b")
        if abs(self.b) >= self.a:
            raise InvalidArgument("|b| < a is required for strong convexity")

    @classmethod
    def quadratic(cls, a=1.0):
        return cls("quadratic", a)

    @classmethod
    def perturbed_quadratic(cls, a=1.0, b=0.3):
        return cls("perturbed_quadratic", a, b)

    def potential(self, x):
        return self.a * x * x / 2 + self.b * np.log(np.cosh(x))

    def grad(self, x):
        if self.b == 0:
            return self.a * x
        return self.a * x + self.b * np.tanh(x)

    @property
    def convexity(self):
        return self.a - abs(self.b)


@dataclass(frozen=True)
class SchemeId:
    """Scheme name plus its extra parameters.

    ``flow_time`` is the HMC integration time ``eps * L``.
    """

    name: str
    gamma: float = 1.0
    flow_time: float = 1.0

    def __post_init__(self):
        if self.name not in ("ULA", "UBU", "HMC_unadjusted"):
            raise InvalidArgument(f"unknown scheme {self.name!r}")
        if self.name == "UBU" and not self.gamma > 0:
            raise InvalidArgument("UBU needs gamma > 0")


def _chain_steps(delta, horizon):
    if not delta > 0:
        raise InvalidArgument("delta must be positive")
    n = int(round(horizon / delta))
    if n < 1 or abs(n * delta - horizon) > 1e-9 * max(1.0, horizon):
        raise InvalidArgument(f"horizon {horizon} is not a multiple of delta {delta}")
    if n > MAX_STEPS:
        raise BudgetExceeded(f"{n} chain steps exceed the budget of {MAX_STEPS}")
    return n


def _finish(samples, steps, delta, meta):
    mean, se = column_mean_se(samples)
    return ErrorCurve(steps * delta, mean, se, meta)


# --- ULA -------------------------------------------------------------------


def ula_stationary_variance(a, delta):
    """Stationary variance of ULA on ``U = a x^2 / 2``."""
    return 2.0 / (a * (2.0 - a * delta))


def ula_strong_error(pot, delta, horizon, n_reps, seed, x0=0.0, noise=True, refine=64,
                     threads=None):
    """Squared ULA error at chain times against the continuous Langevin path.

    ``noise=False`` switches both paths to their deterministic drift flow.
    """
    n_steps = _chain_steps(delta, horizon)
    rec = output_indices(n_steps)
    meta = {"delta": delta, "replicas": n_reps, "seed": seed, "scheme": "ULA", "flags": []}
    tag = ("ULA", pot.kind, delta)
    a = pot.a
    scale = 1.0 if noise else 0.0

    if pot.kind == "quadratic":
        ou = OuParams(theta=a, mean=0.0, sigma=SQRT2)
        decay, sd_i = ou_step_coefficients(OuParams(a, 0.0, 1.0), delta)
        # (dW, int e^{-a(delta-s)} dW) over one step, as a Cholesky pair
        cov = -math.expm1(-a * delta) / a
        rho = cov / (math.sqrt(delta) * sd_i)
        rho_c = math.sqrt(max(0.0, 1.0 - rho * rho))

        def block(b, first, size):
            st = make_stream(seed, tag + (b, 0))
            x = np.full(size, float(x0))
            y = x.copy()
            out = np.zeros((size, len(rec)))
            j = 1 if rec[0] == 0 else 0
            for k in range(1, n_steps + 1):
                z = st.standard_normal((2, size)) * scale
                x = x - delta * pot.grad(x) + SQRT2 * math.sqrt(delta) * z[0]
                y = exact_ou_step(ou, y, delta, rho * z[0] + rho_c * z[1])
                if j < len(rec) and rec[j] == k:
                    out[:, j] = (x - y) ** 2
                    j += 1
            check_finite(x, n_steps, "ULA state", first)
            return out

        data = run_blocks(block, n_reps, threads)
        meta["reference"] = "exact_ou"
        meta["floor"] = 0.0
        return _finish(data, rec, delta, meta)

    # non-quadratic: fine Euler reference at delta/refine, floor from delta/(2 refine)
    fine = 2 * refine
    h = delta / fine

    def block(b, first, size):
        st = make_stream(seed, tag + (b, 0))
        x = np.full(size, float(x0))
        ref = x.copy()
        ref2 = x.copy()
        out = np.zeros((2, size, len(rec)))
        j = 1 if rec[0] == 0 else 0
        for k in range(1, n_steps + 1):
            dw = st.standard_normal((fine, size)) * (math.sqrt(h) * scale)
            for q in range(fine):
                ref2 = ref2 - h * pot.grad(ref2) + SQRT2 * dw[q]
            dw2 = coarsen_along(dw, 2)
            for q in range(refine):
                ref = ref - 2 * h * pot.grad(ref) + SQRT2 * dw2[q]
            x = x - delta * pot.grad(x) + SQRT2 * coarsen_along(dw, fine)[0]
            if j < len(rec) and rec[j] == k:
                out[0, :, j] = (x - ref) ** 2
                out[1, :, j] = (ref - ref2) ** 2
                j += 1
        check_finite(x, n_steps, "ULA state", first)
        return out.transpose(1, 0, 2)

    data = run_blocks(block, n_reps, threads)
    floor = _finish(data[:, 1], rec, delta, {"delta": delta})
    meta["reference"] = f"euler/{refine}"
    meta["floor"] = float(floor.values.max())
    meta["floor_curve"] = floor
    curve = _finish(data[:, 0], rec, delta, meta)
    if not curve.values.max() > FLOOR_FACTOR * meta["floor"]:
        curve.flags.append("reference_floor")
    return curve


# --- UBU -------------------------------------------------------------------


def _exact_pair_factors(tau, gamma):
    """Cholesky factors of ``(dB, int e^{-gamma(tau-u)} dB)`` over one interval."""
    var_j = -math.expm1(-2.0 * gamma * tau) / (2.0 * gamma)
    cov = -math.expm1(-gamma * tau) / gamma
    c1 = math.sqrt(tau)
    c2 = cov / c1
    return c1, c2, math.sqrt(max(0.0, var_j - c2 * c2))


def _merge_pairs(db, jv, tau, gamma):
    """Join adjacent intervals of length ``tau`` (axis 0) into intervals of ``2 tau``."""
    db = db.reshape((-1, 2) + db.shape[1:])
    jv = jv.reshape((-1, 2) + jv.shape[1:])
    return db.sum(axis=1), math.exp(-gamma * tau) * jv[:, 0] + jv[:, 1]


def _u_noise(db, jv, gamma):
    """``(eta_x, eta_v)`` of the U-flow from the exact integrals of one interval."""
    c = math.sqrt(2.0 * gamma)
    return c * (db - jv) / gamma, c * jv


def ubu_strong_error(pot, gamma, delta, horizon, n_reps, seed, refine=128, reference="ubu",
                     grad_override=None, threads=None):
    """Squared UBU error on ``(x, v)`` jointly against a ``refine``-times finer path.

    The Brownian path is drawn as exact pairs ``(dB, int e^{-gamma(t-u)} dB)``
    on intervals of length ``delta / (4 refine)``; merging them yields the
    exact U-flow noise at every coarser level, so the scheme and the
    references see one path.  ``reference`` is ``"ubu"`` (fine UBU) or
    ``"euler"`` (fine Euler).  The floor is estimated by halving the
    reference step.  ``grad_override`` replaces ``pot.grad`` (testing hook).
    """
    if reference not in ("ubu", "euler"):
        raise InvalidArgument(f"unknown reference {reference!r}")
    if refine < 1 or refine & (refine - 1):
        raise InvalidArgument("refine must be a power of two")
    if not gamma > 0:
        raise InvalidArgument("gamma must be positive")
    n_steps = _chain_steps(delta, horizon)
    rec = output_indices(n_steps)
    grad = grad_override or pot.grad
    levels = int(round(math.log2(refine))) + 2  # finest interval = delta / 2^levels
    tau = delta / 2**levels
    c1, c2, c3 = _exact_pair_factors(tau, gamma)
    coarse = UFlowCoefficients.compute(delta / 2, gamma)
    h_ref, h_half = delta / refine, delta / (2 * refine)
    ref_coef = UFlowCoefficients.compute(h_ref / 2, gamma)
    half_coef = UFlowCoefficients.compute(h_half / 2, gamma)
    tag = ("UBU", pot.kind, delta, refine, reference)
    sq = math.sqrt(2.0 * gamma)

    def ubu_path(x, v, coef, h, etas):
        for q in range(0, len(etas[0]), 2):
            x, v = u_flow(x, v, coef, etas[0][q], etas[1][q])
            v = v - h * grad(x)
            x, v = u_flow(x, v, coef, etas[0][q + 1], etas[1][q + 1])
        return x, v

    def euler_path(x, v, h, db):
        for q in range(len(db)):
            x, v = x + h * v, v - h * (grad(x) + gamma * v) + sq * db[q]
        return x, v

    def block(b, first, size):
        st = make_stream(seed, tag + (b, 0))
        zeros = np.zeros(size)
        x, v = zeros.copy(), zeros.copy()
        xr, vr = zeros.copy(), zeros.copy()
        xh, vh = zeros.copy(), zeros.copy()
        out = np.zeros((2, size, len(rec)))
        j = 1 if rec[0] == 0 else 0
        for k in range(1, n_steps + 1):
            z = st.standard_normal((2, 2**levels, size))
            db = c1 * z[0]
            jv = c2 * z[0] + c3 * z[1]
            lvl_tau = tau
            by_level = [(db, jv)]
            for _ in range(levels - 1):
                db, jv = _merge_pairs(db, jv, lvl_tau, gamma)
                lvl_tau *= 2
                by_level.append((db, jv))
            # by_level[i] holds intervals of length tau * 2^i; coarse half-step is the last
            if reference == "ubu":
                xh, vh = ubu_path(xh, vh, half_coef, h_half, _u_noise(*by_level[0], gamma))
                xr, vr = ubu_path(xr, vr, ref_coef, h_ref, _u_noise(*by_level[1], gamma))
            else:
                xh, vh = euler_path(xh, vh, h_half, by_level[1][0])
                xr, vr = euler_path(xr, vr, h_ref, by_level[2][0])
            x, v = ubu_path(x, v, coarse, delta, _u_noise(*by_level[-1], gamma))
            if j < len(rec) and rec[j] == k:
                out[0, :, j] = (x - xr) ** 2 + (v - vr) ** 2
                out[1, :, j] = (xr - xh) ** 2 + (vr - vh) ** 2
                j += 1
            if k % 64 == 0 or k == n_steps:
                check_finite(x, k, "UBU position", first)
                check_finite(xr, k, "reference position", first)
        return out.transpose(1, 0, 2)

    data = run_blocks(block, n_reps, threads)
    floor = _finish(data[:, 1], rec, delta, {"delta": delta})
    meta = {
        "delta": delta, "gamma": gamma, "replicas": n_reps, "seed": seed, "scheme": "UBU",
        "reference": f"{reference}/{refine}", "floor": float(floor.values.max()),
        "floor_curve": floor, "flags": [],
    }
    curve = _finish(data[:, 0], rec, delta, meta)
    if not curve.values.max() > FLOOR_FACTOR * meta["floor"]:
        curve.flags.append("reference_floor")
    return curve


# --- unadjusted HMC ----------------------------------------------------------


def _check_resonance(a, flow_time):
    angle = math.sqrt(a) * flow_time
    k = round(angle / (math.pi / 2))
    if abs(angle - k * math.pi / 2) < 1e-3:
        raise InvalidArgument(
            f"flow angle {angle:.6f} is within 1e-3 of a multiple of pi/2 (degenerate exact chain)"
        )


def simulate_hmc_chains(pot, eps, L, chain_len, n_reps, seed, x0=0.0, threads=None):
    """Positions of the unadjusted and exact-flow chains, ``(n_reps, 2, chain_len + 1)``.

    Both chains use the same momentum draw at every transition.  ``x0`` may
    be ``"stationary"`` to start from ``N(0, 1/a)``.
    """
    if pot.kind != "quadratic":
        raise InvalidArgument("the exact HMC kernel is only available for quadratic potentials")
    if int(L) != L or L < 1:
        raise InvalidArgument("L must be a positive integer")
    if eps < 0:
        raise InvalidArgument("eps must be non-negative")
    T = eps * L
    if eps > 0:
        _check_resonance(pot.a, T)

    def block(b, first, size):
        st = make_stream(seed, ("HMC", eps, int(L), b, 0))
        if x0 == "stationary":
            x = make_stream(seed, ("HMC-init", b, 0)).standard_normal(size) / math.sqrt(pot.a)
        else:
            x = np.full(size, float(x0))
        xe = x.copy()
        out = np.empty((size, 2, chain_len + 1))
        out[:, 0, 0] = x
        out[:, 1, 0] = xe
        for k in range(1, chain_len + 1):
            v = st.standard_normal(size)
            x = leapfrog(pot.grad, x, v, eps, L, step=k)[0]
            xe = harmonic_flow(xe, v, pot.a, T)[0]
            out[:, 0, k] = x
            out[:, 1, k] = xe
        return out

    return run_blocks(block, n_reps, threads)


def hmc_bias_curve(pot, eps, L, chain_len, n_reps, seed, x0=0.0, threads=None):
    """``E|X_l - X_l^eps|^2`` along the chain index ``l``."""
    chains = simulate_hmc_chains(pot, eps, L, chain_len, n_reps, seed, x0, threads)
    mean, se = column_mean_se((chains[:, 0] - chains[:, 1]) ** 2)
    idx = output_indices(chain_len)
    meta = {"delta": eps, "L": int(L), "replicas": n_reps, "seed": seed, "scheme": "HMC",
            "reference": "exact_flow", "floor": 0.0, "flags": []}
    return ErrorCurve(idx.astype(float), mean[idx], se[idx], meta)


# --- sweeps ------------------------------------------------------------------


def strong_error(scheme, pot, delta, horizon, n_reps, seed, threads=None):
    """Dispatch to the strong-error experiment matching ``scheme``.

    For HMC ``delta`` is the leapfrog step and ``horizon`` the chain length.
    """
    if scheme.name == "ULA":
        return ula_strong_error(pot, delta, horizon, n_reps, seed, threads=threads)
    if scheme.name == "UBU":
        return ubu_strong_error(pot, scheme.gamma, delta, horizon, n_reps, seed, threads=threads)
    L = int(round(scheme.flow_time / delta))
    if abs(L * delta - scheme.flow_time) > 1e-9:
        raise InvalidArgument(f"flow time {scheme.flow_time} is not a multiple of eps {delta}")
    return hmc_bias_curve(pot, delta, L, int(horizon), n_reps, seed, threads=threads)


def late_window(curve):
    t_end = float(curve.times[-1])
    return (t_end / 2, t_end)


def uniformity_ratio(curve, early=EARLY_WINDOW):
    return plateau_stat(curve, early, late_window(curve))


def rms_points(curves, which="sup"):
    """``[(delta, RMS error)]`` using the sup or the terminal value of each curve."""
    pts = []
    for c in curves:
        v = c.values.max() if which == "sup" else c.values[-1]
        pts.append((c.meta["delta"], math.sqrt(v)))
    return pts


def order_of_convergence(scheme, pot, deltas, horizon, n_reps, seed, which="sup",
                         runner=None, threads=None):
    """Fit ``RMS error ~ C delta^alpha`` over ``deltas``.

    ``runner(delta)`` replaces the simulation (testing hook); it must return
    an :class:`ErrorCurve` of squared errors with ``meta["delta"]`` set.
    """
    if runner is None:
        def runner(d):
            return strong_error(scheme, pot, d, horizon, n_reps, seed, threads=threads)
    curves = [runner(d) for d in deltas]
    flagged = [c.meta.get("delta") for c in curves if c.meta.get("flags")]
    if flagged:
        raise FitFailure(f"reference floor contaminates runs at delta = {flagged}")
    return fit_power_law(rms_points(curves, which))
