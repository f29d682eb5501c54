"""Config-driven experiment runs and their CSV/JSON reports.

A run produces a list of labelled curves.  Every number in ``summary.json``
is computed from those curves plus the config, so the summary can be rebuilt
from ``curves.csv`` alone (see :func:`summarize`).
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import itertools
import json
import logging
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from uitlab import __version__
from uitlab import averaging, counterexample, discretization, meanfield
from uitlab.errors import ConfigError, FitFailure, InvalidArgument, UitlabError
from uitlab.metrics import (
    ErrorCurve,
    column_mean_se,
    fit_power_law,
    plateau_stat,
    w2_empirical_1d,
    w2_gaussian,
)
from uitlab.stochastic import make_stream, resolve_threads

log = logging.getLogger(__name__)

EXPERIMENTS = ("averaging", "discretization", "meanfield", "counterexample", "metrics-selftest")
TOP_LEVEL_KEYS = {"experiment", "sweep", "horizon", "n_reps", "seed", "output_dir", "params"}
CSV_HEADER = ("experiment", "sweep_value", "t", "value", "std_error")

PARAM_DEFAULTS = {
    "averaging": {
        "r": 1.0, "x0": 0.0, "y0": 0.0, "floor_reps": 200,
        "contraction_reps": 1000, "contraction_horizon": 5.0,
        "contraction_x0": 0.0, "contraction_x0p": 2.0,
        "weak_f": None, "early": [2.0, 5.0], "late": [10.0, 20.0],
    },
    "discretization": {
        "scheme": "ULA", "potential": "quadratic", "a": 1.0, "b": 0.0, "gamma": 1.0,
        "flow_time": 1.0, "refine": None, "reference": "ubu", "early": [2.0, 5.0],
    },
    "meanfield": {
        "a": 1.0, "kappa": 0.5, "m0": 1.0, "v0": 1.0, "limit": "closure", "h": 1e-3,
        "proxy_size": None, "early": [2.0, 5.0], "late": [10.0, 20.0],
    },
    "counterexample": {"h": 0.01},
    "metrics-selftest": {"instances": 100, "gaussian_samples": 1_000_000},
}

ORDER_BANDS = {"ULA": (0.8, 1.2), "UBU": (1.6, 2.4), "HMC_unadjusted": (0.8, 1.4)}
AVERAGING_BAND = (0.7, 1.3)
POC_BAND = (-1.3, -0.7)
PLATEAU_MAX = 2.0
FLOOR_FACTOR = 5.0
MC_SIGMAS = 3.0


@dataclass
class ExperimentConfig:
    experiment: str
    sweep: list
    horizon: float | None
    n_reps: int | None
    seed: int
    output_dir: str | None
    params: dict

    def as_dict(self):
        return {
            "experiment": self.experiment, "sweep": list(self.sweep), "horizon": self.horizon,
            "n_reps": self.n_reps, "seed": self.seed, "output_dir": self.output_dir,
            "params": dict(self.params),
        }

    @property
    def digest(self):
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class CurveRecord:
    label: str
    sweep_value: float
    curve: ErrorCurve


@dataclass
class ReportBundle:
    config: ExperimentConfig
    curves: list
    summary: dict
    manifest: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(self.summary.get("passed"))


# --- parsing -------------------------------------------------------------------


def _is_inverse_integer(delta):
    if not delta > 0:
        return False
    inv = 1.0 / delta
    return abs(inv - round(inv)) < 1e-9 * max(1.0, inv) and round(inv) >= 1


def validate_config(raw):
    """Return an :class:`ExperimentConfig` or raise :class:`ConfigError` listing every violation."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    problems = [f"unknown key {k!r}" for k in sorted(set(raw) - TOP_LEVEL_KEYS)]
    experiment = raw.get("experiment")
    if experiment not in EXPERIMENTS:
        problems.append(f"experiment must be one of {list(EXPERIMENTS)}, got {experiment!r}")
        raise ConfigError(problems)

    params = copy.deepcopy(PARAM_DEFAULTS[experiment])
    user_params = raw.get("params", {}) or {}
    if not isinstance(user_params, dict):
        problems.append("params must be an object")
        user_params = {}
    for k in sorted(user_params):
        if k not in params:
            problems.append(f"unknown key 'params.{k}' for experiment {experiment!r}")
        else:
            params[k] = user_params[k]

    sweep = raw.get("sweep", [])
    if not isinstance(sweep, list) or not all(isinstance(s, (int, float)) for s in sweep):
        problems.append("sweep must be a list of numbers")
        sweep = []
    horizon = raw.get("horizon")
    n_reps = raw.get("n_reps")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0 or seed >= 2**64:
        problems.append("seed must be an unsigned 64-bit integer")

    if experiment != "metrics-selftest":
        if not sweep:
            problems.append("sweep must be non-empty")
        if experiment != "counterexample":
            if not isinstance(n_reps, int) or n_reps < 100:
                problems.append("n_reps must be an integer >= 100")
            if not isinstance(horizon, (int, float)) or not horizon > 0:
                problems.append("horizon must be a positive number")

    if experiment == "averaging":
        if any(not d > 0 for d in sweep):
            problems.append("averaging sweep values (delta) must be positive")
        if params["r"] > math.sqrt(math.e):
            problems.append(f"r = {params['r']} exceeds e^(1/2); contraction diagnostics need r <= e^(1/2)")
    elif experiment == "discretization":
        scheme = params["scheme"]
        if scheme not in ORDER_BANDS:
            problems.append(f"params.scheme must be one of {sorted(ORDER_BANDS)}")
        if params["potential"] not in ("quadratic", "perturbed_quadratic"):
            problems.append("params.potential must be 'quadratic' or 'perturbed_quadratic'")
        elif params["potential"] == "quadratic" and params["b"] != 0:
            problems.append("params.b must be 0 for the quadratic potential")
        if not params["a"] > 0 or abs(params["b"]) >= params["a"]:
            problems.append("potential needs a > 0 and |b| < a")
        for d in sweep:
            if not _is_inverse_integer(d):
                problems.append(f"delta = {d} violates delta^-1 in N")
        if scheme == "HMC_unadjusted" and params["potential"] != "quadratic":
            problems.append("HMC_unadjusted needs the quadratic potential")
        if scheme == "UBU" and not params["gamma"] > 0:
            problems.append("params.gamma must be positive for UBU")
    elif experiment == "meanfield":
        if not params["kappa"] < params["a"]:
            problems.append(
                f"kappa = {params['kappa']} must be below a = {params['a']} (kappa < a rule)"
            )
        if any(int(n) != n or n < 2 for n in sweep):
            problems.append("meanfield sweep values (N) must be integers >= 2")
        if params["limit"] not in ("closure", "proxy"):
            problems.append("params.limit must be 'closure' or 'proxy'")
    elif experiment == "counterexample":
        for d in sweep:
            try:
                counterexample.AppendixModel(d, params["h"])
            except InvalidArgument as exc:
                problems.append(f"delta = {d}: {exc}")
        if horizon is not None and sweep and all(d > 0 for d in sweep) and horizon < max(1 / d for d in sweep) + 3:
            problems.append("horizon must be at least 1/delta + 3 for every delta")

    if problems:
        raise ConfigError(problems)
    if experiment == "counterexample" and horizon is None:
        horizon = max(round(1 / d / params["h"]) * params["h"] for d in sweep) + 3
    if experiment == "meanfield":
        sweep = [int(n) for n in sweep]
    return ExperimentConfig(
        experiment, list(sweep), None if horizon is None else float(horizon),
        n_reps, seed, raw.get("output_dir"), params,
    )


def parse_config(path):
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return validate_config(raw)


# --- running -------------------------------------------------------------------


def _run_averaging(cfg, threads):
    p = cfg.params
    out = []
    for d in cfg.sweep:
        m = averaging.SlowFastModel(p["r"], d)
        log.info("averaging: delta=%g", d)
        paths = averaging.simulate_paths(m, cfg.horizon, cfg.n_reps, cfg.seed, p["x0"], p["y0"],
                                         threads=threads)
        out.append(CurveRecord("averaging/strong", d, averaging.strong_error_curve(paths)))
        mx, my = averaging.moment_curves(paths)
        out.append(CurveRecord("averaging/moment_x", d, mx))
        out.append(CurveRecord("averaging/moment_y", d, my))
        if p["weak_f"]:
            out.append(CurveRecord("averaging/weak", d, averaging.weak_error_curve(paths, p["weak_f"])))
        floor = averaging.self_discretisation_error(
            m, cfg.horizon, min(cfg.n_reps, p["floor_reps"]), cfg.seed, p["x0"], p["y0"],
            threads=threads,
        )
        out.append(CurveRecord("averaging/floor", d, floor))
    contraction = averaging.contraction_curve(
        averaging.AveragedModel(p["r"]), p["contraction_x0"], p["contraction_x0p"],
        p["contraction_horizon"], p["contraction_reps"], cfg.seed, threads=threads,
    )
    out.append(CurveRecord("averaging/contraction", p["r"], contraction))
    return out


def _potential(p):
    if p["potential"] == "quadratic":
        return discretization.PotentialSpec.quadratic(p["a"])
    return discretization.PotentialSpec.perturbed_quadratic(p["a"], p["b"])


def _run_discretization(cfg, threads):
    p = cfg.params
    pot = _potential(p)
    out = []
    for d in cfg.sweep:
        log.info("discretization %s: delta=%g", p["scheme"], d)
        if p["scheme"] == "ULA":
            curve = discretization.ula_strong_error(
                pot, d, cfg.horizon, cfg.n_reps, cfg.seed, refine=p["refine"] or 64, threads=threads
            )
        elif p["scheme"] == "UBU":
            curve = discretization.ubu_strong_error(
                pot, p["gamma"], d, cfg.horizon, cfg.n_reps, cfg.seed, refine=p["refine"] or 128,
                reference=p["reference"], threads=threads,
            )
        else:
            scheme = discretization.SchemeId("HMC_unadjusted", flow_time=p["flow_time"])
            curve = discretization.strong_error(scheme, pot, d, cfg.horizon, cfg.n_reps, cfg.seed,
                                                threads=threads)
        out.append(CurveRecord(f"discretization/{p['scheme']}", d, curve))
        if "floor_curve" in curve.meta:
            out.append(CurveRecord(f"discretization/{p['scheme']}/floor", d, curve.meta["floor_curve"]))
    return out


def _run_meanfield(cfg, threads):
    p = cfg.params
    out = []
    largest = max(cfg.sweep)
    for n in cfg.sweep:
        log.info("meanfield: N=%d", n)
        model = meanfield.ParticleModel.quadratic_model(p["a"], p["kappa"], n)
        curve, means, variances = meanfield.simulate_poc_error(
            model, cfg.horizon, cfg.n_reps, cfg.seed, limit=p["limit"], m0=p["m0"], v0=p["v0"],
            h=p["h"], proxy_size=p["proxy_size"], threads=threads, return_moments=True,
        )
        out.append(CurveRecord("meanfield/poc", n, curve))
        if n == largest:
            mu, mu_se = column_mean_se(means)
            var, var_se = column_mean_se(variances)
            out.append(CurveRecord("meanfield/particle_mean", n, ErrorCurve(curve.times, mu, mu_se)))
            out.append(CurveRecord("meanfield/particle_var", n, ErrorCurve(curve.times, var, var_se)))
    return out


def _run_counterexample(cfg, threads):
    out = []
    for d in cfg.sweep:
        m = counterexample.AppendixModel(d, cfg.params["h"])
        out.append(CurveRecord("counterexample/error", d,
                               counterexample.simulate_counterexample(m, cfg.horizon, cfg.seed)))
    return out


RUNNERS = {
    "averaging": _run_averaging,
    "discretization": _run_discretization,
    "meanfield": _run_meanfield,
    "counterexample": _run_counterexample,
    "metrics-selftest": lambda cfg, threads: [],
}


# --- summaries -----------------------------------------------------------------


class _Verdicts:
    def __init__(self):
        self.verdicts = {}
        self.skipped = {}

    def add(self, name, ok, value, rule):
        self.verdicts[name] = {"pass": bool(ok), "value": _jsonable(value), "rule": rule}

    def skip(self, name, reason):
        self.skipped[name] = reason


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def _select(curves, label):
    return {rec.sweep_value: rec.curve for rec in curves if rec.label == label}


def _late(cfg_late, horizon):
    lo, hi = cfg_late
    if horizon < hi:
        return (horizon / 2, horizon)
    return (lo, hi)


def plateau_check(curve, early, late):
    """Plateau statistic plus an MC-tolerant pass flag (late max vs 2 x early max, 3 SE slack)."""
    stat = plateau_stat(curve, early, late)
    e, e_se = curve.sup(*early)
    l, l_se = curve.sup(*late)
    ok = (l - MC_SIGMAS * l_se) <= PLATEAU_MAX * (e + MC_SIGMAS * e_se)
    return stat, ok


def _summarize_averaging(cfg, curves, v, out):
    p = cfg.params
    strong = _select(curves, "averaging/strong")
    floors = _select(curves, "averaging/floor")
    early, late = tuple(p["early"]), _late(p["late"], cfg.horizon)
    sups, degenerate = {}, False
    for d, c in strong.items():
        sup = float(c.values.max())
        floor = float(floors[d].values.max())
        sups[d] = sup
        ok_floor = sup > FLOOR_FACTOR * floor
        degenerate |= not ok_floor
        v.add(f"floor[delta={d}]", ok_floor, {"sup_error": sup, "floor": floor},
              f"sup error > {FLOOR_FACTOR} x self-discretisation error")
        if ok_floor:
            stat, ok = plateau_check(c, early, late)
            v.add(f"plateau[delta={d}]", ok, stat, f"max{list(late)} <= {PLATEAU_MAX} x max{list(early)} within {MC_SIGMAS} SE")
        else:
            v.skip(f"plateau[delta={d}]", "degenerate")
    out["sup_error"] = {str(d): s for d, s in sups.items()}
    if len(strong) < 2:
        v.skip("alpha", "single sweep value")
    elif degenerate:
        v.skip("alpha", "degenerate")
    else:
        fit = fit_power_law(sorted(sups.items()))
        out["alpha"] = fit.exponent
        out["alpha_r_squared"] = fit.r_squared
        lo, hi = AVERAGING_BAND
        v.add("alpha", lo <= fit.exponent <= hi, fit.exponent, f"fitted slope in [{lo}, {hi}]")

    for d, mx in _select(curves, "averaging/moment_x").items():
        bx, _ = averaging.moment_bounds(mx.times, p["r"], d, p["x0"] ** 2, p["y0"] ** 2)
        excess = float(np.max(mx.values - bx - MC_SIGMAS * mx.std_errors))
        v.add(f"moment_x[delta={d}]", excess <= 0, float(mx.values.max()),
              "E|X_t|^2 <= e^-t E|X_0|^2 + r^2 + 1 + 3 SE at every t")
    for d, my in _select(curves, "averaging/moment_y").items():
        _, by = averaging.moment_bounds(my.times, p["r"], d, p["x0"] ** 2, p["y0"] ** 2)
        excess = float(np.max(my.values - by - MC_SIGMAS * my.std_errors))
        v.add(f"moment_y[delta={d}]", excess <= 0, float(my.values.max()),
              "E|Y_t|^2 <= e^-t/delta E|Y_0|^2 + r^2 + 1 + 3 SE at every t")

    weak = _select(curves, "averaging/weak")
    if weak:
        out["weak_sup"] = {str(d): float(c.values.max()) for d, c in weak.items()}

    for r, c in _select(curves, "averaging/contraction").items():
        bound = averaging.AveragedModel(r).contraction_rate
        try:
            lam = averaging.contraction_rate_from_curve(c).exponent
        except FitFailure as exc:
            v.add("contraction", False, None, f"fit failed: {exc}")
            continue
        out["lambda_hat"] = lam
        out["lambda_bound"] = bound
        if r == 0:
            v.add("contraction", abs(lam - 1.0) <= 0.05, lam, "lambda_hat in [0.95, 1.05] for r = 0")
        else:
            v.add("contraction", lam >= 0.9 * bound, lam,
                  f"lambda_hat >= 0.9 x (1 - r e^-1/2) = {0.9 * bound:.4f}")


def _summarize_discretization(cfg, curves, v, out):
    p = cfg.params
    scheme = p["scheme"]
    main = _select(curves, f"discretization/{scheme}")
    floors = _select(curves, f"discretization/{scheme}/floor")
    early = tuple(p["early"])
    clean = True
    sup_rms, term_rms = {}, {}
    for d, c in sorted(main.items()):
        sup_rms[d] = math.sqrt(float(c.values.max()))
        term_rms[d] = math.sqrt(float(c.values[-1]))
        if d in floors:
            floor = float(floors[d].values.max())
            ok = float(c.values.max()) > FLOOR_FACTOR * floor
            clean &= ok
            v.add(f"reference_floor[delta={d}]", ok, {"sup_error": float(c.values.max()), "floor": floor},
                  f"sup error > {FLOOR_FACTOR} x reference self-error")
        t_end = float(c.times[-1])
        if t_end > early[1]:
            stat, ok = plateau_check(c, early, (t_end / 2, t_end))
            v.add(f"plateau[delta={d}]", ok, stat,
                  f"max over second half <= {PLATEAU_MAX} x max{list(early)} within {MC_SIGMAS} SE")
    out["sup_rms"] = {str(d): x for d, x in sup_rms.items()}
    out["terminal_rms"] = {str(d): x for d, x in term_rms.items()}
    lo, hi = ORDER_BANDS[scheme]
    if len(main) < 2:
        v.skip("order_sup", "single sweep value")
        v.skip("order_terminal", "single sweep value")
    elif not clean:
        v.add("order_sup", False, None, "reference floor contaminates the sweep")
    else:
        for which, pts in (("sup", sup_rms), ("terminal", term_rms)):
            if min(pts.values()) <= 0:
                v.skip(f"order_{which}", "degenerate")
                continue
            fit = fit_power_law(sorted(pts.items()))
            out[f"order_{which}"] = fit.exponent
            v.add(f"order_{which}", lo <= fit.exponent <= hi, fit.exponent,
                  f"fitted order of {which} RMS error in [{lo}, {hi}]")


def _summarize_meanfield(cfg, curves, v, out):
    p = cfg.params
    poc = _select(curves, "meanfield/poc")
    early, late = tuple(p["early"]), _late(p["late"], cfg.horizon)
    sups = {}
    for n, c in sorted(poc.items()):
        sups[n] = float(c.values.max())
        stat, ok = plateau_check(c, early, late)
        v.add(f"plateau[N={int(n)}]", ok, stat, f"max{list(late)} <= {PLATEAU_MAX} x max{list(early)} within {MC_SIGMAS} SE")
    out["sup_error"] = {str(int(n)): s for n, s in sups.items()}
    if len(sups) >= 2 and min(sups.values()) > 0:
        fit = fit_power_law(sorted(sups.items()))
        out["slope"] = fit.exponent
        lo, hi = POC_BAND
        v.add("slope", lo <= fit.exponent <= hi, fit.exponent, f"fitted slope vs N in [{lo}, {hi}]")
    elif len(sups) < 2:
        v.skip("slope", "single sweep value")
    else:
        v.skip("slope", "degenerate")

    closure = meanfield.GaussianClosure(p["kappa"], p["a"], p["m0"], p["v0"])
    for label, law in (("particle_mean", closure.mean), ("particle_var", closure.variance)):
        for n, c in _select(curves, f"meanfield/{label}").items():
            t_end = float(c.times[-1])
            val, se = float(c.values[-1]), float(c.std_errors[-1])
            target = float(law(t_end))
            v.add(f"closure_{label.split('_')[1]}[N={int(n)}]", abs(val - target) <= MC_SIGMAS * se,
                  {"estimate": val, "closure": target, "se": se},
                  f"terminal ensemble {label.split('_')[1]} within {MC_SIGMAS} SE of the Gaussian closure")


def _summarize_counterexample(cfg, curves, v, out):
    h = cfg.params["h"]
    peaks = {}
    for d, c in sorted(_select(curves, "counterexample/error").items()):
        start, end = 1 / d, 1 / d + 1
        peak = float(c.values.max())
        peaks[d] = peak
        v.add(f"max_error[delta={d}]", 0.95 <= peak <= 1.05, peak, "max error in [0.95, 1.05]")
        dev = float(np.max(np.abs(c.values - counterexample.analytic_error(c.times, d))))
        v.add(f"closed_form_deviation[delta={d}]", dev <= 10 * h, dev,
              "sup |simulated - analytic_error| <= 10 h")
        dev_exact = float(np.max(np.abs(c.values - counterexample.exact_difference(c.times, d))))
        v.add(f"exact_solution_deviation[delta={d}]", dev_exact <= 10 * h, dev_exact,
              "sup |simulated - exact solution of the difference ODE| <= 10 h")
        at_end, _ = c.value_at(end)
        at_after, _ = c.value_at(end + 1)
        v.add(f"value_at_window_end[delta={d}]", abs(at_end - 1) <= 0.02, at_end,
              "error at t = 1/delta + 1 equals 1 +- 0.02")
        v.add(f"value_one_after[delta={d}]", abs(at_after - math.exp(-1)) <= 0.02, at_after,
              "error at t = 1/delta + 2 equals e^-1 +- 0.02")
        stat = plateau_stat(c, (0.0, max(start - 1, start / 2)), (start, end + 1))
        v.add(f"plateau[delta={d}]", stat > 1e3, stat, "plateau statistic > 1e3 (negative control)")
    out["max_error"] = {str(d): p for d, p in peaks.items()}
    if peaks:
        lo, hi = min(peaks.values()), max(peaks.values())
        non_uniform = lo > 0.5 and lo >= 0.9 * hi
        out["non_uniform"] = bool(non_uniform)
        v.add("non_uniform", non_uniform, lo, "peak error does not shrink as delta decreases")


def _selftest(cfg, v, out):
    """Exhaustive small-n oracles for the metrics module."""
    stream = make_stream(cfg.seed, ("metrics-selftest", 0, 0))
    worst = 0.0
    for i in range(cfg.params["instances"]):
        n = 1 + i % 6
        a, b = stream.standard_normal(n), stream.standard_normal(n)
        brute = min(
            math.sqrt(sum((a[k] - b[s]) ** 2 for k, s in enumerate(perm)) / n)
            for perm in itertools.permutations(range(n))
        )
        worst = max(worst, abs(w2_empirical_1d(a, b) - brute))
    v.add("w2_exhaustive_matching", worst <= 1e-12, worst, "matches brute-force matching, n <= 6")
    g = w2_gaussian(0, 1, 0, 4)
    v.add("w2_gaussian_closed_form", abs(g - 1) <= 1e-15, g, "W2(N(0,1), N(0,4)) = 1")
    m = cfg.params["gaussian_samples"]
    a = stream.standard_normal(m)
    b = 2.0 * stream.standard_normal(m)
    emp = w2_empirical_1d(a, b)
    v.add("w2_gaussian_vs_empirical", abs(emp - g) <= 0.01, emp, f"empirical W2 on {m} samples within 0.01")
    for alpha in (1.0, 2.0):
        fit = fit_power_law([(0.1, 0.1**alpha), (0.01, 0.01**alpha)])
        v.add(f"power_law_alpha_{int(alpha)}", abs(fit.exponent - alpha) <= 1e-12, fit.exponent,
              f"recovers exponent {alpha}")


def summarize(cfg, curves, failures=()):
    """Fitted rates, plateau statistics and verdicts, computed from ``curves`` and ``cfg`` only."""
    v = _Verdicts()
    out = {"experiment": cfg.experiment, "seed": cfg.seed}
    if cfg.experiment == "averaging":
        _summarize_averaging(cfg, curves, v, out)
    elif cfg.experiment == "discretization":
        _summarize_discretization(cfg, curves, v, out)
    elif cfg.experiment == "meanfield":
        _summarize_meanfield(cfg, curves, v, out)
    elif cfg.experiment == "counterexample":
        _summarize_counterexample(cfg, curves, v, out)
    else:
        _selftest(cfg, v, out)
    out["verdicts"] = v.verdicts
    out["skipped"] = v.skipped
    out["failures"] = list(failures)
    reasons = [f"verdict {k} failed" for k, x in v.verdicts.items() if not x["pass"]]
    reasons += [f"{k} skipped: {r}" for k, r in v.skipped.items() if r == "degenerate"]
    reasons += list(failures)
    out["reasons"] = reasons
    out["passed"] = not reasons
    return _jsonable(out)


def run_experiment(cfg, threads=None):
    """Execute every sweep item of ``cfg`` and summarise the resulting curves."""
    threads = resolve_threads(threads)
    started = time.perf_counter()
    failures = []
    try:
        curves = RUNNERS[cfg.experiment](cfg, threads)
    except UitlabError as exc:
        log.error("run failed: %s", exc)
        curves = []
        failures.append(f"{type(exc).__name__}: {exc}")
    summary = summarize(cfg, curves, failures)
    manifest = {
        "config": cfg.as_dict(),
        "config_sha256": cfg.digest,
        "seed": cfg.seed,
        "version": f"uitlab {__version__} (config {cfg.digest[:12]})",
        "versions": {"uitlab": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "threads": threads,
        "wall_time_s": time.perf_counter() - started,
    }
    return ReportBundle(cfg, curves, summary, manifest)


# --- reports -------------------------------------------------------------------


def _fmt(x):
    return repr(float(x))


def curves_csv(curves):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for rec in curves:
        c = rec.curve
        for t, val, se in zip(c.times, c.values, c.std_errors):
            writer.writerow((rec.label, _fmt(rec.sweep_value), _fmt(t), _fmt(val), _fmt(se)))
    return buf.getvalue()


def read_curves_csv(path):
    """Rebuild curve records from a ``curves.csv`` file."""
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader)) != CSV_HEADER:
            raise InvalidArgument(f"{path} does not start with the expected header")
        for label, sv, t, val, se in reader:
            rows.setdefault((label, float(sv)), []).append((float(t), float(val), float(se)))
    out = []
    for (label, sv), pts in rows.items():
        arr = np.array(pts)
        out.append(CurveRecord(label, sv, ErrorCurve(arr[:, 0], arr[:, 1], arr[:, 2])))
    return out


def emit_reports(bundle, out_dir):
    """Write ``curves.csv``, ``summary.json`` and ``manifest.json``; return their paths."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "curves": out_dir / "curves.csv",
            "summary": out_dir / "summary.json",
            "manifest": out_dir / "manifest.json",
        }
        with open(paths["curves"], "w", newline="", encoding="utf-8") as fh:
            fh.write(curves_csv(bundle.curves))
        paths["summary"].write_text(json.dumps(bundle.summary, indent=2, sort_keys=True) + "\n")
        paths["manifest"].write_text(json.dumps(_jsonable(bundle.manifest), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write reports to {out_dir}: {exc}") from exc
    return paths

