import hashlib
import json

import numpy as np
import pytest

from uitlab.cli import main
from uitlab.errors import ConfigError
from uitlab.harness import (
    CSV_HEADER,
    CurveRecord,
    ReportBundle,
    emit_reports,
    parse_config,
    read_curves_csv,
    run_experiment,
    summarize,
    validate_config,
)
from uitlab.metrics import ErrorCurve

SMALL_AVERAGING = {
    "experiment": "averaging", "sweep": [0.02, 0.01], "horizon": 2.0, "n_reps": 100, "seed": 5,
    "params": {"early": [0.5, 1.0], "late": [1.0, 2.0], "contraction_reps": 100,
               "floor_reps": 100, "contraction_horizon": 2.0},
}
SMALL_MEANFIELD = {
    "experiment": "meanfield", "sweep": [8, 16], "horizon": 2.0, "n_reps": 100, "seed": 2,
    "params": {"early": [0.5, 1.0], "late": [1.0, 2.0]},
}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def test_minimal_averaging_config_is_accepted(tmp_path):
    cfg = parse_config(write(tmp_path, {"experiment": "averaging", "sweep": [0.02, 0.01],
                                        "horizon": 20, "n_reps": 1000, "params": {"r": 1}}))
    assert cfg.sweep == [0.02, 0.01] and cfg.params["r"] == 1


def test_non_integer_inverse_step_is_rejected():
    with pytest.raises(ConfigError) as err:
        validate_config({"experiment": "discretization", "sweep": [0.3], "horizon": 3, "n_reps": 100})
    assert any("delta^-1 in N" in v for v in err.value.violations)


def test_non_contractive_meanfield_is_rejected():
    with pytest.raises(ConfigError) as err:
        validate_config({"experiment": "meanfield", "sweep": [16], "horizon": 3, "n_reps": 100,
                         "params": {"kappa": 1.5, "a": 1.0}})
    assert any("kappa < a" in v for v in err.value.violations)


def test_all_violations_are_reported_and_unknown_keys_named():
    with pytest.raises(ConfigError) as err:
        validate_config({"experiment": "discretization", "sweep": [0.3, 0.25], "horizon": 3,
                         "n_reps": 10, "colour": "red", "params": {"stepsize": 1}})
    v = err.value.violations
    assert "unknown key 'colour'" in v
    assert any("params.stepsize" in s for s in v)
    assert any("n_reps" in s for s in v)
    assert any("0.3" in s for s in v)
    assert len(v) == 4


def test_averaging_rejects_large_coupling():
    with pytest.raises(ConfigError):
        validate_config(dict(SMALL_AVERAGING, params={"r": 2.0}))


def test_missing_or_malformed_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_counterexample_does_not_need_replicas():
    cfg = validate_config({"experiment": "counterexample", "sweep": [0.1]})
    assert cfg.horizon == pytest.approx(13.0)


def test_counterexample_run_reports_non_uniformity():
    b = run_experiment(validate_config({"experiment": "counterexample", "sweep": [0.2, 0.1, 0.05]}))
    assert b.summary["non_uniform"] is True
    assert b.summary["verdicts"]["non_uniform"]["pass"]
    assert all(b.summary["verdicts"][f"exact_solution_deviation[delta={d}]"]["pass"]
               for d in (0.2, 0.1, 0.05))


def test_decoupled_averaging_is_degenerate():
    cfg = validate_config(dict(SMALL_AVERAGING, params=dict(SMALL_AVERAGING["params"], r=0.0)))
    b = run_experiment(cfg)
    for rec in b.curves:
        if rec.label == "averaging/strong":
            assert np.all(rec.curve.values == 0.0)
    assert b.summary["skipped"]["alpha"] == "degenerate"
    assert not b.passed
    assert any("degenerate" in r for r in b.summary["reasons"])


def test_meanfield_sweep_has_slope_verdict():
    b = run_experiment(validate_config(SMALL_MEANFIELD))
    v = b.summary["verdicts"]["slope"]
    assert "[-1.3, -0.7]" in v["rule"]
    assert v["pass"] == (-1.3 <= b.summary["slope"] <= -0.7)


def test_empty_curve_list_gives_header_only(tmp_path):
    cfg = validate_config({"experiment": "metrics-selftest"})
    paths = emit_reports(ReportBundle(cfg, [], {"verdicts": {}}), tmp_path)
    assert paths["curves"].read_text() == ",".join(CSV_HEADER) + "\n"


def test_row_count_is_sum_of_curve_lengths(tmp_path):
    t = np.linspace(0, 1, 200)
    recs = [CurveRecord("x", d, ErrorCurve(t, t * d, 0 * t)) for d in (0.1, 0.2)]
    cfg = validate_config({"experiment": "metrics-selftest"})
    text = emit_reports(ReportBundle(cfg, recs, {}), tmp_path)["curves"].read_bytes()
    assert text.count(b"\n") == 401
    assert b"\r" not in text
    back = read_curves_csv(tmp_path / "curves.csv")
    assert np.array_equal(back[1].curve.values, recs[1].curve.values)


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_rerun_determinism_across_thread_counts(tmp_path):
    cfg = validate_config(SMALL_MEANFIELD)
    emit_reports(run_experiment(cfg, threads=1), tmp_path / "a")
    emit_reports(run_experiment(cfg, threads=4), tmp_path / "b")
    assert sha(tmp_path / "a" / "curves.csv") == sha(tmp_path / "b" / "curves.csv")


@pytest.mark.parametrize("raw", [
    SMALL_AVERAGING,
    SMALL_MEANFIELD,
    {"experiment": "counterexample", "sweep": [0.2, 0.1]},
    {"experiment": "discretization", "sweep": [0.25, 0.125], "horizon": 4, "n_reps": 100,
     "params": {"scheme": "UBU", "potential": "perturbed_quadratic", "b": 0.3, "refine": 16,
                "early": [1, 2]}},
])
def test_summary_is_recomputable_from_csv(tmp_path, raw):
    cfg = validate_config(raw)
    bundle = run_experiment(cfg)
    paths = emit_reports(bundle, tmp_path)
    rebuilt = summarize(cfg, read_curves_csv(paths["curves"]))
    assert rebuilt == json.loads(paths["summary"].read_text())


def test_manifest_provenance(tmp_path):
    cfg = validate_config({"experiment": "counterexample", "sweep": [0.2], "seed": 9})
    paths = emit_reports(run_experiment(cfg), tmp_path)
    man = json.loads(paths["manifest"].read_text())
    assert man["seed"] == 9 and man["config"]["sweep"] == [0.2]
    assert man["config_sha256"] == cfg.digest
    assert man["wall_time_s"] >= 0 and "numpy" in man["versions"]


def test_unwritable_output_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    cfg = validate_config({"experiment": "metrics-selftest"})
    with pytest.raises(OSError):
        emit_reports(ReportBundle(cfg, [], {}), blocker / "out")


def test_cli_exit_codes_follow_verdicts(tmp_path, capsys):
    assert main(["metrics-selftest", "--out", str(tmp_path / "ms")]) == 0
    summary = json.loads((tmp_path / "ms" / "summary.json").read_text())
    assert all(v["pass"] for v in summary["verdicts"].values())

    cfg = write(tmp_path, SMALL_MEANFIELD)
    code = main(["meanfield", "--config", str(cfg), "--out", str(tmp_path / "mf"), "--threads", "2"])
    summary = json.loads((tmp_path / "mf" / "summary.json").read_text())
    assert code == (0 if all(v["pass"] for v in summary["verdicts"].values()) else 1)


def test_cli_rejects_bad_config(tmp_path, capsys):
    cfg = write(tmp_path, {"experiment": "meanfield", "sweep": [16], "horizon": 1, "n_reps": 100,
                           "params": {"kappa": 2.0}})
    assert main(["meanfield", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
    assert "kappa" in capsys.readouterr().err
    assert main(["averaging", "--config", str(cfg)]) == 2


def test_cli_seed_override(tmp_path):
    cfg = write(tmp_path, {"experiment": "counterexample", "sweep": [0.2], "seed": 1})
    main(["counterexample", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "77"])
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["seed"] == 77
