"""CLI tests: validation, dispatch, exit codes, byte-level determinism.

Values frozen up front: the unit oscillator has curvature eigenvalue
1.0 everywhere, conjugate times k pi, Morse index 0 on the free
particle; the sphere-constrained quadratic (J = w0^2 + 2 w1^2 + 3 w2^2
on |w| = 1 at w = e0, zeta = 1) has corrected Hessian diag(0, 2, 4)
whose kernel restriction is diag(2, 4): inertia (2, 0, 0), residual 0.
"""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from lagrass import cli


def base_config(**overrides):
    cfg = {
        "system": {"family": "natural", "n": 1,
                   "potential": {"k": [[1.0]]}},
        "initial": [0.8, -0.3],
        "horizon": 4.0,
        "step": 1e-3,
        "seed": 0,
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------- validation


def test_validate_clean_config():
    assert cli.validate(base_config(), "flow") == []


def test_validate_positive_step():
    diags = cli.validate(base_config(step=-1.0), "flow")
    assert any("step must be positive" in d for d in diags)


def test_validate_symmetric_metric():
    cfg = base_config()
    cfg["system"] = {"family": "metric", "n": 2,
                     "metric": {"g": [[1.0, 0.2], [0.0, 1.0]]}}
    cfg["initial"] = [0.1, 0.2, 0.3, 0.4]
    diags = cli.validate(cfg, "flow")
    assert any("symmetric" in d for d in diags)


def test_validate_reduce_rejects_one_degree():
    diags = cli.validate(base_config(), "reduce")
    assert any("quotient" in d for d in diags)


def test_validate_initial_length():
    diags = cli.validate(base_config(initial=[1.0]), "flow")
    assert any("initial" in d for d in diags)


def test_validate_lderiv_needs_problem():
    diags = cli.validate(base_config(), "lderiv")
    assert any("problem" in d for d in diags)


# ----------------------------------------------------------------- dispatch


def test_run_returns_t_first_series():
    result = cli.run(base_config(horizon=1.0), "flow")
    assert result.series.columns[0] == "t"
    assert result.series.rows.shape[1] == len(result.series.columns)
    assert result.scalars["energy_drift"] < 1e-9


def test_curvature_scalars_unit_oscillator(tmp_path):
    cfg = write_config(tmp_path, base_config(horizon=1.0))
    out = tmp_path / "out"
    assert cli.main(["curvature", "--config", str(cfg),
                     "--out", str(out)]) == 0
    payload = read_json(out / "curvature.json")
    assert payload["scalars"]["eig_max_t0"] == pytest.approx(1.0, abs=1e-12)
    assert payload["scalars"]["eig_min_t0"] == pytest.approx(1.0, abs=1e-12)


def test_conjugate_ladder(tmp_path):
    cfg = write_config(tmp_path, base_config(horizon=7.0))
    out = tmp_path / "out"
    assert cli.main(["conjugate", "--config", str(cfg),
                     "--out", str(out)]) == 0
    rows = np.loadtxt(out / "conjugate.csv", delimiter=",", skiprows=1,
                      ndmin=2)
    assert np.allclose(rows[:, 0], [np.pi, 2.0 * np.pi], atol=2e-3)
    assert read_json(out / "conjugate.json")["scalars"]["index"] == 2


def test_morse_free_particle(tmp_path):
    cfg = base_config(horizon=2.0)
    cfg["system"]["potential"] = {"k": [[0.0]]}
    out = tmp_path / "out"
    assert cli.main(["morse", "--config", str(write_config(tmp_path, cfg)),
                     "--out", str(out)]) == 0
    assert read_json(out / "morse.json")["scalars"]["index"] == 0


def test_custom_polynomial_family(tmp_path):
    cfg = base_config(horizon=1.0)
    cfg["system"] = {"family": "custom", "n": 1,
                     "hamiltonian": {"terms": [[0.5, [2, 0]],
                                               [0.5, [0, 2]]]}}
    out = tmp_path / "out"
    assert cli.main(["curvature", "--config", str(write_config(tmp_path, cfg)),
                     "--out", str(out)]) == 0
    payload = read_json(out / "curvature.json")
    assert payload["scalars"]["eig_max_t0"] == pytest.approx(1.0, abs=1e-8)


def test_lderiv_sphere_problem(tmp_path):
    cfg = {
        "problem": {
            "dim_w": 3, "m": 1,
            "objective": {"terms": [[1.0, [2, 0, 0]], [2.0, [0, 2, 0]],
                                    [3.0, [0, 0, 2]]]},
            "constraints": [{"terms": [[1.0, [2, 0, 0]], [1.0, [0, 2, 0]],
                                       [1.0, [0, 0, 2]],
                                       [-1.0, [0, 0, 0]]]}],
        },
        "point": {"w": [1.0, 0.0, 0.0], "zeta": [1.0]},
        "seed": 0,
    }
    out = tmp_path / "out"
    assert cli.main(["lderiv", "--config", str(write_config(tmp_path, cfg)),
                     "--out", str(out)]) == 0
    scalars = read_json(out / "lderiv.json")["scalars"]
    assert scalars["residual"] < 1e-6
    assert (scalars["kernel_pos"], scalars["kernel_neg"],
            scalars["kernel_zero"]) == (2, 0, 0)
    assert scalars["hessian_nondegenerate"] and scalars["transversal_to_fiber"]


def test_seed_override_keeps_value_changes_hash(tmp_path):
    cfg = write_config(tmp_path, base_config())
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["maslov", "--config", str(cfg),
                     "--out", str(out_a)]) == 0
    assert cli.main(["maslov", "--config", str(cfg), "--seed", "5",
                     "--out", str(out_b)]) == 0
    val_a = read_json(out_a / "maslov.json")["scalars"]["value"]
    val_b = read_json(out_b / "maslov.json")["scalars"]["value"]
    assert val_a == val_b  # chart schedule must not move the index
    prov_a = read_json(out_a / "provenance.json")
    prov_b = read_json(out_b / "provenance.json")
    assert prov_a["config_sha256"] != prov_b["config_sha256"]


def test_parallel_flag_is_recorded_noop(tmp_path):
    cfg = write_config(tmp_path, base_config(horizon=1.0))
    out = tmp_path / "out"
    assert cli.main(["flow", "--config", str(cfg), "--out", str(out),
                     "--parallel"]) == 0
    payload = read_json(out / "flow.json")
    assert any("parallel" in d for d in payload["diagnostics"])


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path, base_config(horizon=1.0))
    out = tmp_path / "out"
    proc = subprocess.run(
        [sys.executable, "-m", "lagrass.cli", "flow",
         "--config", str(cfg), "--out", str(out)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (out / "flow.csv").exists()


# --------------------------------------------------------------- exit codes


def test_exit_two_on_invalid_config(tmp_path):
    cfg = write_config(tmp_path, base_config(step=-1.0))
    out = tmp_path / "out"
    assert cli.main(["flow", "--config", str(cfg), "--out", str(out)]) == 2
    record = read_json(out / "error.json")
    assert record["exit_code"] == 2
    assert record["error"]["type"] == "ValidationFailure"
    assert not (out / "flow.csv").exists()


def test_exit_two_on_unreadable_config(tmp_path):
    out = tmp_path / "out"
    rc = cli.main(["flow", "--config", str(tmp_path / "missing.json"),
                   "--out", str(out)])
    assert rc == 2
    assert read_json(out / "error.json")["error"]["type"] == "ConfigUnreadable"


def test_exit_three_on_numerical_failure(tmp_path):
    cfg = write_config(tmp_path, base_config(horizon=float(np.pi)))
    out = tmp_path / "out"
    assert cli.main(["morse", "--config", str(cfg), "--out", str(out)]) == 3
    record = read_json(out / "error.json")
    assert record["exit_code"] == 3
    assert record["error"]["type"] == "DegenerateEndpoint"
    assert not (out / "morse.csv").exists()


def test_success_clears_stale_error_record(tmp_path):
    out = tmp_path / "out"
    bad = write_config(tmp_path, base_config(step=-1.0), "bad.json")
    good = write_config(tmp_path, base_config(horizon=1.0), "good.json")
    assert cli.main(["flow", "--config", str(bad), "--out", str(out)]) == 2
    assert (out / "error.json").exists()
    assert cli.main(["flow", "--config", str(good), "--out", str(out)]) == 0
    assert not (out / "error.json").exists()


# -------------------------------------------------------------- determinism


def _determinism_cases(tmp_path):
    well = base_config(horizon=4.0, step=2e-3)
    rng = np.random.default_rng(7)
    a = rng.standard_normal((2, 2))
    well["system"] = {"family": "natural", "n": 2,
                      "potential": {"k": (a @ a.T + 0.3 * np.eye(2)).tolist()}}
    well["initial"] = rng.standard_normal(4).tolist()
    inverted = base_config(horizon=2.0)
    inverted["system"]["potential"] = {"k": [[-1.0]]}
    lder = {
        "problem": {
            "dim_w": 2, "m": 1,
            "objective": {"terms": [[1.0, [2, 0]], [-1.0, [0, 2]]]},
            "constraints": [{"terms": [[1.0, [1, 1]], [-1.0, [0, 0]]]}],
        },
        "point": {"w": [1.0, 1.0], "zeta": [0.0]},
        "seed": 0,
    }
    return [
        ("flow", base_config(horizon=2.0)),
        ("jacobi", base_config(horizon=1.0)),
        ("curvature", base_config(horizon=1.0)),
        ("conjugate", base_config()),
        ("morse", base_config()),
        ("maslov", base_config()),
        ("compare", base_config()),
        ("hyperbolic", inverted),
        ("reduce", well),
        ("lderiv", lder),
    ]


def test_every_command_byte_identical(tmp_path):
    for command, cfg in _determinism_cases(tmp_path):
        path = write_config(tmp_path, cfg, f"{command}.json")
        out_a = tmp_path / f"{command}-a"
        out_b = tmp_path / f"{command}-b"
        for out in (out_a, out_b):
            rc = cli.main([command, "--config", str(path),
                           "--out", str(out)])
            assert rc == 0, f"{command} failed"
        for name in (f"{command}.csv", f"{command}.json"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), \
                f"{command}/{name} not byte-identical"
        prov_a = read_json(out_a / "provenance.json")
        prov_b = read_json(out_b / "provenance.json")
        prov_a.pop("wall_time_s"), prov_b.pop("wall_time_s")
        assert prov_a == prov_b, f"{command} provenance drifted"
