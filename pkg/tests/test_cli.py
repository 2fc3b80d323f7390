"""Command-line interface: exit codes, payloads, determinism."""

import json
import os

import numpy as np
import pytest

import mfgkit.cli as cli


def write_cfg(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(args):
    return cli.main([str(a) for a in args])


SEP_CFG = {
    "model": {"kind": "separable", "f_poly": [0.0, 1.0]},
    "grid": {"dim": 1, "n": 16, "n_t": 8, "horizon": 0.25},
    "initial": {
        "m0": {"base": 1.0, "modes": [{"amp": 0.1, "k": [1], "kind": "cos"}]},
        "uT": {"base": 0.0, "modes": [{"amp": 0.05, "k": [1], "kind": "sin"}]},
    },
    "solver": {"tol": 1e-10},
}

CONG_CFG = {
    "model": {
        "kind": "congestion",
        "Q": [1.0],
        "alpha": 0.5,
        "gamma": 2.0,
        "f_poly": [0.0, 1.0],
        "f_spatial": [{"amp": 0.1, "k": [1], "kind": "cos"}],
    },
    "grid": {"dim": 1, "n": 32},
    "solver": {"tol": 1e-10},
}


def test_report_uniform_state(tmp_path):
    cfg = write_cfg(tmp_path, "r.json", {
        "model": {"kind": "separable", "f_poly": [0.0, 1.0]},
        "grid": {"dim": 1, "n": 16},
        "output_dir": str(tmp_path / "out"),
    })
    assert run(["report", cfg]) == 0
    payload = json.loads((tmp_path / "out" / "report.json").read_text())
    # At m = 1, u = 0 the mH-form value is -f(1) = -1 for f = m.
    assert payload["uniform_state"]["psi2_hat"] == pytest.approx(-1.0, abs=1e-12)
    assert payload["uniform_state"]["hbar_candidate"] == payload["uniform_state"]["psi2_hat"]
    assert payload["monotonicity"]["max_dm_h"] <= 0.0


def test_invalid_gamma_exits_two(tmp_path, capsys):
    bad = dict(CONG_CFG, model=dict(CONG_CFG["model"], gamma=0.5))
    cfg = write_cfg(tmp_path, "bad.json", dict(bad, output_dir=str(tmp_path / "o")))
    assert run(["report", cfg]) == 2
    err = capsys.readouterr().err
    assert "gamma must be >= 1, got 0.5" in err


def test_invalid_formulation_exits_two(tmp_path, capsys):
    bad = dict(CONG_CFG, solver={"formulation": "psm"}, output_dir=str(tmp_path / "o"))
    cfg = write_cfg(tmp_path, "bad.json", bad)
    assert run(["solve-stationary", cfg]) == 2
    err = capsys.readouterr().err
    assert "'solver.formulation' must be one of" in err


def test_unknown_key_exits_two(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "bad.json", dict(SEP_CFG, fpoly=[1.0]))
    assert run(["report", cfg]) == 2
    assert "unknown key 'fpoly'" in capsys.readouterr().err


def test_solve_stationary_routes(tmp_path):
    out = tmp_path / "bb"
    cfg = write_cfg(tmp_path, "c.json", dict(CONG_CFG, output_dir=str(out)))
    assert run(["solve-stationary", cfg]) == 0
    payload = json.loads((out / "result.json").read_text())
    assert payload["route"] == "bb"
    assert payload["residual_hjb_inf"] <= 1e-6
    assert abs(payload["duality_gap"]) <= 1e-6
    for fname in ("m.field", "u.field", "w.field"):
        assert (out / fname).exists()

    pot = dict(CONG_CFG, output_dir=str(tmp_path / "pot"))
    pot["model"] = dict(pot["model"], alpha=1.5)
    cfg = write_cfg(tmp_path, "p.json", pot)
    assert run(["solve-stationary", cfg]) == 0
    payload = json.loads((tmp_path / "pot" / "result.json").read_text())
    assert payload["route"] == "potential"
    assert payload["residual_hjb_inf"] <= 1e-6


def test_solve_mfg_and_compare(tmp_path):
    out = tmp_path / "mfg"
    cfg = write_cfg(tmp_path, "m.json", dict(SEP_CFG, output_dir=str(out)))
    assert run(["solve-mfg", cfg]) == 0
    payload = json.loads((out / "result.json").read_text())
    assert payload["problem"] == "equilibrium"
    assert payload["residual_inf"] <= 1e-10
    assert payload["cost_identity_gap"] <= 1e-10
    assert (out / "m.field").exists()

    out2 = tmp_path / "cmp"
    cfg = write_cfg(tmp_path, "c.json", dict(SEP_CFG, output_dir=str(out2)))
    assert run(["compare", cfg]) == 0
    payload = json.loads((out2 / "result.json").read_text())
    assert payload["ordered"] is True
    assert payload["psi2_equilibrium"] <= payload["psi2_planner"] + 1e-8


def test_crosscheck_passes_and_fails(tmp_path, capsys, monkeypatch):
    out = tmp_path / "ok"
    cfg = write_cfg(tmp_path, "k.json", dict(SEP_CFG, seed=3, output_dir=str(out)))
    assert run(["crosscheck", cfg]) == 0
    payload = json.loads((out / "crosscheck.json").read_text())
    assert payload["all_pass"] is True
    assert {e["name"] for e in payload["checks"]} >= {"duality:cost", "mass:slices"}

    # A broken identity must flip the exit code to 3.
    monkeypatch.setattr(cli, "social_cost", lambda state, model: 123.0)
    out_bad = tmp_path / "bad"
    cfg = write_cfg(tmp_path, "kb.json", dict(SEP_CFG, seed=3, output_dir=str(out_bad)))
    assert run(["crosscheck", cfg]) == 3
    assert "checks failed" in capsys.readouterr().err


def test_duality_crosscheck_command(tmp_path):
    out = tmp_path / "dual"
    cfg = write_cfg(tmp_path, "d.json", dict(SEP_CFG, output_dir=str(out)))
    assert run(["duality-crosscheck", cfg]) == 0
    payload = json.loads((out / "duality.json").read_text())
    assert payload["all_pass"] is True
    names = {e["name"] for e in payload["checks"]}
    assert names == {"saddle:bcost", "saddle:acost", "saddle:sum", "conjugate:pointwise"}
    assert payload["b_cost"] == pytest.approx(-payload["psi1"], abs=1e-9)
    assert payload["a_cost"] == pytest.approx(payload["psi1"], abs=1e-9)


def test_spectrum_payload_and_csv(tmp_path):
    out = tmp_path / "spec"
    cfg = write_cfg(tmp_path, "s.json", {
        "bifurcation": {"fprime1": -6.0 * np.pi**2, "n": 16, "n_t": 16,
                        "spectrum_points": 9, "spectrum_halfwidth": 0.1},
        "output_dir": str(out),
    })
    assert run(["spectrum", cfg]) == 0
    payload = json.loads((out / "spectrum.json").read_text())
    assert payload["sign_change"] is True
    assert payload["max_closed_form_gap"] <= 1e-8
    assert payload["points"] == 9
    lines = (out / "spectrum.csv").read_text().strip().splitlines()
    assert lines[0] == "T,sigma_closed_form,sigma_numeric"
    assert len(lines) == 10


def test_bifurcate_small_run(tmp_path):
    out = tmp_path / "bif"
    cfg = write_cfg(tmp_path, "b.json", {
        "bifurcation": {"fprime1": -6.0 * np.pi**2, "cubic": 1.0, "f1": 1.0,
                        "n": 16, "n_t": 16, "amplitudes": [1e-3]},
        "output_dir": str(out),
    })
    assert run(["bifurcate", cfg]) == 0
    payload = json.loads((out / "branch.json").read_text())
    assert payload["kernel_dim"] == 4
    assert payload["points"][0]["residual_inf"] <= 1e-10
    assert payload["mapped_back"]["residual_transport_inf"] <= 1e-8
    for fname in ("U.field", "M.field", "m.field", "u.field"):
        assert (out / fname).exists()


def test_outputs_are_deterministic(tmp_path):
    paths = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        cfg = write_cfg(tmp_path, f"{tag}.json", dict(SEP_CFG, output_dir=str(out)))
        assert run(["solve-mfg", cfg]) == 0
        paths.append(out)
    for fname in ("result.json", "m.field", "u.field"):
        assert (paths[0] / fname).read_bytes() == (paths[1] / fname).read_bytes()


def test_output_dir_precedence(tmp_path, monkeypatch):
    env_dir = tmp_path / "from-env"
    monkeypatch.setenv("MFGKIT_OUTPUT_DIR", str(env_dir))
    cfg = write_cfg(tmp_path, "e.json", {
        "model": {"kind": "separable", "f_poly": [0.0, 1.0]},
        "grid": {"dim": 1, "n": 16},
    })
    assert run(["report", cfg]) == 0
    assert (env_dir / "report.json").exists()

    flag_dir = tmp_path / "from-flag"
    assert run(["report", cfg, "--output-dir", flag_dir]) == 0
    assert (flag_dir / "report.json").exists()

    # config output_dir beats the environment
    cfg_dir = tmp_path / "from-cfg"
    cfg2 = write_cfg(tmp_path, "e2.json", {
        "model": {"kind": "separable", "f_poly": [0.0, 1.0]},
        "grid": {"dim": 1, "n": 16},
        "output_dir": str(cfg_dir),
    })
    assert run(["report", cfg2]) == 0
    assert (cfg_dir / "report.json").exists()


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0


def test_missing_config_exits_two(tmp_path, capsys):
    assert run(["report", tmp_path / "nope.json"]) == 2
    assert "error:" in capsys.readouterr().err
