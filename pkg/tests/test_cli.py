import json

import numpy as np
import pytest

from ibonset import (
    ConditionalMatrix,
    DiscreteJoint,
    save_conditional_csv,
    save_joint_csv,
)
from ibonset.cli import main

TWO_CLUSTER_BETA = 1.0 / 0.36


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def test_estimate_preset_all_methods(tmp_path, capsys):
    out = tmp_path / "report.json"
    code = main(["estimate", "--preset", "noise-0.2", "--method", "all", "--out", str(out)])
    assert code == 0
    report = _read_json(out)
    by_method = {e["method"]: e["value"] for e in report["estimates"]}
    for name in ("subset_search", "class_conditional", "functional",
                 "max_correlation_inverse"):
        assert by_method[name] == pytest.approx(TWO_CLUSTER_BETA, abs=1e-5)
    assert "info_density" in by_method
    printed = capsys.readouterr().out
    assert "subset_search" in printed and "2.777" in printed


def test_estimate_identity_cond(tmp_path):
    path = tmp_path / "identity.csv"
    save_conditional_csv(ConditionalMatrix(np.eye(2)), path)
    out = tmp_path / "report.json"
    assert main(["estimate", "--cond", str(path), "--method", "subset", "--out", str(out)]) == 0
    report = _read_json(out)
    assert report["estimates"][0]["value"] == pytest.approx(1.0, abs=1e-6)


def test_estimate_independent_cond_exits_2(tmp_path):
    path = tmp_path / "flat.csv"
    save_conditional_csv(ConditionalMatrix([[0.5, 0.5]] * 4), path)
    assert main(["estimate", "--cond", str(path)]) == 2


def test_estimate_malformed_input_exits_1(tmp_path):
    path = tmp_path / "broken.csv"
    path.write_text("y0,y1\n0.9,oops\n")
    assert main(["estimate", "--cond", str(path)]) == 1
    assert main(["estimate", "--cond", str(tmp_path / "missing.csv")]) == 1


def test_estimate_requires_exactly_one_input(tmp_path):
    path = tmp_path / "c.csv"
    save_conditional_csv(ConditionalMatrix(np.eye(2)), path)
    assert main(["estimate"]) == 1
    assert main(["estimate", "--cond", str(path), "--preset", "noise-0.2"]) == 1


def test_estimate_unknown_preset_exits_1():
    assert main(["estimate", "--preset", "nope-1.0"]) == 1


def test_estimate_config_file_with_unknown_key(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"preset": "noise-0.2", "surprise": 1}))
    assert main(["estimate", "--config", str(cfg)]) == 1


def test_estimate_config_file_flags_override(tmp_path):
    cfg = tmp_path / "config.json"
    out = tmp_path / "r.json"
    cfg.write_text(json.dumps({"preset": "noise-0.3", "method": "class-conditional"}))
    code = main(["estimate", "--config", str(cfg), "--preset", "noise-0.2",
                 "--out", str(out)])
    assert code == 0
    report = _read_json(out)
    assert report["config"]["preset"] == "noise-0.2"
    assert report["estimates"][0]["value"] == pytest.approx(TWO_CLUSTER_BETA, rel=1e-9)


def test_estimate_idempotent_modulo_timestamp(tmp_path):
    out = tmp_path / "report.json"
    args = ["estimate", "--preset", "noise-0.2", "--seed", "5", "--out", str(out)]
    assert main(args) == 0
    first = _read_json(out)
    assert main(args) == 0
    second = _read_json(out)
    first.pop("timestamp"), second.pop("timestamp")
    assert first == second


def test_gen_writes_samples_and_spec(tmp_path):
    samples = tmp_path / "s.csv"
    spec = tmp_path / "spec.json"
    code = main(["gen", "--preset", "noise-0.1", "--n", "200", "--seed", "3",
                 "--out-samples", str(samples), "--out-spec", str(spec)])
    assert code == 0
    assert len(samples.read_text().strip().splitlines()) == 201
    doc = _read_json(spec)
    assert len(doc["components"]) == 2
    # deterministic given the seed
    again = tmp_path / "s2.csv"
    main(["gen", "--preset", "noise-0.1", "--n", "200", "--seed", "3",
          "--out-samples", str(again), "--out-spec", str(spec)])
    assert again.read_text() == samples.read_text()


def test_gen_without_spec_exits_1():
    assert main(["gen", "--n", "10"]) == 1


def test_sweep_on_joint_csv(tmp_path):
    joint_path = tmp_path / "joint.csv"
    save_joint_csv(DiscreteJoint([[0.4, 0.1], [0.1, 0.4]]), joint_path)
    out_csv = tmp_path / "sweep.csv"
    out_json = tmp_path / "sweep.json"
    code = main([
        "sweep", "--joint", str(joint_path),
        "--beta-min", "1.5", "--beta-max", "4.5", "--beta-points", "9",
        "--restarts", "2", "--seed", "1",
        "--out-csv", str(out_csv), "--out-json", str(out_json),
    ])
    assert code == 0
    lines = out_csv.read_text().strip().splitlines()
    assert lines[0] == "beta,i_xz_nats,i_yz_nats,objective"
    assert len(lines) == 10
    doc = _read_json(out_json)
    assert 2.5 <= doc["sweep"]["detected_beta0"] <= 3.1
    assert doc["theory"]["subset_search"] == pytest.approx(TWO_CLUSTER_BETA, rel=1e-9)
    assert doc["theory"]["max_correlation_inverse"] == pytest.approx(
        TWO_CLUSTER_BETA, rel=1e-9
    )


def test_sweep_product_joint_warns_but_succeeds(tmp_path, capsys):
    joint_path = tmp_path / "product.csv"
    save_joint_csv(DiscreteJoint(np.outer([0.5, 0.5], [0.5, 0.5])), joint_path)
    code = main([
        "sweep", "--joint", str(joint_path),
        "--beta-min", "1.5", "--beta-max", "4.5", "--beta-points", "8",
        "--restarts", "2", "--seed", "1",
        "--out-csv", str(tmp_path / "s.csv"), "--out-json", str(tmp_path / "s.json"),
    ])
    assert code == 0
    assert "none" in capsys.readouterr().out


def test_sweep_non_convergence_exits_3(tmp_path):
    joint_path = tmp_path / "joint.csv"
    save_joint_csv(DiscreteJoint([[0.4, 0.1], [0.1, 0.4]]), joint_path)
    code = main([
        "sweep", "--joint", str(joint_path),
        "--beta-min", "1.5", "--beta-max", "4.5", "--beta-points", "8",
        "--restarts", "1", "--max-iters", "1", "--seed", "1",
        "--out-csv", str(tmp_path / "s.csv"), "--out-json", str(tmp_path / "s.json"),
    ])
    assert code == 3


def test_table_reproduces_closed_form(tmp_path, capsys):
    out = tmp_path / "table.json"
    code = main(["table", "--rates", "0.2,0.3,0.4", "--out", str(out)])
    assert code == 0
    rows = _read_json(out)["rows"]
    for row, rho in zip(rows, (0.2, 0.3, 0.4)):
        expected = 1.0 / (1.0 - 2.0 * rho) ** 2
        assert row["class_conditional"] == pytest.approx(expected, rel=1e-9)
        assert row["subset_true_posterior"] == pytest.approx(expected, rel=1e-9)
        assert row["functional"] == pytest.approx(expected, rel=1e-5)
    printed = capsys.readouterr().out
    assert "6.25" in printed and "25.0" in printed


def test_table_optional_columns(tmp_path):
    out = tmp_path / "table.json"
    code = main([
        "table", "--rates", "0.2", "--learned", "--sweep-column",
        "--samples", "600", "--beta-points", "9", "--seed", "1",
        "--out", str(out),
    ])
    assert code == 0
    row = _read_json(out)["rows"][0]
    assert row["subset_learned_posterior"] is not None
    assert row["subset_learned_posterior"] == pytest.approx(TWO_CLUSTER_BETA, rel=0.5)
    assert 2.4 <= row["observed_onset"] <= 3.2


def test_maxcorr_preset(tmp_path, capsys):
    out = tmp_path / "mc.json"
    assert main(["maxcorr", "--preset", "noise-0.2", "--out", str(out)]) == 0
    doc = _read_json(out)
    assert doc["rho_m"] == pytest.approx(0.6, abs=1e-9)
    assert "0.6" in capsys.readouterr().out


def test_out_dir_env_redirect(tmp_path, monkeypatch):
    monkeypatch.setenv("IBONSET_OUT_DIR", str(tmp_path / "redirected"))
    assert main(["estimate", "--preset", "noise-0.2", "--method", "class-conditional",
                 "--out", "report.json"]) == 0
    assert (tmp_path / "redirected" / "report.json").exists()


def test_round_trip_preserves_estimates(tmp_path):
    # conditional -> CSV -> estimate matches the in-memory value exactly
    rows = np.array([[0.9, 0.1], [0.7, 0.3], [0.2, 0.8], [0.4, 0.6]])
    weights = np.array([0.3, 0.2, 0.4, 0.1])
    cond = ConditionalMatrix(rows, weights)
    from ibonset import subset_search

    direct = subset_search(cond).beta0
    path = tmp_path / "cond.csv"
    save_conditional_csv(cond, path)
    out = tmp_path / "report.json"
    assert main(["estimate", "--cond", str(path), "--method", "subset",
                 "--out", str(out)]) == 0
    assert _read_json(out)["estimates"][0]["value"] == pytest.approx(
        direct, rel=1e-12
    )
