"""End-to-end checks of the command line verbs on temp-file configs."""

import csv
import json
from fractions import Fraction

import pytest

from sbmatch.cli import ConfigError, load_config, main


def triangle_cfg():
    return {
        "model": {
            "classes": ["a", "b", "c"],
            "nu": ["1/3", "1/3", "1/3"],
            "rho": [[0.0, 0.3, 0.3], [0.3, 0.0, 0.3], [0.3, 0.3, 0.0]],
        },
        "run": {"T": 400, "replicas": 2, "base_seed": 11, "sample_every": 100},
    }


def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_config_fractions_weight_alpha(tmp_path):
    doc = triangle_cfg()
    doc["policy"] = {"weight": "w2", "alpha": ["b", "a", "c"], "n_check": 500}
    cfg = load_config(write_cfg(tmp_path, doc))
    assert cfg.spec.nu_exact == (Fraction(1, 3),) * 3
    assert cfg.weight.name == "w2"
    # priority list b > a > c, stored as per-class values with the largest first
    assert cfg.alpha == (2, 3, 1)
    assert cfg.n_check == 500
    assert cfg.run.T == 400 and cfg.run.base_seed == 11


def test_config_rejections(tmp_path):
    bad = triangle_cfg()
    bad["policy"] = {"alpha": ["a", "b"]}
    with pytest.raises(ConfigError, match="alpha"):
        load_config(write_cfg(tmp_path, bad, "a.json"))
    bad = triangle_cfg()
    bad["policy"] = {"weight": "w9"}
    with pytest.raises(ConfigError, match="weight"):
        load_config(write_cfg(tmp_path, bad, "b.json"))
    bad = triangle_cfg()
    bad["model"]["nu"] = ["1/3", "1/3", "nope"]
    with pytest.raises(ConfigError, match="nu"):
        load_config(write_cfg(tmp_path, bad, "c.json"))
    with pytest.raises(ConfigError, match="model"):
        load_config(write_cfg(tmp_path, {"run": {}}, "d.json"))
    assert main(["--config", str(tmp_path / "missing.json"), "ncond"]) == 2


def test_ncond_report(tmp_path, capsys):
    out = tmp_path / "ncond.json"
    assert main(["--config", write_cfg(tmp_path, triangle_cfg()),
                 "--out", str(out), "ncond"]) == 0
    doc = json.loads(out.read_text())
    assert doc["ncond"] is True
    assert doc["eta"] == pytest.approx(1 / 3)
    assert doc["eta_exact"] == "1/3"
    assert doc["independent_sets"] == [["a"], ["b"], ["c"]]
    assert len(doc["minimizer"]) == 1
    assert doc["walk"]["mu"] == pytest.approx(-1 / 3)
    assert doc["walk"]["sigma2"] > 0.0


def test_ncond_without_independent_sets(tmp_path):
    doc = {"model": {"classes": ["s"], "nu": ["1"], "rho": [[0.7]]}}
    out = tmp_path / "solo.json"
    assert main(["--config", write_cfg(tmp_path, doc),
                 "--out", str(out), "ncond"]) == 0
    rep = json.loads(out.read_text())
    assert rep["eta"] == "inf"
    assert rep["ncond"] is True
    assert rep["independent_sets"] == []
    assert rep["minimizer"] is None and rep["walk"] is None


def test_simulate_requires_seed(tmp_path, capsys):
    doc = triangle_cfg()
    del doc["run"]["base_seed"]
    assert main(["--config", write_cfg(tmp_path, doc), "simulate"]) == 2
    assert "seed" in capsys.readouterr().err


def test_simulate_csv_is_deterministic(tmp_path):
    doc = triangle_cfg()
    doc["run"]["walk_set"] = ["a"]
    cfg = write_cfg(tmp_path, doc)
    f1, f2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
    assert main(["--config", cfg, "--out", str(f1), "--seed", "5", "simulate"]) == 0
    assert main(["--config", cfg, "--out", str(f2), "--seed", "5", "simulate"]) == 0
    assert f1.read_bytes() == f2.read_bytes()
    rows = read_csv(f1)
    assert rows[0] == ["replica", "t", "x_a", "x_b", "x_c",
                       "sup_norm", "matched_pairs", "perfect", "walk_S"]
    t0 = [r for r in rows[1:] if r[1] == "0"]
    assert len(t0) == 2  # one start row per replica
    assert all(r[2:7] == ["0", "0", "0", "0", "0"] for r in t0)
    assert {r[7] for r in rows[1:]} <= {"0", "1"}


def test_drift_sweep_and_negative_control(tmp_path, capsys):
    cfg = write_cfg(tmp_path, triangle_cfg())
    out = tmp_path / "drift.csv"
    assert main(["--config", cfg, "--max-norm", "5",
                 "--out", str(out), "drift"]) == 0
    assert "0 failures" in capsys.readouterr().out
    rows = read_csv(out)
    assert rows[0][-1] == "status"
    assert len(rows) == 1 + 6 ** 3
    assert all(r[-1] == "pass" for r in rows[1:])

    assert main(["--config", cfg, "--max-norm", "5",
                 "--out", str(tmp_path / "bad.csv"), "drift", "--corrupt-kernel"]) == 1
    assert "failures" in capsys.readouterr().out
    assert any(r[-1] == "fail" for r in read_csv(tmp_path / "bad.csv")[1:])


def test_drift_needs_stability(tmp_path, capsys):
    doc = {"model": {"classes": ["one", "two"], "nu": ["3/5", "2/5"],
                     "rho": [[0.0, 0.5], [0.5, 0.0]]}}
    assert main(["--config", write_cfg(tmp_path, doc), "drift"]) == 2
    assert "margin" in capsys.readouterr().err


def test_appendix_rows(tmp_path, capsys):
    cfg = write_cfg(tmp_path, triangle_cfg())
    out = tmp_path / "appendix.csv"
    assert main(["--config", cfg, "--max-norm", "2",
                 "--out", str(out), "appendix"]) == 0
    summary = capsys.readouterr().out
    rows = read_csv(out)
    head = rows[0]
    si, ai = head.index("step"), head.index("applicable")
    applicable = [r for r in rows[1:] if r[ai] == "1"]
    skipped = [r for r in rows[1:] if r[ai] == "0"]
    assert applicable and skipped
    assert all(r[-1] == "pass" for r in applicable)
    assert all(r[-1] == "skipped" for r in skipped)
    assert f"{len(applicable)} applicable checks, 0 failures" in summary
    assert {r[si] for r in rows[1:]} == {"threshold", "selfloops", "independent",
                                         "certain_match", "margin"}


def test_stationary_report(tmp_path, capsys):
    doc = {"model": {"classes": ["s"], "nu": ["1"], "rho": [[0.5]]},
           "analyze": {"cap": 6, "solver": "direct"}}
    out = tmp_path / "pi.csv"
    assert main(["--config", write_cfg(tmp_path, doc),
                 "--out", str(out), "stationary"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["n_states"] == 7
    assert rep["method"] == "direct"
    assert rep["mean_bound"] == pytest.approx(4.5)
    assert rep["bound_ok"] is True
    rows = read_csv(out)
    assert rows[0] == ["x_s", "pi"]
    assert sum(float(r[1]) for r in rows[1:]) == pytest.approx(1.0, abs=1e-12)


def test_sweep_csv(tmp_path, capsys):
    def bip(p):
        q = Fraction(1) - Fraction(p)
        return {"classes": ["one", "two"], "nu": [str(Fraction(p)), str(q)],
                "rho": [[0.0, 0.5], [0.5, 0.0]]}

    doc = triangle_cfg()
    doc["sweep"] = {"models": [{"id": "even", "model": bip("1/2")},
                               {"id": "tilted", "model": bip("3/5")}],
                    "T": 2000, "replicas": 2}
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "sweep.csv"
    assert main(["--config", cfg, "--out", str(out), "sweep"]) == 0
    rows = read_csv(out)
    assert rows[0] == ["id", "eta", "ncond", "growth", "perfect_rate",
                       "mean_return_time"]
    byid = {r[0]: r for r in rows[1:]}
    assert set(byid) == {"even", "tilted"}
    assert float(byid["even"][1]) == pytest.approx(0.0)
    assert float(byid["tilted"][1]) == pytest.approx(-0.2)
    assert byid["even"][2] == "0" and byid["tilted"][2] == "0"
    assert float(byid["tilted"][3]) > float(byid["even"][3])

    no_models = triangle_cfg()
    assert main(["--config", write_cfg(tmp_path, no_models, "nm.json"),
                 "sweep"]) == 2
    no_seed = doc.copy()
    no_seed["run"] = {"T": 100}
    assert main(["--config", write_cfg(tmp_path, no_seed, "ns.json"),
                 "sweep"]) == 2
