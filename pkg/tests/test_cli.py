import json

import numpy as np
import pytest

from funcunit import __version__
from funcunit.cli import main
from funcunit.core_io import load_labels, load_tensor
from funcunit.pipeline import ConfigError, run_pipeline, validate_config


def test_version(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["--version"])
    assert ei.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as ei:
        main(["frobnicate"])
    assert ei.value.code == 2


def test_stepwise_chain(tmp_path, capsys):
    t = str(tmp_path)
    assert main(["synth", "--scenario", "C", "--out", f"{t}/c"]) == 0
    assert main(["features", "--traj", f"{t}/c.traj.mtf", "--out", f"{t}/U.mtf"]) == 0
    assert main(["graph", "--u", f"{t}/U.mtf", "--out", f"{t}/e.csv"]) == 0
    assert main(["factorize", "--u", f"{t}/U.mtf", "--k", "2", "--eta", "100", "--lambda", "100",
                 "--seed", "7", "--out-v", f"{t}/V.mtf", "--out-w", f"{t}/W.mtf",
                 "--trace", f"{t}/cost.csv"]) == 0
    assert load_tensor(f"{t}/W.mtf").shape[0] == 2
    assert (tmp_path / "cost.csv").read_text().startswith("iteration,cost\n0,")
    assert main(["cluster", "--w", f"{t}/W.mtf", "--k", "2", "--sigma", "0.01", "--seed", "7",
                 "--out", f"{t}/labels.csv"]) == 0
    capsys.readouterr()
    assert main(["accuracy", "--pred", f"{t}/labels.csv", "--truth", f"{t}/c.labels.csv"]) == 0
    assert float(capsys.readouterr().out) >= 99.0


def test_select_k_command(tmp_path, capsys):
    r = np.random.default_rng(0)
    U = np.ones((12, 75))
    for c in range(3):
        U[4 * c:4 * c + 4, 25 * c:25 * (c + 1)] = 10.0
    U += 0.5 * r.random(U.shape)
    from funcunit.core_io import save_tensor

    save_tensor(U, tmp_path / "U.mtf")
    rc = main(["select-k", "--u", str(tmp_path / "U.mtf"), "--kmin", "2", "--kmax", "4", "--runs", "4",
               "--seed", "1", "--out", str(tmp_path / "r.json"), "--csv", str(tmp_path / "r.csv")])
    assert rc == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["best_k"] == 3 and set(rep["dispersion"]) == {"2", "3", "4"}
    assert (tmp_path / "r.csv").read_text().startswith("k,rho\n2,")
    assert main(["select-k", "--u", str(tmp_path / "U.mtf"), "--kmin", "4", "--kmax", "2",
                 "--out", str(tmp_path / "x.json")]) == 2


def test_track_command(tmp_path):
    ph = tmp_path / "ph"
    assert main(["synth", "--kind", "phases", "--grid", "16", "16", "16", "--vector", "0.3", "0", "0",
                 "--out", str(ph)]) == 0
    assert main(["track", "--phases", str(ph), "--out", str(tmp_path / "f.mtf"), "--iterations", "20"]) == 0
    f = load_tensor(tmp_path / "f.mtf")
    inv = load_tensor(tmp_path / "f.inv.mtf")
    assert f.shape == inv.shape == (3, 16, 16, 16)
    assert abs(np.median(f[0]) - 0.3) < 0.05


def test_bench_command(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["bench", "--dataset", "synth3d:C", "--methods", "kmeans,gsnmf_ncut", "--seeds", "1..2",
                 "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 5


def test_missing_input_file_exit_1(tmp_path, capsys):
    assert main(["features", "--traj", str(tmp_path / "none.mtf"), "--out", str(tmp_path / "U.mtf")]) == 1
    assert "features" in capsys.readouterr().err


def _cfg(tmp_path, doc):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return str(p)


def test_pipeline_missing_seed(tmp_path, capsys):
    rc = main(["pipeline", "--config", _cfg(tmp_path, {"input": {"synth3d": {"scenario": "A"}}}),
               "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "seed" in capsys.readouterr().err


def test_pipeline_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="graph"):
        validate_config({"seed": 1, "input": {"synth3d": {"scenario": "A"}}, "graph": {"kappa": 3}})
    with pytest.raises(ConfigError):
        validate_config({"seed": 1, "input": {"synth3d": {"scenario": "A"}},
                         "select": {"kmin": 5, "kmax": 3}})


def test_pipeline_end_to_end_and_flag_override(tmp_path, capsys):
    cfg = _cfg(tmp_path, {"seed": 3, "input": {"synth3d": {"scenario": "A"}}, "cluster": {"k": 3}})
    assert main(["pipeline", "--config", cfg, "--out", str(tmp_path / "o"), "--k", "2"]) == 0
    o = tmp_path / "o"
    rep = json.loads((o / "report.json").read_text())
    assert rep["k"] == 2 and rep["accuracy"] >= 90.0
    man = json.loads((o / "manifest.json").read_text())
    assert man["seed"] == 3 and len(man["config_sha256"]) == 64 and "numpy" in man["versions"]
    assert load_labels(o / "labels.csv").size == rep["n_points"]
    for name in ("traj.mtf", "U.mtf", "V.mtf", "W.mtf", "graph_edges.csv", "cost.csv", "truth.csv"):
        assert (o / name).exists()


def test_pipeline_stage_error_keeps_partial_artifacts(tmp_path, capsys):
    cfg = _cfg(tmp_path, {"seed": 0, "input": {"synth3d": {"scenario": "A"}},
                          "cluster": {"k": 100000}})
    assert main(["pipeline", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "factorize" in err or "cluster" in err
    assert (tmp_path / "o" / "U.mtf").exists()


def test_pipeline_selects_k(tmp_path):
    rep = run_pipeline({"seed": 1, "input": {"synth3d": {"scenario": "C"}},
                        "select": {"kmin": 2, "kmax": 3, "runs": 3}}, tmp_path)
    assert rep["k"] in (2, 3)
    assert (tmp_path / "dispersion.csv").read_text().startswith("k,rho\n")
