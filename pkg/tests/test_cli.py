import json

import numpy as np
import pytest

from survml import reports
from survml.cli import EXIT_CONFIG, EXIT_DATA, EXIT_FIT, main
from survml.config import load_config, parse_config
from survml.dataset import load_csv
from survml.errors import ConfigError


def write_config(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


SMALL = """\
input: cohort.csv
seed: 3
output: out
models:
  cox: {{}}
  coxnet: {{alphas: [1.0], lambdas: [0.05, 0.1]}}
  rsf: {{n_trees: 10, mtry: [2], min_node_size: [5]}}
validation: {{outer_k: 3, inner_k: 3, n_experiments: 3}}
importance: {{mtry: 2, min_node_size: 5, n_trees: 10, n_repeats: 3}}
{extra}"""


@pytest.fixture
def project(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "cohort.csv"), "--n", "90", "--p", "4",
                 "--beta", "1,0.5,0,0", "--seed", "1", "--missing-rate", "0.05"]) == 0
    return tmp_path


def test_synth_roundtrip_and_determinism(tmp_path):
    a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
    for path in (a, b):
        assert main(["synth", "--out", str(path), "--n", "50", "--p", "3", "--seed", "7"]) == 0
    assert a.read_bytes() == b.read_bytes()
    ds = load_csv(a)
    assert ds.n_rows == 50 and set(np.unique(ds.events)) <= {0, 1}
    assert "NA" not in a.read_text()
    main(["synth", "--out", str(c), "--n", "50", "--p", "3", "--seed", "7", "--missing-rate", "0.2"])
    assert "NA" in c.read_text()


def test_config_parsing(tmp_path):
    cfg = parse_config({"input": "d.csv", "seed": 1, "output": "o",
                        "validation": {"train_fraction": "2/3"}}, tmp_path)
    assert cfg.validation.train_fraction == 2 / 3
    assert set(cfg.models) == {"cox", "coxnet", "rsf"}
    assert cfg.input == tmp_path / "d.csv"
    for bad in ({"input": "d", "output": "o"},
                {"input": "d", "output": "o", "seed": "x"},
                {"input": "d", "output": "o", "seed": 1, "bogus": 1},
                {"input": "d", "output": "o", "seed": 1, "models": {"coxnet": {"alphas": [2]}}}):
        with pytest.raises(ConfigError):
            parse_config(bad, tmp_path)


def test_fingerprint_ignores_jobs_and_output(tmp_path):
    a = parse_config({"input": "d.csv", "seed": 1, "output": "o", "jobs": 1}, tmp_path)
    b = parse_config({"input": "d.csv", "seed": 1, "output": "p", "jobs": 4}, tmp_path)
    c = parse_config({"input": "d.csv", "seed": 2, "output": "o"}, tmp_path)
    assert a.sha256() == b.sha256() != c.sha256()


def test_exit_codes(project):
    assert main(["check-config", "--config", str(project / "missing.yaml")]) == EXIT_CONFIG
    bad_input = write_config(project, SMALL.format(extra="").replace("cohort.csv", "nope.csv"))
    assert main(["check-config", "--config", str(bad_input)]) == EXIT_DATA
    good = write_config(project, SMALL.format(extra=""), "good.yaml")
    assert main(["check-config", "--config", str(good)]) == 0
    assert main(["run", "--config", str(good), "--models", "lasso"]) == EXIT_CONFIG


def test_all_failed_model_gives_fit_exit_and_incomplete_bundle(tmp_path):
    x = np.linspace(-2, 2, 60)
    t = np.exp(-3 * x)
    rows = ["time,event,x"] + [f"{float(ti)!r},{e},{float(xi)!r}" for ti, e, xi in zip(t, np.tile([1, 1, 0], 20), x)]
    (tmp_path / "perfect.csv").write_text("\n".join(rows) + "\n")
    cfg = write_config(tmp_path, "input: perfect.csv\nseed: 0\noutput: out\nmodels: {cox: {}}\n"
                                 "validation: {protocols: [ncv], inner_k: 3}\n")
    assert main(["run", "--config", str(cfg)]) == EXIT_FIT
    meta = json.loads((tmp_path / "out" / "run_metadata.json").read_text())
    assert meta["complete"] is False


def test_run_bundle_roundtrip(project):
    cfg = write_config(project, SMALL.format(extra=""))
    assert main(["run", "--config", str(cfg)]) == 0
    out = project / "out"
    names = {p.name for p in out.iterdir()}
    assert names == {"ncv_folds.csv", "ncv_table.csv", "mc_experiments.csv", "mc_table.csv",
                     "importance.csv", "summary.md", "run_metadata.json"}
    kind, table = reports.read_table(out / "ncv_table.csv")
    assert kind == "ncv_table" and [r["model"] for r in table] == ["cox", "coxnet", "rsf"]
    assert table[0]["inner_cv_cindex"] == "NA (not tuned)"
    _, exps = reports.read_table(out / "mc_experiments.csv")
    assert len(exps) == 9
    assert reports.verify_bundle(out) == []
    meta = json.loads((out / "run_metadata.json").read_text())
    assert meta["seed"] == 3 and meta["complete"] is True
    assert meta["config_sha256"] == load_config(cfg).sha256()
    _, imp = reports.read_table(out / "importance.csv")
    scores = [float(r["importance"]) for r in imp]
    assert scores == sorted(scores, reverse=True)


def test_tampered_bundle_detected(project):
    cfg = write_config(project, SMALL.format(extra=""))
    main(["run", "--config", str(cfg), "--models", "cox"])
    path = project / "out" / "mc_table.csv"
    text = path.read_text().splitlines()
    fields = text[2].split(",")
    fields[1] = repr(float(fields[1]) + 1e-9)
    text[2] = ",".join(fields)
    path.write_text("\n".join(text) + "\n")
    assert reports.verify_bundle(project / "out")


def test_seed_override_and_models_filter(project):
    cfg = write_config(project, SMALL.format(extra=""))
    assert main(["run", "--config", str(cfg), "--models", "cox", "--seed", "11",
                 "--out", str(project / "o2")]) == 0
    meta = json.loads((project / "o2" / "run_metadata.json").read_text())
    assert meta["seed"] == 11
    _, table = reports.read_table(project / "o2" / "mc_table.csv")
    assert [r["model"] for r in table] == ["cox"]


def test_excluded_feature_bundles_share_schema(project):
    base = write_config(project, SMALL.format(extra=""), "a.yaml")
    excl = write_config(project, SMALL.format(extra="schema: {exclude_features: [x4]}\n"), "b.yaml")
    main(["run", "--config", str(base), "--models", "cox", "--out", str(project / "A")])
    main(["run", "--config", str(excl), "--models", "cox", "--out", str(project / "B")])
    for name in ("ncv_table.csv", "mc_table.csv"):
        ha = (project / "A" / name).read_text().splitlines()[:2]
        hb = (project / "B" / name).read_text().splitlines()[:2]
        assert ha == hb
    meta = json.loads((project / "B" / "run_metadata.json").read_text())
    assert "x4" not in meta["columns"]


def test_importance_command(project):
    cfg = write_config(project, SMALL.format(extra=""))
    assert main(["importance", "--config", str(cfg), "--out", str(project / "imp")]) == 0
    _, rows = reports.read_table(project / "imp" / "importance.csv")
    assert rows[0]["column"] == "x1"
    assert [int(r["rank"]) for r in rows] == list(range(1, len(rows) + 1))
