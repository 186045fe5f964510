import csv
import json

import pytest

from mrhsurv.cli import main

FAST = ["--chains", "2", "--burnin", "200", "--retain", "200", "--thin", "1"]


def simulate(tmp_path, name="sim", *extra):
    out = tmp_path / name
    argv = ["simulate", "--out", str(out), "--n", "200", "--c-admin", "8", "--seed", "3",
            "--beta", "0.5", "--covariate", "trt:binary:0.5", *extra]
    assert main(argv) == 0
    return out


@pytest.fixture(scope="module")
def sim_data(tmp_path_factory):
    return simulate(tmp_path_factory.mktemp("cli")) / "data.csv"


@pytest.fixture(scope="module")
def mrh_fit(sim_data, tmp_path_factory):
    out = tmp_path_factory.mktemp("mrh")
    assert main(["fit-mrh", "--data", str(sim_data), "--out", str(out), "--grid-m", "4", "--horizon", "8",
                 "--prune-levels", "2", "--seed", "1", *FAST]) == 0
    return out


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestSimulate:
    def test_rows_and_manifest(self, tmp_path):
        out = simulate(tmp_path)
        assert len(read_rows(out / "data.csv")) == 400
        man = json.loads((out / "manifest.json").read_text())
        assert man["config"]["seed"] == 3 and "data.csv" in man["outputs"]

    def test_deterministic(self, tmp_path):
        a, b = simulate(tmp_path, "a"), simulate(tmp_path, "b")
        for f in ("data.csv", "manifest.json"):
            assert (a / f).read_bytes() == (b / f).read_bytes().replace(b"/b", b"/a")

    def test_negative_censoring_rate(self, tmp_path, capsys):
        assert main(["simulate", "--out", str(tmp_path / "x"), "--c-rate", "-1"]) == 2
        assert capsys.readouterr().err.startswith("error: config-invalid:")

    def test_unknown_hazard(self, tmp_path):
        assert main(["simulate", "--out", str(tmp_path / "x"), "--hazard", "gompertz:1"]) == 2


class TestFitMrh:
    def test_structure(self, mrh_fit):
        s = json.loads((mrh_fit / "summary.json").read_text())
        assert all(n <= 16 for n in s["extra"]["effective_bins"])
        assert len(s["hazard"]) == 2 and len(s["hazard"][0]) == 16
        for f in ("chain_0.csv", "chain_1.csv", "hazard.csv", "log_hr.csv", "beta.csv", "ic.csv", "fit.json"):
            assert (mrh_fit / f).exists()
        man = json.loads((mrh_fit / "manifest.json").read_text())
        assert man["input"]["sha256"] == json.loads((mrh_fit / "fit.json").read_text())["data_sha256"]
        assert len(man["prune_masks"]) == 2 and len(man["seeds"]["chain_spawn_keys"]) == 2
        assert [r["covariate"] for r in read_rows(mrh_fit / "beta.csv")] == ["trt"]

    def test_pruned_bottom_levels(self, mrh_fit):
        masks = json.loads((mrh_fit / "manifest.json").read_text())["prune_masks"]
        # only the bottom two levels (slots 3..14) can be pruned
        assert all(not any(m[:3]) for m in masks)

    def test_ph_mode(self, sim_data, tmp_path):
        out = tmp_path / "ph"
        assert main(["fit-mrh", "--data", str(sim_data), "--out", str(out), "--grid-m", "3", "--ph-mode",
                     *FAST]) == 0
        s = json.loads((out / "summary.json").read_text())
        assert len(s["hazard"]) == 1
        assert [r["covariate"] for r in read_rows(out / "beta.csv")] == ["stratum[1]", "trt"]
        assert s["model"] == "phmrh-0"

    def test_missing_file(self, tmp_path, capsys):
        assert main(["fit-mrh", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")]) == 3
        assert "error: io-error:" in capsys.readouterr().err

    def test_bad_prune_levels(self, sim_data, tmp_path):
        assert main(["fit-mrh", "--data", str(sim_data), "--out", str(tmp_path / "o"), "--grid-m", "3",
                     "--prune-levels", "5", *FAST]) == 2

    def test_jsonl_and_diagnose(self, sim_data, tmp_path):
        out = tmp_path / "j"
        assert main(["fit-mrh", "--data", str(sim_data), "--out", str(out), "--grid-m", "2", "--format", "jsonl",
                     *FAST]) == 0
        assert (out / "chain_1.jsonl").exists()
        assert main(["diagnose", "--run", str(out)]) == 0
        rep = json.loads((out / "diagnostics.json").read_text())
        assert set(rep["geweke"]) == {"0", "1"} and rep["max_rhat"] >= 0.9


class TestConfigFile:
    def test_precedence(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# simulation settings\nn = 50\nseed = 7\nc-admin = 5\n")
        out = tmp_path / "o"
        assert main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "8"]) == 0
        conf = json.loads((out / "manifest.json").read_text())["config"]
        assert conf["n"] == [50] and conf["seed"] == 8 and conf["c_admin"] == 5.0 and conf["c_rate"] == 0.0

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("chains = 3\n")
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_missing_config(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "none.cfg")]) == 3


class TestCompare:
    @pytest.fixture(scope="class")
    @classmethod
    def classic_fits(cls, sim_data, tmp_path_factory):
        root = tmp_path_factory.mktemp("classic")
        base = ["--data", str(sim_data), "--grid-m", "4", "--horizon", "8"]
        assert main(["fit-pe", *base, "--out", str(root / "pe1"), "--j-max", "6"]) == 0
        assert main(["fit-pe", *base, "--out", str(root / "pe2"), "--j-max", "6"]) == 0
        assert main(["fit-weibull", *base, "--out", str(root / "wb")]) == 0
        return root

    def test_identical_rows(self, sim_data, classic_fits, tmp_path):
        out = tmp_path / "cmp"
        assert main(["compare", str(classic_fits / "pe1"), str(classic_fits / "pe2"), "--data", str(sim_data),
                     "--out", str(out)]) == 0
        rows = read_rows(out / "comparison.csv")
        a, b = ({k: v for k, v in r.items() if k != "fit"} for r in rows)
        assert a == b

    def test_gof_bounded(self, sim_data, classic_fits, mrh_fit, tmp_path):
        out = tmp_path / "cmp"
        assert main(["compare", str(classic_fits / "pe1"), str(classic_fits / "wb"), str(mrh_fit),
                     "--data", str(sim_data), "--out", str(out)]) == 0
        rows = json.loads((out / "comparison.json").read_text())
        assert [r["model"] for r in rows] == ["pe-equal", "weibull-nph", "npmrh-2"]
        gofs = [v for r in rows for k, v in r.items() if k.startswith("gof@") and v is not None]
        assert len(gofs) == 27 and all(0 <= g <= 1 for g in gofs)
        assert rows[2]["dic"] is not None and rows[0]["dic"] is None

    def test_hash_mismatch(self, tmp_path, classic_fits, capsys):
        other = simulate(tmp_path, "other", "--seed", "99") / "data.csv"
        code = main(["compare", str(classic_fits / "pe1"), str(classic_fits / "wb"), "--data", str(other),
                     "--out", str(tmp_path / "x")])
        assert code == 2
        assert "dataset-hash mismatch" in capsys.readouterr().err

    def test_needs_two(self, sim_data, classic_fits):
        assert main(["compare", str(classic_fits / "pe1"), "--data", str(sim_data)]) == 2


def test_pe_beats_mrh_on_pe_data(tmp_path):
    wins = 0
    for r in range(10):
        d = tmp_path / f"r{r}"
        assert main(["simulate", "--out", str(d), "--hazard", "piecewise:0,3,6:0.3,0.1", "--n", "300",
                     "--c-admin", "6", "--seed", str(100 + r)]) == 0
        data = str(d / "data.csv")
        grid = ["--grid-m", "3", "--horizon", "6"]
        assert main(["fit-pe", "--data", data, "--out", str(d / "pe"), "--j-max", "6", *grid]) == 0
        assert main(["fit-mrh", "--data", data, "--out", str(d / "mrh"), "--seed", str(r), *grid, *FAST]) == 0
        assert main(["compare", str(d / "pe"), str(d / "mrh"), "--data", data, "--out", str(d / "cmp")]) == 0
        pe, mrh = json.loads((d / "cmp" / "comparison.json").read_text())
        wins += pe["aic"] < mrh["aic"]
    assert wins >= 7
