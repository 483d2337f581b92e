import json

from bkbm.cli import main


def run(args):
    return main(args)


def read(path):
    with open(path) as fh:
        return fh.read()


class TestClosedForm:
    def test_prints_reflection_value(self, tmp_path, capsys):
        code = run(["closed-form", "--x", "1", "--t", "1", "--theta", "0",
                    "--interval", "0,inf", "--out-dir", str(tmp_path)])
        assert code == 0
        assert capsys.readouterr().out.strip() == "0.6826894921"
        assert (tmp_path / "closed_form.csv").exists()
        manifest = json.loads(read(tmp_path / "manifest.json"))
        assert manifest["subcommand"] == "closed-form"
        assert manifest["config"]["interval"] == "0,inf"
        assert manifest["exit_code"] == 0

    def test_bad_interval_is_usage_error(self, tmp_path, capsys):
        code = run(["closed-form", "--interval", "nonsense",
                    "--out-dir", str(tmp_path)])
        assert code == 1


class TestSimulate:
    def test_deterministic_csv(self, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        args = ["simulate", "--seed", "42", "--theta", "0.5", "--schedule", "0.5,1.5"]
        assert run(args + ["--out-dir", str(d1)]) == 0
        assert run(args + ["--out-dir", str(d2)]) == 0
        assert read(d1 / "positions.csv") == read(d2 / "positions.csv")
        header = read(d1 / "positions.csv").splitlines()[0]
        assert header == "time,particle_index,position"

    def test_seed_changes_output(self, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        run(["simulate", "--seed", "1", "--schedule", "1,2", "--out-dir", str(d1)])
        run(["simulate", "--seed", "2", "--schedule", "1,2", "--out-dir", str(d2)])
        assert read(d1 / "positions.csv") != read(d2 / "positions.csv")

    def test_cap_exceeded_flags_manifest(self, tmp_path):
        code = run(["simulate", "--law", "0,0,0,1", "--x", "5", "--theta", "0",
                    "--schedule", "1,9", "--max-population", "40",
                    "--out-dir", str(tmp_path)])
        assert code == 1
        manifest = json.loads(read(tmp_path / "manifest.json"))
        assert manifest["cap_exceeded"] is True
        assert (tmp_path / "positions.csv").exists()  # partial output kept


class TestConfigPrecedence:
    def test_flags_over_file_over_defaults(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("x = 2.0\n" "t = 2.0  # comment\n")
        out = tmp_path / "out"
        code = run(["closed-form", "--config", str(cfg), "--x", "1.0",
                    "--out-dir", str(out)])
        assert code == 0
        manifest = json.loads(read(out / "manifest.json"))
        assert manifest["config"]["x"] == 1.0     # flag wins
        assert manifest["config"]["t"] == 2.0     # file beats default
        assert manifest["config"]["theta"] == 0.0  # default

    def test_config_file_list_values(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("t_grid = 5,10,20\ntheta = 1.0\n")
        out = tmp_path / "out"
        code = run(["validate-expansion", "--mode", "expectation",
                    "--config", str(cfg), "--out-dir", str(out)])
        assert code == 0
        manifest = json.loads(read(out / "manifest.json"))
        assert manifest["config"]["t_grid"] == [5.0, 10.0, 20.0]

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("bogus = 1\n")
        assert run(["closed-form", "--config", str(cfg),
                    "--out-dir", str(tmp_path)]) == 1

    def test_malformed_config_rejected(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("just words\n")
        assert run(["closed-form", "--config", str(cfg),
                    "--out-dir", str(tmp_path)]) == 1

    def test_env_var_default_out_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BKBM_OUTPUT_DIR", str(tmp_path / "envout"))
        assert run(["closed-form"]) == 0
        assert (tmp_path / "envout" / "closed_form.csv").exists()


class TestUsageErrors:
    def test_unknown_flag(self):
        assert run(["closed-form", "--does-not-exist", "3"]) == 1

    def test_unknown_subcommand(self):
        assert run(["frobnicate"]) == 1

    def test_missing_subcommand(self):
        assert run([]) == 1


class TestValidateExpansion:
    def test_expectation_mode_verdict_and_csv(self, tmp_path):
        code = run(["validate-expansion", "--mode", "expectation", "--m", "0",
                    "--theta", "1", "--x", "1", "--interval", "0,inf",
                    "--t-grid", "5,10,20,40", "--out-dir", str(tmp_path)])
        assert code == 0
        lines = read(tmp_path / "expansion_report.csv").splitlines()
        assert lines[0] == "t,observed,predicted,residual,residual_tm"
        resid = [abs(float(l.split(",")[4])) for l in lines[1:]]
        assert resid[-2] > resid[-1]
        report = json.loads(read(tmp_path / "expansion_report.json"))
        assert report["verdict"] is True

    def test_pathwise_threads_equivalence(self, tmp_path):
        d1, d2 = tmp_path / "t1", tmp_path / "t8"
        base = ["validate-expansion", "--mode", "pathwise", "--m", "0",
                "--theta", "1", "--x", "1", "--interval", "0.5,2",
                "--horizon", "8", "--replicates", "40", "--n-checkpoints", "24",
                "--seed", "7"]
        run(base + ["--threads", "1", "--out-dir", str(d1)])
        run(base + ["--threads", "8", "--out-dir", str(d2)])
        assert read(d1 / "expansion_report.csv") == read(d2 / "expansion_report.csv")
        r1 = json.loads(read(d1 / "expansion_report.json"))
        r2 = json.loads(read(d2 / "expansion_report.json"))
        assert r1 == r2

    def test_plot_writes_figure(self, tmp_path):
        code = run(["validate-expansion", "--mode", "expectation", "--m", "1",
                    "--theta", "1", "--t-grid", "5,10,20", "--plot",
                    "--out-dir", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "expansion_report.png").stat().st_size > 0

    def test_pathwise_kappa_hypothesis_maps_to_runtime_error(self, tmp_path):
        # m=1 with the default kappa=4 violates kappa > 2m+2
        code = run(["validate-expansion", "--mode", "pathwise", "--m", "1",
                    "--horizon", "6", "--replicates", "8",
                    "--out-dir", str(tmp_path)])
        assert code == 1


class TestFigureRendering:
    def test_simulate_plot(self, tmp_path):
        assert run(["simulate", "--schedule", "0.5,1", "--seed", "4", "--plot",
                    "--out-dir", str(tmp_path)]) == 0
        assert (tmp_path / "positions.png").stat().st_size > 0

    def test_kesten_plot(self, tmp_path):
        assert run(["kesten-rate", "--theta", "1", "--t-grid", "10,20,40,80",
                    "--plot", "--out-dir", str(tmp_path)]) == 0
        assert (tmp_path / "kesten_rate.png").stat().st_size > 0

    def test_martingale_series_plot(self, tmp_path):
        assert run(["check-martingale", "--mode", "series", "--horizon", "5",
                    "--n-checkpoints", "16", "--k-max", "1", "--plot",
                    "--out-dir", str(tmp_path)]) == 0
        assert (tmp_path / "martingale_series.png").stat().st_size > 0


class TestCheckMartingale:
    def test_conserve_mode(self, tmp_path):
        code = run(["check-martingale", "--mode", "conserve", "--theta", "0.5",
                    "--k-max", "1", "--times", "1,2", "--replicates", "4000",
                    "--out-dir", str(tmp_path)])
        assert code == 0
        lines = read(tmp_path / "martingale_check.csv").splitlines()
        assert lines[0] == "k,theta,t,mc_mean,std_error,start_value,z"
        assert len(lines) == 1 + 2 * 2

    def test_series_mode_schema(self, tmp_path):
        code = run(["check-martingale", "--mode", "series", "--theta", "0.5",
                    "--k-max", "2", "--horizon", "6", "--n-checkpoints", "24",
                    "--seed", "3", "--out-dir", str(tmp_path)])
        assert code == 0
        lines = read(tmp_path / "martingale_series.csv").splitlines()
        assert lines[0] == "k,theta,r_n,value"
        manifest = json.loads(read(tmp_path / "manifest.json"))
        assert "k0" in manifest["verdicts"]


class TestKestenRate:
    def test_verdicts_pass(self, tmp_path):
        code = run(["kesten-rate", "--theta", "1", "--t-grid", "10,20,40,80",
                    "--out-dir", str(tmp_path)])
        assert code == 0
        manifest = json.loads(read(tmp_path / "manifest.json"))
        assert manifest["verdicts"]["diffs_decreasing"] is True
        assert manifest["verdicts"]["constant_ok"] is True

    def test_verdict_failure_exits_two(self, tmp_path):
        code = run(["kesten-rate", "--theta", "1", "--t-grid", "10,20,40,80",
                    "--rel-tol", "1e-9", "--out-dir", str(tmp_path)])
        assert code == 2


class TestSpineEstimate:
    def test_indicator(self, tmp_path):
        code = run(["spine-estimate", "--functional", "indicator", "--theta", "0.5",
                    "--replicates", "50000", "--out-dir", str(tmp_path)])
        assert code == 0
        manifest = json.loads(read(tmp_path / "manifest.json"))
        assert manifest["verdicts"]["agrees"] is True

    def test_bessel_gof(self, tmp_path):
        code = run(["spine-estimate", "--functional", "bessel-gof", "--theta", "0",
                    "--replicates", "50000", "--out-dir", str(tmp_path)])
        assert code == 0

    def test_unknown_functional(self, tmp_path):
        assert run(["spine-estimate", "--functional", "nope",
                    "--out-dir", str(tmp_path)]) == 1
