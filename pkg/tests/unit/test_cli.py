"""
Unit tests for the command-line front end
Exit codes, CSV artifacts and reproducibility
"""
import numpy as np
import pandas as pd
import pytest

import sys
import os
sys.path.append(os.path.join(os.path.dirname(__file__), '..', '..'))

from edgeband.cli import build_parser, main, read_estimate_csv
from edgeband.cli.main import EXIT_CONFIG, EXIT_OK, EXIT_PARSE, read_frame_csv, to_run_config
from edgeband.imaging import generate, simulation_scene, save_csv
from shared.config.settings import get_settings


@pytest.fixture(autouse=True)
def clean_settings(monkeypatch):
    """Each test sees default environment settings"""
    for var in ("EDGEBAND_SEED", "EDGEBAND_THREADS", "EDGEBAND_N_BOOTSTRAP"):
        monkeypatch.delenv(var, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def image_csv(tmp_path):
    grid = generate(simulation_scene("phi1", 0.5, seed=8), 32)
    return str(save_csv(grid, tmp_path / "scene.csv"))


@pytest.mark.unit
class TestArgumentParsing:
    """Flag parsing into RunConfig"""

    def test_defaults(self):
        cfg = to_run_config(build_parser().parse_args(["bands", "--input", "x.csv"]))
        assert cfg.alpha == 0.05
        assert cfg.t_n is None
        assert cfg.n_bootstrap == 4000
        assert cfg.seed == 0 and not cfg.seed_given
        assert cfg.threads == 1

    def test_tn_auto_and_number(self):
        parser = build_parser()
        assert to_run_config(parser.parse_args(["bands", "--input", "a", "--tn", "auto"])).t_n is None
        assert to_run_config(parser.parse_args(["bands", "--input", "a", "--tn", "0.37"])).t_n == 0.37

    def test_sigma_region(self):
        args = build_parser().parse_args(["bands", "--input", "a", "--sigma-region", "0,0,0.3,1"])
        assert to_run_config(args).sigma_region == (0.0, 0.0, 0.3, 1.0)

    def test_environment_fallbacks(self, monkeypatch):
        monkeypatch.setenv("EDGEBAND_SEED", "12")
        monkeypatch.setenv("EDGEBAND_THREADS", "3")
        get_settings.cache_clear()
        cfg = to_run_config(build_parser().parse_args(["estimate", "--input", "a"]))
        assert cfg.seed == 12 and cfg.seed_given
        assert cfg.threads == 3

    def test_band_config(self):
        cfg = to_run_config(build_parser().parse_args(
            ["bands", "--input", "a", "--tn", "0.2", "--bootstrap", "600", "--target", "tau"]))
        band = cfg.band_config()
        assert band.t_n_policy == "fixed" and band.t_n == 0.2
        assert band.n_bootstrap == 600
        assert band.target == "tau"


@pytest.mark.unit
class TestExitCodes:
    """Error classes map to exit codes"""

    def test_missing_input_file(self, tmp_path):
        assert main(["estimate", "--input", str(tmp_path / "absent.pgm")]) == EXIT_PARSE

    def test_malformed_image(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2\n3\n")
        assert main(["estimate", "--input", str(path)]) == EXIT_PARSE

    def test_negative_bandwidth(self, image_csv):
        assert main(["estimate", "--input", image_csv, "--h=-1"]) == EXIT_CONFIG

    def test_missing_input_flag(self):
        assert main(["bands"]) == EXIT_CONFIG

    def test_too_few_bootstrap_replications(self, image_csv):
        assert main(["bands", "--input", image_csv, "--bootstrap", "10"]) == EXIT_CONFIG

    def test_malformed_study_yaml(self, tmp_path):
        path = tmp_path / "study.yaml"
        path.write_text("scenario: [phi1\n")
        assert main(["simulate", "--study", str(path)]) == EXIT_PARSE

    def test_invalid_study_values(self, tmp_path):
        path = tmp_path / "study.yaml"
        path.write_text("n_list: [8]\n")
        assert main(["simulate", "--study", str(path)]) == EXIT_CONFIG


@pytest.mark.unit
class TestCommands:
    """Subcommand outputs"""

    def test_estimate_roundtrip(self, image_csv, tmp_path):
        out = tmp_path / "est.csv"
        json_out = tmp_path / "est.json"
        assert main(["estimate", "--input", image_csv, "--out", str(out), "--json", str(json_out)]) == EXIT_OK
        est = read_estimate_csv(out)
        assert est.size == 64
        assert est.n == 32.0
        assert est.h == pytest.approx(10 / 64)
        assert json_out.exists()
        assert np.all((est.phi_hat > 0) & (est.phi_hat < 1))

    def test_estimate_to_stdout(self, image_csv, capsys):
        assert main(["estimate", "--input", image_csv]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("# h=")
        assert lines[2] == "x,phi_hat,psi_hat,tau_hat,contrast"

    def test_bands_fixed_seed_is_byte_identical(self, image_csv, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["bands", "--input", image_csv, "--bootstrap", "500", "--seed", "3"]
        assert main(args + ["--out", str(a)]) == EXIT_OK
        assert main(args + ["--out", str(b), "--threads", "2"]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()

    def test_bands_metadata(self, image_csv, tmp_path):
        out = tmp_path / "bands.csv"
        assert main(["bands", "--input", image_csv, "--bootstrap", "500", "--tn", "0.1",
                     "--out", str(out)]) == EXIT_OK
        frame, meta = read_frame_csv(out)
        assert list(frame.columns) == ["x", "center", "pw_lo", "pw_hi", "unif_lo", "unif_hi"]
        assert meta["target"] == "phi"
        assert float(meta["t_n"]) == 0.1
        assert float(meta["q_boot"]) > 0
        assert (frame["unif_hi"] >= frame["unif_lo"]).all()

    def test_simulate_small_study(self, tmp_path):
        study = tmp_path / "study.yaml"
        study.write_text("n_list: [32]\nreps: 1\nn_bootstrap: 50\nx_grid_size: 4\n")
        out = tmp_path / "study.csv"
        assert main(["simulate", "--study", str(study), "--out", str(out)]) == EXIT_OK
        assert len(pd.read_csv(out)) == 4

    def test_checks_report(self, capsys):
        assert main(["checks"]) == EXIT_OK
        text = capsys.readouterr().out
        assert "✅ int_K1_eq_1" in text
        assert "✅ bandwidth_range" in text
        assert "✅ noise_moment_5" in text
        assert "Kernel constants" in text

    def test_checks_flags_heavy_tails(self, capsys):
        assert main(["checks", "--df", "4"]) == EXIT_OK
        assert "❌ noise_moment_5" in capsys.readouterr().out
