import json
from pathlib import Path

import numpy as np
import pytest

from mfcim.cli import main


def read(out_dir, name):
    return (Path(out_dir) / name).read_text()


class TestSweepCommand:
    def test_grid_cardinality(self, tmp_path):
        assert main(["sweep", "--wp", "1..8", "--ap", "1..5",
                     "--out", str(tmp_path), "--workers", "1"]) == 0
        lines = read(tmp_path, "sweep.csv").strip().split("\n")
        assert len(lines) == 41  # header + 8*5 points
        assert lines[0].startswith("W_P,A_P,cycles")

    def test_manifest_written(self, tmp_path):
        main(["sweep", "--wp", "1..2", "--ap", "1..2", "--out", str(tmp_path),
              "--workers", "1"])
        manifest = json.loads(read(tmp_path, "manifest.json"))
        assert manifest["command"] == "sweep"
        assert "sweep.csv" in manifest["outputs"]
        assert "mfcim" in manifest["versions"]

    def test_spot_cycle_values(self, tmp_path):
        main(["sweep", "--wp", "8", "--ap", "5", "--out", str(tmp_path),
              "--workers", "1"])
        row = read(tmp_path, "sweep.csv").strip().split("\n")[1].split(",")
        assert row[:3] == ["8", "5", "88"]


class TestMonteCarloCommand:
    def test_zero_sigma_rows_are_zero(self, tmp_path):
        assert main(["montecarlo", "--sigma", "0", "--m", "31", "--trials",
                     "2000", "--seed", "3", "--out", str(tmp_path),
                     "--workers", "1"]) == 0
        lines = read(tmp_path, "montecarlo.csv").strip().split("\n")
        assert lines[0] == ("sigma_rel,M,discard_fraction,trials,P_F,"
                            "CI_low,CI_high,seed")
        assert lines[1].split(",")[4] == "0"

    def test_byte_identical_reruns(self, tmp_path):
        args = ["montecarlo", "--sigma", "0.02,0.04", "--m", "15,31",
                "--trials", "2000", "--seed", "9", "--workers", "1"]
        main(args + ["--out", str(tmp_path / "a")])
        main(args + ["--out", str(tmp_path / "b")])
        assert read(tmp_path / "a", "montecarlo.csv") == \
            read(tmp_path / "b", "montecarlo.csv")

    def test_worker_count_does_not_change_results(self, tmp_path):
        base = ["montecarlo", "--sigma", "0.02,0.04", "--m", "15,31",
                "--trials", "1000", "--seed", "5"]
        main(base + ["--workers", "1", "--out", str(tmp_path / "w1")])
        main(base + ["--workers", "2", "--out", str(tmp_path / "w2")])
        assert read(tmp_path / "w1", "montecarlo.csv") == \
            read(tmp_path / "w2", "montecarlo.csv")

    def test_percent_convention(self, tmp_path):
        main(["montecarlo", "--sigma", "12", "--sigma-is-percent", "--m", "31",
              "--trials", "1000", "--seed", "1", "--out", str(tmp_path),
              "--workers", "1"])
        first = read(tmp_path, "montecarlo.csv").strip().split("\n")[1]
        assert first.startswith("0.04,31")


class TestMapCommand:
    def test_cifar10_report(self, tmp_path):
        assert main(["map", "--network", "cifar10_cnn",
                     "--out", str(tmp_path)]) == 0
        report = json.loads(read(tmp_path, "mapping.json"))
        assert report["f_ops_cim"] >= 0.85
        assert report["f_weights_cim"] <= 0.45
        assert report["columns_per_half"] == 31

    def test_config_file_network(self, tmp_path):
        spec = {
            "layers": [
                {"kind": "dense", "name": "fc", "in_dim": 16, "out_dim": 4},
            ],
            "input_shape": 16,
            "overrides": {"fc": "cim"},
        }
        cfg = tmp_path / "net.json"
        cfg.write_text(json.dumps(spec))
        assert main(["map", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        report = json.loads(read(tmp_path, "mapping.json"))
        assert report["f_ops_cim"] == 1.0

    def test_unknown_network_fails(self, tmp_path, capsys):
        assert main(["map", "--network", "alexnet",
                     "--out", str(tmp_path)]) == 1
        assert "error" in capsys.readouterr().err


class TestCalibrateCommand:
    def test_report_fields(self, tmp_path):
        assert main(["calibrate", "--instances", "500", "--trials", "400",
                     "--seed", "2", "--out", str(tmp_path),
                     "--workers", "1"]) == 0
        report = json.loads(read(tmp_path, "calibrate.json"))
        assert report["column_audit"]["cycles_min"] >= 1
        cal = report["comparator_calibration"]
        assert cal["fraction_within_12mV"] >= 0.97
        assert cal["calibration_bits"] == 2


class TestTrainEvalSim:
    @pytest.fixture(scope="class")
    def trained_dir(self, tmp_path_factory):
        out = tmp_path_factory.mktemp("train")
        code = main(["train", "--epochs", "1", "--hidden", "32", "--seed", "0",
                     "--no-augment", "--out", str(out)])
        assert code == 0
        return out

    def test_train_artifacts(self, trained_dir):
        assert (trained_dir / "model.ckpt").exists()
        curve = read(trained_dir, "curve.csv").strip().split("\n")
        assert curve[0] == "epoch,loss,train_acc,test_acc"
        assert len(curve) == 2

    def test_eval_reports_accuracy(self, trained_dir, tmp_path):
        assert main(["eval", "--model", str(trained_dir / "model.ckpt"),
                     "--out", str(tmp_path)]) == 0
        report = json.loads(read(tmp_path, "eval.json"))
        assert 0.0 <= report["accuracy"] <= 1.0

    def test_sim_lossless_bit_exact(self, trained_dir, tmp_path):
        assert main(["sim", "--model", str(trained_dir / "model.ckpt"),
                     "--lossless", "--images", "16",
                     "--out", str(tmp_path)]) == 0
        report = json.loads(read(tmp_path, "sim_report.json"))
        assert report["bit_exact"] is True
        assert report["trace_sample"]["value"] == \
            report["trace_sample"]["functional"]
        trace = read(tmp_path, "trace.csv").strip().split("\n")
        assert trace[0] == "phase,plane,k,v,code,k_hat,compute_cycles"

    def test_sim_lossy_not_bit_exact(self, trained_dir, tmp_path):
        main(["sim", "--model", str(trained_dir / "model.ckpt"),
              "--ap", "2", "--images", "16", "--out", str(tmp_path)])
        report = json.loads(read(tmp_path, "sim_report.json"))
        assert report["bit_exact"] is False


class TestErrorSurface:
    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["sweep", "--bogus", "1"])
        assert exc.value.code == 2

    def test_missing_model_file(self, tmp_path, capsys):
        assert main(["eval", "--model", str(tmp_path / "absent.ckpt"),
                     "--out", str(tmp_path)]) == 1
        assert "error" in capsys.readouterr().err

    def test_config_file_defaults(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"sweep": {"wp": "1..2", "ap": "1..2"}}))
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path),
                     "--workers", "1"]) == 0
        lines = read(tmp_path, "sweep.csv").strip().split("\n")
        assert len(lines) == 5
