import json

import numpy as np
import pytest

from linattn.cli import main
from linattn.reports import load_matrix_csv


def write_config(tmp_path, **overrides):
    cfg = {
        "dataset": {"source": "spectrum", "n": 16, "d": 32, "seed": 3,
                    "n_test": 4, "kappa": 64.0},
        "architecture": "relu2l",
        "train": {"epochs": 4, "batch_size": 8, "seed": 3, "width": 8},
        "lambda": 1e-3,
    }
    cfg.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def read_report(out_dir):
    with open(out_dir / "report.json") as fh:
        return json.load(fh)


class TestExitCodes:
    def test_unknown_top_level_key_is_validation_error(self, tmp_path):
        path = write_config(tmp_path, bogus=1)
        out = tmp_path / "out"
        assert main(["gen-data", "--config", str(path), "--out", str(out)]) == 1
        assert not out.exists()

    def test_unknown_nested_key(self, tmp_path):
        path = write_config(tmp_path, train={"epochs": 2, "warmup": 5})
        out = tmp_path / "out"
        assert main(["train", "--config", str(path), "--out", str(out)]) == 1
        assert not out.exists()

    def test_missing_config_file(self, tmp_path):
        assert main(["gen-data", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o")]) == 1

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{oops")
        assert main(["gen-data", "--config", str(path), "--out", str(tmp_path / "o")]) == 1

    def test_success(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["gen-data", "--config", str(path), "--out", str(out)]) == 0
        assert (out / "train.csv").exists()
        assert (out / "report.json").exists()

    def test_threads_flag(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "out-threads"
        assert main(["gen-data", "--config", str(path), "--out", str(out),
                     "--threads", "1"]) == 0


class TestSpectralCheck:
    def test_orthonormal_data_reports_unit_kappa(self, tmp_path):
        path = write_config(
            tmp_path,
            dataset={"source": "spectrum", "n": 8, "d": 8, "seed": 1, "n_test": 2,
                     "singular_values": [1.0] * 8},
        )
        out = tmp_path / "out"
        assert main(["spectral-check", "--config", str(path), "--out", str(out)]) == 0
        report = read_report(out)
        cond = report["stages"]["spectral_check"]["conditioning"]
        assert cond["kappa_G"] == pytest.approx(1.0, abs=1e-9)
        assert cond["relative_error"] < 1e-9


class TestNTKSweep:
    def test_curve_length_matches_widths(self, tmp_path):
        path = write_config(tmp_path, widths=[4, 8, 16])
        out = tmp_path / "out"
        assert main(["ntk-sweep", "--config", str(path), "--out", str(out)]) == 0
        with open(out / "curve.json") as fh:
            records = json.load(fh)
        assert len(records) == 3
        assert [r["width"] for r in records] == [4, 8, 16]

    def test_nonascending_widths_rejected(self, tmp_path):
        path = write_config(tmp_path, widths=[8, 4])
        assert main(["ntk-sweep", "--config", str(path), "--out",
                     str(tmp_path / "o")]) == 1


class TestDeterminism:
    def test_rerun_byte_identical(self, tmp_path):
        path = write_config(
            tmp_path,
            attack={"eps": 0.1, "alpha": 0.05, "iters": 3, "kind": "pgd"},
            malleability={"tau": 0.25},
        )
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["malleability", "--config", str(path), "--out", str(out)]) == 0
            outs.append(out)
        for fname in ("report.json", "malleability.json", "flips.csv"):
            assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()

    def test_seed_override_changes_data(self, tmp_path):
        path = write_config(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["gen-data", "--config", str(path), "--out", str(a), "--seed", "5"]) == 0
        assert main(["gen-data", "--config", str(path), "--out", str(b), "--seed", "6"]) == 0
        assert (a / "train.csv").read_bytes() != (b / "train.csv").read_bytes()

    def test_report_echoes_config(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["gen-data", "--config", str(path), "--out", str(out)]) == 0
        report = read_report(out)
        assert report["config"]["dataset"]["n"] == 16
        assert "config_sha256" in report


class TestKernelCommand:
    def test_kernel_csv_roundtrip(self, tmp_path):
        path = write_config(tmp_path, kernel={"kind": "attention"})
        out = tmp_path / "out"
        assert main(["kernel", "--config", str(path), "--out", str(out)]) == 0
        K = load_matrix_csv(out / "kernel.csv")
        assert K.shape == (16, 16)
        np.testing.assert_allclose(K, K.T, atol=1e-12)
        report = read_report(out)
        assert report["stages"]["kernel"]["stability"]["passed"] is True

    def test_unknown_kind_rejected(self, tmp_path):
        path = write_config(tmp_path, kernel={"kind": "rbf"})
        assert main(["kernel", "--config", str(path), "--out", str(tmp_path / "o")]) == 1


class TestAttackCommand:
    def test_budget_respected(self, tmp_path):
        path = write_config(
            tmp_path, attack={"eps": 0.05, "alpha": 0.02, "iters": 4, "kind": "mim"}
        )
        out = tmp_path / "out"
        assert main(["attack", "--config", str(path), "--out", str(out)]) == 0
        report = read_report(out)
        assert report["stages"]["attack"]["budget_respected"] is True
        assert report["stages"]["attack"]["max_linf_change"] <= 0.05 + 1e-12


class TestInterveneCommand:
    def test_curated_shrinks_dataset(self, tmp_path):
        path = write_config(
            tmp_path,
            attack={"eps": 0.05, "alpha": 0.02, "iters": 3, "kind": "pgd"},
            malleability={"tau": 0.25},
            intervention={"kind": "curated"},
        )
        out = tmp_path / "out"
        assert main(["intervene", "--config", str(path), "--out", str(out)]) == 0
        report = read_report(out)
        stage = report["stages"]["intervene"]
        assert stage["n_after"] == stage["n_before"] - stage["n_selected"]


@pytest.mark.slow
class TestReproduceCommand:
    def test_table2_desk(self, tmp_path):
        out = tmp_path / "rep"
        assert main(["reproduce", "table2-desk", "--out", str(out)]) == 0
        with open(out / "summary.json") as fh:
            summary = json.load(fh)
        assert summary["passed"] is True
        assert (out / "table2.csv").exists()


class TestLandscapeCommand:
    def test_grid_output(self, tmp_path):
        path = write_config(tmp_path, landscape={"radius": 0.2, "grid": 5})
        out = tmp_path / "out"
        assert main(["landscape", "--config", str(path), "--out", str(out)]) == 0
        surface = load_matrix_csv(out / "landscape.csv")
        assert surface.shape == (5, 5)
        report = read_report(out)
        assert report["stages"]["landscape"]["center_loss"] == pytest.approx(
            surface[2, 2]
        )
