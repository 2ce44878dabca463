from __future__ import annotations

import json
import subprocess
import sys

import pytest
from click.testing import CliRunner

from panct.cli import cli
from panct.synthetic import generate_nifti_dataset


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthetic two-dataset workspace with a ready config file."""
    root = tmp_path_factory.mktemp("ws")
    nih = generate_nifti_dataset(root / "data", name="NIH", n_volumes=5, shape=(32, 32, 8), with_tumor=False, seed=61)
    msd = generate_nifti_dataset(root / "data", name="MSD", n_volumes=5, shape=(32, 32, 8), with_tumor=True, seed=62)
    config = {
        "datasets": {"NIH": nih, "MSD": msd},
        "output_dir": str(root / "out"),
        "split_seed": 7,
        "instruction_seed": 8,
        "backend": {"kind": "oracle", "seed": 1},
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, indent=2))
    return root, config_path


def run_cli(*args):
    return CliRunner().invoke(cli, [str(a) for a in args], catch_exceptions=False)


class TestIngest:
    def test_ingest_builds_catalog_and_pngs(self, workspace):
        root, config_path = workspace
        result = run_cli("ingest", "--config", config_path)
        assert result.exit_code == 0
        assert "NIH [pancreas]" in result.output
        assert "split_seed=7" in result.output
        catalog = json.loads((root / "out" / "catalog.json").read_text())
        assert catalog
        pngs = list((root / "out" / "png").rglob("*.png"))
        assert len(pngs) >= len(catalog) / 2
        names = {p.name for p in pngs}
        assert any(n.startswith("MSD_vol_") for n in names)

    def test_rerun_is_byte_identical(self, workspace):
        root, config_path = workspace
        first = (root / "out" / "catalog.json").read_bytes()
        result = run_cli("ingest", "--config", config_path)
        assert result.exit_code == 0
        assert (root / "out" / "catalog.json").read_bytes() == first


class TestBuildAndSweep:
    def test_build_stage(self, workspace):
        root, config_path = workspace
        result = run_cli("build", "--config", config_path, "--stage", "pancreas_detection", "--threshold", "0.3")
        assert result.exit_code == 0
        train = root / "out" / "datasets" / "pancreas_detection_t30_train.jsonl"
        assert train.exists()
        sample = json.loads(train.read_text().splitlines()[0])
        assert sample["task"] == "refer"
        assert sample["target_text"].startswith("{<")

    def test_sweep_counts_monotone(self, workspace):
        root, config_path = workspace
        result = run_cli("sweep", "--config", config_path, "--stage", "pancreas_detection")
        assert result.exit_code == 0
        lines = [l for l in result.output.splitlines() if l and l[0].isdigit()]
        assert len(lines) == 10
        train_counts = [int(line.split()[1]) + int(line.split()[3]) for line in lines]
        assert train_counts == sorted(train_counts, reverse=True)

    def test_manifest(self, workspace):
        root, config_path = workspace
        result = run_cli("manifest", "--config", config_path)
        assert result.exit_code == 0
        manifest = json.loads((root / "out" / "manifest.json").read_text())
        assert [s["name"] for s in manifest["stages"]] == [
            "pancreas_detection",
            "tumor_classification",
            "tumor_detection",
        ]


class TestEvaluate:
    def test_oracle_evaluation_is_perfect(self, workspace):
        root, config_path = workspace
        result = run_cli("evaluate", "--config", config_path, "--label", "oracle-run")
        assert result.exit_code == 0
        report = json.loads((root / "out" / "reports" / "oracle-run.json").read_text())
        assert report["weighted_iou"] == 1.0
        assert report["accuracy"] == 1.0
        assert (root / "out" / "reports" / "oracle-run_predictions.jsonl").exists()

    def test_predictions_file_replay(self, workspace):
        root, config_path = workspace
        predictions = root / "out" / "reports" / "oracle-run_predictions.jsonl"
        result = run_cli("evaluate", "--config", config_path, "--predictions", predictions, "--label", "replayed")
        assert result.exit_code == 0
        report = json.loads((root / "out" / "reports" / "replayed.json").read_text())
        assert report["weighted_iou"] == 1.0

    def test_multi_predictions_sweep_table(self, workspace):
        root, config_path = workspace
        predictions = root / "out" / "reports" / "oracle-run_predictions.jsonl"
        second = root / "out" / "reports" / "epoch_33.jsonl"
        second.write_bytes(predictions.read_bytes())
        result = run_cli(
            "evaluate", "--config", config_path, "--predictions", predictions, "--predictions", second
        )
        assert result.exit_code == 0
        rows = [l for l in result.output.splitlines() if l.startswith(("oracle-run_predictions", "epoch_33"))]
        assert len(rows) == 2
        assert (root / "out" / "reports" / "epoch_33.json").exists()

    def test_heatmap_outputs(self, workspace):
        root, config_path = workspace
        result = run_cli("heatmap", "--config", config_path, "--stage", "tumor_detection")
        assert result.exit_code == 0
        png = root / "out" / "reports" / "heatmap_tumor_detection.png"
        assert png.exists()
        grid = json.loads(png.with_suffix(".gt.json").read_text())
        assert grid["size"] == 101


class TestExitCodes:
    @staticmethod
    def _run(*args):
        return subprocess.run(
            [sys.executable, "-m", "panct.cli", *map(str, args)], capture_output=True, text=True
        )

    def test_bad_config_exits_two(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"datasets": {}, "output_dir": "out"}))
        proc = self._run("ingest", "--config", config)
        assert proc.returncode == 2

    def test_missing_dataset_root_exits_two(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(
            json.dumps(
                {
                    "datasets": {
                        "NIH": {"images_dir": "missing", "labels_dir": "missing", "label_map": {"pancreas": 1}}
                    },
                    "output_dir": "out",
                }
            )
        )
        proc = self._run("ingest", "--config", config)
        assert proc.returncode == 2

    def test_empty_stage_exits_four(self, tmp_path):
        # healthy-only dataset: the tumor-detection filter removes everything
        nih = generate_nifti_dataset(tmp_path / "data", name="NIH", n_volumes=3, shape=(24, 24, 6), with_tumor=False, seed=71)
        config = tmp_path / "nih_only.json"
        config.write_text(json.dumps({"datasets": {"NIH": nih}, "output_dir": str(tmp_path / "out")}))
        assert self._run("ingest", "--config", config).returncode == 0
        proc = self._run("build", "--config", config, "--stage", "tumor_detection")
        assert proc.returncode == 4
        assert "tumor_detection" in proc.stderr
