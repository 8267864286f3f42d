"""Tests for report tables, plots and preview strips"""

import csv

import numpy as np
import pytest

from facefit.optim.fitter import Schedule, fit_image
from facefit.optim.params import ParamVector
from facefit.optim.trainer import StudyRow, TrainingResult
from facefit.services import report
from facefit.services.result_store import load_result, save_result

from tests.conftest import IMAGE_SIZE


def _rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


@pytest.fixture
def fit_result(tiny_model, K, scene):
    _, image, lms = scene
    return fit_image(tiny_model, image, lms, K, Schedule(pretrain_iterations=3, finetune_iterations=2))


@pytest.fixture
def training(tiny_model):
    names = ["00000", "00001", "00002"]
    return TrainingResult(
        model=tiny_model, names=names, params=[ParamVector.zeros(tiny_model) for _ in names],
        base_errors=np.array([0.12, 0.08, np.nan]), final_errors=np.array([0.10, 0.07, np.nan]),
        skipped=["00002"],
        log=[{"step": 1, "epoch": 1, "mean_total": 0.5, "batch": ["00000", "00001"]}],
    )


class TestTrajectoryReport:

    def test_one_row_per_recorded_iteration(self, fit_result, tmp_path):
        rows = _rows(report.write_trajectory_csv(fit_result, tmp_path / "t.csv"))
        assert tuple(rows[0]) == report.TRAJECTORY_COLUMNS
        assert len(rows) == 1 + fit_result.iterations + 1
        assert [row[1] for row in rows[1:]] == ["pretrain"] * 4 + ["finetune"] * 2
        assert float(rows[-1][-1]) == fit_result.trajectory[-1].total

    def test_reloaded_result_writes_the_same_table(self, fit_result, tmp_path):
        save_result(fit_result, tmp_path / "result.json")
        report.write_trajectory_csv(fit_result, tmp_path / "a.csv")
        report.write_trajectory_csv(load_result(tmp_path / "result.json"), tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_report_fit_with_preview(self, fit_result, tiny_model, K, scene, tmp_path):
        _, image, _ = scene
        written = report.report_fit(fit_result, tmp_path / "out", tiny_model, image, K)
        assert set(written) == {"csv", "energy", "preview"}
        assert all(path.exists() for path in written.values())

    def test_report_fit_without_model(self, fit_result, tmp_path):
        assert set(report.report_fit(fit_result, tmp_path)) == {"csv", "energy"}


class TestPreviewStrip:

    def test_layout(self, fit_result, tiny_model, K, scene):
        _, image, _ = scene
        strip = report.preview_strip(tiny_model, fit_result.params, image, K)
        assert strip.shape == (IMAGE_SIZE, 5 * IMAGE_SIZE + 8, 3)
        np.testing.assert_array_equal(strip[:, :IMAGE_SIZE], image)
        np.testing.assert_array_equal(strip[:, IMAGE_SIZE:IMAGE_SIZE + 2], 1.0)
        assert np.isfinite(strip).all()


class TestErrorHistogram:

    def test_counts_cover_the_finite_errors(self):
        edges, base, final = report.error_histogram([0.1, 0.2, float("nan"), 0.3], [0.05, 0.15], bins=5)
        assert len(edges) == 6
        assert (edges[0], edges[-1]) == (0.05, 0.3)
        assert base.sum() == 3 and final.sum() == 2

    def test_identical_errors(self):
        edges, base, _ = report.error_histogram([0.2, 0.2], [0.2], bins=4)
        assert edges[-1] > edges[0]
        assert base.sum() == 2

    def test_no_errors(self):
        edges, base, final = report.error_histogram([], [float("nan")], bins=3)
        np.testing.assert_array_equal(edges, np.linspace(0.0, 1.0, 4))
        assert base.sum() == 0 and final.sum() == 0


class TestTrainingReport:

    def test_record(self, training):
        record = report.training_record(training)
        assert record["names"] == ["00000", "00001", "00002"]
        assert record["skipped"] == ["00002"]
        assert record["summary"]["base"]["count"] == 2
        assert record["summary"]["C"] == training.model.corrective_dim

    def test_files_from_result_and_record_match(self, training, tmp_path):
        from_result = report.report_training(training, tmp_path / "a", bins=4)
        from_record = report.report_training(report.training_record(training), tmp_path / "b", bins=4)
        assert set(from_result) == {"errors", "log", "histogram"}
        assert from_result["errors"].read_bytes() == from_record["errors"].read_bytes()
        assert from_result["log"].read_bytes() == from_record["log"].read_bytes()
        assert from_result["histogram"].exists()

    def test_error_table(self, training, tmp_path):
        rows = _rows(report.write_training_csv(report.training_record(training), tmp_path / "errors.csv"))
        assert rows[0] == ["image", "photo_base", "photo_final", "skipped"]
        assert rows[1] == ["00000", "0.12", "0.1", "0"]
        assert rows[3][3] == "1"

    def test_log_table(self, training, tmp_path):
        rows = _rows(report.write_training_log_csv(training.log, tmp_path / "log.csv"))
        assert rows[1] == ["1", "1", "0.5", "00000 00001"]


class TestStudyReport:

    def test_files(self, tmp_path):
        rows = [StudyRow("linear", 0, 3, 0.1, 0.01, 0.1, 0.01),
                StudyRow("linear", 2, 3, 0.1, 0.01, 0.08, 0.02),
                StudyRow("onenl", 2, 3, 0.1, 0.01, 0.07, 0.02)]
        written = report.report_study(rows, tmp_path)
        table = _rows(written["csv"])
        assert table[0] == ["variant", "C", "images", "base_mean", "base_sd", "final_mean", "final_sd"]
        assert table[3][:2] == ["onenl", "2"]
        assert written["plot"].exists()
