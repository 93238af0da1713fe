from __future__ import annotations

import json

import numpy as np
import pytest

from pclv import (LabelImage, PointCloud, evaluate_pair, load_labels,
                  load_label_image, load_ply, write_ply)
from pclv.cli import main

from _scenes import corner_scene
from conftest import write_depth_png, write_label_png, write_rgb_png


@pytest.fixture
def rgbd(tmp_path):
    scene = corner_scene(seed=11)
    write_depth_png(tmp_path / "depth.png", scene.depth)
    write_rgb_png(tmp_path / "rgb.png", scene.rgb)
    write_label_png(tmp_path / "gt.png", scene.gt.labels)
    intr = scene.intrinsics
    (tmp_path / "intr.txt").write_text(
        f"{intr.fx} {intr.fy} {intr.cx} {intr.cy} {intr.depth_scale}\n"
    )
    return tmp_path, scene


def _segment_args(tmp_path, *extra):
    return [
        "segment",
        "--depth", str(tmp_path / "depth.png"),
        "--rgb", str(tmp_path / "rgb.png"),
        "--intrinsics", str(tmp_path / "intr.txt"),
        "--graph", "grid8",
        *extra,
    ]


class TestSegmentCommand:
    def test_config_file_run(self, rgbd, capsys):
        tmp_path, _ = rgbd
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            f"depth = {tmp_path / 'depth.png'}\n"
            f"rgb = {tmp_path / 'rgb.png'}\n"
            f"intrinsics = {tmp_path / 'intr.txt'}\n"
            "graph = grid8\n"
            "preset = lv\n"
            "delta = 0.2\n"
            f"out_labels = {tmp_path / 'labels.txt'}\n"
        )
        code = main(["segment", "--config", str(cfg)])
        out = capsys.readouterr().out
        assert code == 0
        assert (tmp_path / "labels.txt").exists()
        assert any(line.startswith("segments=") for line in out.splitlines())

    def test_missing_input_names_path(self, tmp_path, capsys):
        code = main(_segment_args(tmp_path, "--delta", "0.1"))
        err = capsys.readouterr().err
        assert code == 2
        assert "depth.png" in err

    def test_target_segments_records_delta(self, rgbd, tmp_path, capsys):
        files, _ = rgbd
        meta = tmp_path / "meta.json"
        labels_a = tmp_path / "a.txt"
        code = main(_segment_args(
            files, "--preset", "pclv", "--target-segments", "80",
            "--out-labels", str(labels_a), "--out-meta", str(meta)))
        assert code == 0
        payload = json.loads(meta.read_text())
        assert payload["config"]["delta"] == payload["delta"] > 0
        # replaying the recorded config reproduces the labels exactly
        cfg = tmp_path / "replay.cfg"
        echo = payload["config"]
        lines = [f"{k} = {v}" for k, v in echo.items()
                 if v is not None and k not in ("modalities", "coefficients",
                                                "out_labels", "out_meta")]
        lines.append("modalities = " + ",".join(echo["modalities"]))
        labels_b = tmp_path / "b.txt"
        lines.append(f"out_labels = {labels_b}")
        cfg.write_text("\n".join(lines) + "\n")
        assert main(["segment", "--config", str(cfg)]) == 0
        assert labels_a.read_bytes() == labels_b.read_bytes()

    def test_unknown_flag_is_usage_error(self, rgbd):
        files, _ = rgbd
        assert main(_segment_args(files, "--delta", "0.1", "--bogus")) == 1

    def test_unknown_subcommand_is_usage_error(self):
        assert main(["paint"]) == 1


class TestEvalCommand:
    def test_identical_images(self, tmp_path, capsys, rng):
        labels = rng.integers(0, 6, size=(24, 24))
        write_label_png(tmp_path / "gt.png", labels)
        write_label_png(tmp_path / "pred.png", labels)
        code = main(["eval", "--pred", str(tmp_path / "pred.png"),
                     "--gt", str(tmp_path / "gt.png")])
        out = capsys.readouterr().out
        assert code == 0
        assert "BR=1.0 UE=0.0" in out

    def test_matches_library_metrics(self, tmp_path, capsys, rng):
        gt = rng.integers(0, 4, size=(20, 20))
        pred = rng.integers(0, 7, size=(20, 20))
        write_label_png(tmp_path / "gt.png", gt)
        write_label_png(tmp_path / "pred.png", pred)
        code = main(["eval", "--pred", str(tmp_path / "pred.png"),
                     "--gt", str(tmp_path / "gt.png"),
                     "--out-csv", str(tmp_path / "m.csv")])
        out = capsys.readouterr().out
        assert code == 0
        scores = evaluate_pair(LabelImage(gt.astype(np.int64)),
                               LabelImage(pred.astype(np.int64)), d=2.0)
        assert f"BR={scores['boundary_recall']!r}" in out
        assert f"UE={scores['under_seg_error']!r}" in out
        assert f"N={scores['n_gt_segments']}" in out
        assert (tmp_path / "m.csv").read_text().count("\n") == 2

    def test_dimension_mismatch_is_runtime_error(self, tmp_path, rng):
        write_label_png(tmp_path / "gt.png", rng.integers(0, 3, size=(10, 10)))
        write_label_png(tmp_path / "pred.png", rng.integers(0, 3, size=(10, 12)))
        assert main(["eval", "--pred", str(tmp_path / "pred.png"),
                     "--gt", str(tmp_path / "gt.png")]) == 2

    def test_default_distance_is_two(self, tmp_path, capsys):
        gt = np.zeros((12, 12), np.int64)
        gt[:, 6:] = 1
        pred = np.zeros((12, 12), np.int64)
        pred[:, 8:] = 1  # borders 2 px apart: hits at d=2, misses at d=1
        write_label_png(tmp_path / "gt.png", gt)
        write_label_png(tmp_path / "pred.png", pred)
        main(["eval", "--pred", str(tmp_path / "pred.png"),
              "--gt", str(tmp_path / "gt.png")])
        default_out = capsys.readouterr().out
        main(["eval", "--pred", str(tmp_path / "pred.png"),
              "--gt", str(tmp_path / "gt.png"), "--d", "1"])
        tight_out = capsys.readouterr().out
        assert "BR=1.0" in default_out
        assert "BR=0.5" in tight_out


class TestSweepCommand:
    def test_curve_csv_deterministic(self, rgbd, tmp_path, capsys):
        files, _ = rgbd
        args = [
            "sweep",
            "--depth", str(files / "depth.png"),
            "--rgb", str(files / "rgb.png"),
            "--intrinsics", str(files / "intr.txt"),
            "--graph", "grid8",
            "--preset", "lv",
            "--gt", str(files / "gt.png"),
            "--targets", "60,90",
            "--out-csv", str(tmp_path / "c1.csv"),
        ]
        assert main(args) == 0
        out1 = capsys.readouterr().out
        args[-1] = str(tmp_path / "c2.csv")
        assert main(args) == 0
        assert (tmp_path / "c1.csv").read_bytes() == (tmp_path / "c2.csv").read_bytes()
        assert "target=60" in out1 and "target=90" in out1

    def test_empty_targets_usage_error(self, rgbd):
        files, _ = rgbd
        assert main(["sweep", "--depth", str(files / "depth.png"),
                     "--rgb", str(files / "rgb.png"),
                     "--gt", str(files / "gt.png"),
                     "--targets", ""]) == 1

    def test_bad_targets_usage_error(self, rgbd):
        files, _ = rgbd
        assert main(["sweep", "--depth", str(files / "depth.png"),
                     "--rgb", str(files / "rgb.png"),
                     "--gt", str(files / "gt.png"),
                     "--targets", "a,b"]) == 1


class TestConvertCommand:
    def test_rgbd_to_ply_then_segment_matches_direct(self, rgbd, tmp_path, capsys):
        files, _ = rgbd
        ply = tmp_path / "cloud.ply"
        assert main(["convert", "--depth", str(files / "depth.png"),
                     "--rgb", str(files / "rgb.png"),
                     "--intrinsics", str(files / "intr.txt"),
                     "--out-ply", str(ply)]) == 0
        capsys.readouterr()
        # same cloud, same knn graph: direct RGB-D run equals PLY run
        labels_direct = tmp_path / "direct.txt"
        labels_via = tmp_path / "via.txt"
        base = ["--graph", "knn", "--k", "6", "--preset", "lv",
                "--delta", "0.2", "--unsigned-normals"]
        assert main(_segment_args(files, *base, "--out-labels",
                                  str(labels_direct))) == 0
        assert main(["segment", "--ply", str(ply), *base,
                     "--out-labels", str(labels_via)]) == 0
        a = load_labels(labels_direct)
        b = load_labels(labels_via)
        assert np.array_equal(a, b)

    def test_labels_to_colorized_ply(self, tmp_path, rng, capsys):
        cloud = PointCloud(positions=rng.random((30, 3)))
        write_ply(cloud, tmp_path / "in.ply")
        labels = np.repeat(np.arange(3), 10)
        with open(tmp_path / "labels.txt", "w") as f:
            for i, lab in enumerate(labels):
                f.write(f"{i} {lab}\n")
        assert main(["convert", "--ply", str(tmp_path / "in.ply"),
                     "--labels", str(tmp_path / "labels.txt"),
                     "--out-ply", str(tmp_path / "colored.ply")]) == 0
        colored = load_ply(tmp_path / "colored.ply")
        assert len(np.unique(colored.colors, axis=0)) == 3

    def test_bad_intrinsics_file(self, rgbd, tmp_path):
        files, _ = rgbd
        bad = tmp_path / "intr.txt"
        bad.write_text("1 2 3\n")
        assert main(["convert", "--depth", str(files / "depth.png"),
                     "--rgb", str(files / "rgb.png"),
                     "--intrinsics", str(bad),
                     "--out-ply", str(tmp_path / "x.ply")]) == 2

    def test_missing_out_ply_usage_error(self, rgbd):
        files, _ = rgbd
        assert main(["convert", "--depth", str(files / "depth.png"),
                     "--rgb", str(files / "rgb.png")]) == 1
