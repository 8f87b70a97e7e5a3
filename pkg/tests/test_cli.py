"""End-to-end command tests against the tiny committed inputs.

Golden outputs live in tests/data/golden and were produced by
tests/data/regen.py; the byte comparisons pin both numerics and the PFM
encoding. Commands run in-process through main() so exit codes and
stderr text are asserted directly.
"""

import json
import os
import pathlib

import numpy as np
import pytest

from nirfuse.attnfuse import build_model_tensors, write_weight_file
from nirfuse.cli import main
from nirfuse.fileio import load_image, read_pfm

DATA = pathlib.Path(__file__).parent / "data"
GOLDEN = DATA / "golden"


def report_dict(capsys):
    out = {}
    for line in capsys.readouterr().out.splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            out[key] = value
    return out


def assert_same_bytes(produced: pathlib.Path, golden: pathlib.Path):
    assert produced.read_bytes() == golden.read_bytes(), (
        f"{produced.name} differs from golden {golden}")


class TestFuseCommand:
    @pytest.mark.parametrize("method", ["hsv", "ycbcr"])
    def test_matches_golden_bytes(self, tmp_path, method):
        out = tmp_path / "fused.pfm"
        code = main(["fuse", str(DATA / "rgb.png"), str(DATA / "nir.png"),
                     "--method", method, "-o", str(out)])
        assert code == 0
        assert_same_bytes(out, GOLDEN / f"fused_{method}.pfm")

    def test_alpha_one_beta_zero_is_identity(self, tmp_path):
        out = tmp_path / "fused.png"
        code = main(["fuse", str(DATA / "rgb.png"), str(DATA / "nir.png"),
                     "--alpha", "1", "--beta", "0", "-o", str(out)])
        assert code == 0
        fused = load_image(str(out))
        original = load_image(str(DATA / "rgb.png"))
        # value channel is untouched, so the 8-bit round trip is exact
        np.testing.assert_array_equal(fused.data, original.data)

    @pytest.mark.parametrize("method", ["hsv-weighted", "adaptive", "guided",
                                        "bayesian"])
    def test_other_methods_run(self, tmp_path, method):
        out = tmp_path / "fused.pfm"
        code = main(["fuse", str(DATA / "rgb.png"), str(DATA / "nir.png"),
                     "--method", method, "-o", str(out)])
        assert code == 0
        img = read_pfm(str(out))
        assert np.isfinite(img.data).all()

    def test_learned_method_with_weight_file(self, tmp_path):
        weights = tmp_path / "model.nfw"
        write_weight_file(str(weights), build_model_tensors())
        out = tmp_path / "fused.pfm"
        code = main(["fuse", str(DATA / "rgb.png"), str(DATA / "nir.png"),
                     "--method", "learned", "--weights", str(weights),
                     "-o", str(out)])
        assert code == 0
        assert np.isfinite(read_pfm(str(out)).data).all()

    def test_learned_without_weights_is_usage_error(self, tmp_path, capsys):
        code = main(["fuse", str(DATA / "rgb.png"), str(DATA / "nir.png"),
                     "--method", "learned", "-o", str(tmp_path / "f.pfm")])
        assert code == 2
        assert "--weights" in capsys.readouterr().err

    def test_unknown_method_lists_choices(self, tmp_path, capsys):
        code = main(["fuse", str(DATA / "rgb.png"), str(DATA / "nir.png"),
                     "--method", "sparkle", "-o", str(tmp_path / "f.pfm")])
        assert code == 2
        err = capsys.readouterr().err
        assert "sparkle" in err and "hsv" in err

    def test_missing_input_is_io_error(self, tmp_path, capsys):
        code = main(["fuse", str(tmp_path / "nope.png"), str(DATA / "nir.png"),
                     "-o", str(tmp_path / "f.pfm")])
        assert code == 3
        assert capsys.readouterr().err.strip()

    def test_sixteen_bit_png_output(self, tmp_path):
        out = tmp_path / "fused.png"
        code = main(["fuse", str(DATA / "rgb.png"), str(DATA / "nir.png"),
                     "--bit-depth", "16", "-o", str(out)])
        assert code == 0
        assert load_image(str(out)).channels == 3

    def test_threads_must_be_positive(self, tmp_path, capsys):
        code = main(["fuse", str(DATA / "rgb.png"), str(DATA / "nir.png"),
                     "-o", str(tmp_path / "f.pfm"), "--threads", "0"])
        assert code == 2


class TestSynthCommand:
    def test_matches_golden_bytes(self, tmp_path):
        code = main(["synth", str(DATA / "scene.json"), str(tmp_path)])
        assert code == 0
        assert_same_bytes(tmp_path / "rgb_left.pfm",
                          GOLDEN / "synth" / "rgb_left.pfm")
        assert_same_bytes(tmp_path / "disparity.pfm",
                          GOLDEN / "synth" / "disparity.pfm")

    def test_thread_count_does_not_change_output(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["synth", str(DATA / "scene.json"), str(a),
                     "--threads", "1"]) == 0
        assert main(["synth", str(DATA / "scene.json"), str(b),
                     "--threads", "4"]) == 0
        for name in ("rgb_left", "rgb_right", "nir_left", "nir_right",
                     "disparity", "valid_mask"):
            assert_same_bytes(a / f"{name}.pfm", b / f"{name}.pfm")

    def test_zero_baseline_views_are_identical(self, tmp_path):
        spec = json.loads((DATA / "scene.json").read_text())
        spec["baseline"] = 0.0
        spec["depth"] = str(DATA / "depth.pfm")
        spec["albedo"] = str(DATA / "albedo.png")
        spec["sensor"]["noise_sigma_pre"] = 0.01
        spec["sensor"]["noise_sigma_post"] = 0.005
        scene = tmp_path / "scene.json"
        scene.write_text(json.dumps(spec))
        out = tmp_path / "render"
        assert main(["synth", str(scene), str(out)]) == 0
        assert_same_bytes(out / "rgb_left.pfm", out / "rgb_right.pfm")
        assert_same_bytes(out / "nir_left.pfm", out / "nir_right.pfm")

    def test_seed_override_is_reported(self, tmp_path, capsys):
        assert main(["synth", str(DATA / "scene.json"), str(tmp_path),
                     "--seed", "123"]) == 0
        assert report_dict(capsys)["seed"] == "123"

    def test_missing_scene_is_io_error(self, tmp_path, capsys):
        code = main(["synth", str(tmp_path / "none.json"), str(tmp_path)])
        assert code == 3

    def test_missing_depth_map_is_io_error(self, tmp_path, capsys):
        spec = json.loads((DATA / "scene.json").read_text())
        spec["albedo"] = str(DATA / "albedo.png")
        spec["depth"] = "missing.pfm"
        scene = tmp_path / "scene.json"
        scene.write_text(json.dumps(spec))
        assert main(["synth", str(scene), str(tmp_path / "out")]) == 3

    def test_unsupported_version_is_io_error(self, tmp_path, capsys):
        spec = json.loads((DATA / "scene.json").read_text())
        spec["version"] = 2
        scene = tmp_path / "scene.json"
        scene.write_text(json.dumps(spec))
        code = main(["synth", str(scene), str(tmp_path / "out")])
        assert code == 3
        assert "version" in capsys.readouterr().err


class TestLidarCommand:
    def test_matches_golden_bytes(self, tmp_path, capsys):
        code = main(["lidar", str(DATA / "points.txt"), str(DATA / "camera.json"),
                     str(tmp_path), "--refine"])
        assert code == 0
        report = report_dict(capsys)
        assert report["alpha"] == "0.75" and report["beta"] == "0.85"
        assert report["points_kept"] == "24"
        assert_same_bytes(tmp_path / "points.txt", GOLDEN / "lidar" / "points.txt")
        for name in ("disparity", "valid_mask", "occlusion_mask"):
            assert_same_bytes(tmp_path / f"{name}.pfm",
                              GOLDEN / "lidar" / f"{name}.pfm")

    def test_without_refine_keeps_stray_point(self, tmp_path, capsys):
        code = main(["lidar", str(DATA / "points.txt"), str(DATA / "camera.json"),
                     str(tmp_path)])
        assert code == 0
        assert report_dict(capsys)["points_kept"] == "25"

    def test_empty_cloud_warns_and_succeeds(self, tmp_path, capsys):
        code = main(["lidar", str(DATA / "empty_points.txt"),
                     str(DATA / "camera.json"), str(tmp_path)])
        assert code == 0
        assert "no points" in capsys.readouterr().err
        disparity = read_pfm(str(tmp_path / "disparity.pfm"))
        assert (disparity.data == 0).all()

    def test_missing_cloud_is_io_error(self, tmp_path):
        code = main(["lidar", str(tmp_path / "none.txt"),
                     str(DATA / "camera.json"), str(tmp_path)])
        assert code == 3


class TestDepthCommand:
    def test_matches_golden_bytes(self, tmp_path):
        out = tmp_path / "disparity.pfm"
        code = main(["depth", str(DATA / "left.pfm"), str(DATA / "right.pfm"),
                     "--features", "intensity+grad", "--max-disp", "8",
                     "-o", str(out)])
        assert code == 0
        assert_same_bytes(out, GOLDEN / "depth_disparity.pfm")

    def test_recovers_known_shift(self, tmp_path):
        out = tmp_path / "disparity.pfm"
        code = main(["depth", str(DATA / "left.pfm"), str(DATA / "right.pfm"),
                     "--max-disp", "8", "-o", str(out)])
        assert code == 0
        d = read_pfm(str(out)).data[0]
        # columns left of the shift have no true counterpart
        hit = np.abs(d[:, 3:] - 3.0) <= 0.5
        assert hit.mean() > 0.8

    def test_max_disp_at_width_is_usage_error(self, tmp_path, capsys):
        code = main(["depth", str(DATA / "left.pfm"), str(DATA / "right.pfm"),
                     "--max-disp", "32", "-o", str(tmp_path / "d.pfm")])
        assert code == 2

    def test_scheduled_pair_must_be_supplied(self, tmp_path, capsys):
        code = main(["depth", str(DATA / "left.pfm"), str(DATA / "right.pfm"),
                     "--schedule", "fusion,nir", "--max-disp", "8",
                     "-o", str(tmp_path / "d.pfm")])
        assert code == 2
        assert "nir" in capsys.readouterr().err

    def test_multi_volume_schedule_runs(self, tmp_path):
        code = main(["depth", str(DATA / "left.pfm"), str(DATA / "right.pfm"),
                     "--nir-left", str(DATA / "left.pfm"),
                     "--nir-right", str(DATA / "right.pfm"),
                     "--schedule", "fusion,nir", "--rounds", "2",
                     "--max-disp", "8", "-o", str(tmp_path / "d.pfm")])
        assert code == 0

    def test_encoder_features_need_weights(self, tmp_path, capsys):
        code = main(["depth", str(DATA / "left.pfm"), str(DATA / "right.pfm"),
                     "--features", "encoder", "--max-disp", "8",
                     "-o", str(tmp_path / "d.pfm")])
        assert code == 2


class TestEvalCommand:
    def test_perfect_depth_prediction(self, tmp_path, capsys):
        code = main(["eval", str(DATA / "depth.pfm"), str(DATA / "depth.pfm"),
                     "--kind", "depth"])
        assert code == 0
        report = report_dict(capsys)
        assert report["mae"] == "0" and report["rmse"] == "0"
        assert report["delta1"] == report["delta2"] == report["delta3"] == "1"

    def test_perfect_disparity_prediction(self, capsys):
        code = main(["eval", str(GOLDEN / "depth_disparity.pfm"),
                     str(GOLDEN / "depth_disparity.pfm")])
        assert code == 0
        report = report_dict(capsys)
        assert report["under1px"] == report["under5px"] == "1"

    def test_image_kind_reports_ssim(self, capsys):
        code = main(["eval", str(DATA / "nir.png"), str(DATA / "nir.png"),
                     "--kind", "image"])
        assert code == 0
        report = report_dict(capsys)
        assert report["ssim"] == "1" and report["photometric"] == "0"

    def test_json_report(self, tmp_path):
        out = tmp_path / "report.json"
        code = main(["eval", str(DATA / "depth.pfm"), str(DATA / "depth.pfm"),
                     "--kind", "depth", "--json", str(out)])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["mae"] == 0.0 and payload["delta1"] == 1.0

    def test_size_mismatch_is_usage_error(self, capsys):
        code = main(["eval", str(DATA / "depth.pfm"),
                     str(DATA / "left.pfm")])
        assert code == 2

    def test_mask_narrows_the_comparison(self, tmp_path, capsys):
        pred = read_pfm(str(DATA / "depth.pfm"))
        mask = np.zeros((pred.height, pred.width), dtype=np.float64)
        mask[0, :4] = 1.0
        from nirfuse.fileio import write_pfm
        from nirfuse.image import Image, ImageKind
        mask_path = tmp_path / "mask.pfm"
        write_pfm(str(mask_path), Image(mask[None], ImageKind.WEIGHT))
        code = main(["eval", str(DATA / "depth.pfm"), str(DATA / "depth.pfm"),
                     "--mask", str(mask_path)])
        assert code == 0
        assert report_dict(capsys)["mae"] == "0"


def test_version_flag_exits_cleanly(capsys):
    assert main(["--version"]) == 0
    assert capsys.readouterr().out.strip()


def test_missing_subcommand_is_usage_error(capsys):
    assert main([]) == 2
