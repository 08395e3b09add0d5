import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from xplain.cli import main
from xplain.synthdata import write_blob_corpus

from mock_server import MockModelServer


def run_cli(argv):
    try:
        return main(argv)
    except SystemExit as exc:  # argparse-level failures
        return exc.code


@pytest.fixture(scope="module")
def corpus_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-corpus")
    return str(write_blob_corpus(root, n_per_class=12, image_size=24, seed=3))


@pytest.fixture(scope="module")
def trained(tmp_path_factory, corpus_root):
    out = tmp_path_factory.mktemp("cli-train")
    code = main([
        "train", "--data", corpus_root, "--out", str(out),
        "--resize", "18", "--crop", "16", "--epochs", "6", "--lr", "0.02",
        "--optimizer", "sgd", "--batch-size", "8", "--seed", "5",
    ])
    assert code == 0
    return out


class TestScanSplit:
    def test_scan_prints_counts(self, corpus_root, capsys):
        assert run_cli(["scan", "--data", corpus_root]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["total"] == 48
        assert len(summary["classes"]) == 4

    def test_scan_missing_root(self, tmp_path):
        assert run_cli(["scan", "--data", str(tmp_path / "nope")]) == 3

    def test_split_writes_manifest(self, corpus_root, tmp_path):
        out = tmp_path / "split"
        assert run_cli(["split", "--data", corpus_root, "--out", str(out),
                        "--split-seed", "4"]) == 0
        manifest = json.loads((out / "split.json").read_text())
        assert manifest["seed"] == 4
        assert (out / "manifest.json").exists()


class TestTrain:
    def test_artifacts(self, trained):
        for name in ("checkpoint.xck", "history.csv", "history.png", "manifest.json"):
            assert (trained / name).exists(), name
        lines = (trained / "history.csv").read_text().strip().split("\n")
        assert len(lines) == 7  # header + 6 epochs

    def test_missing_data_exit_3(self, tmp_path):
        assert run_cli(["train", "--data", str(tmp_path / "missing"),
                        "--out", str(tmp_path / "o")]) == 3

    def test_zero_epochs_exit_2(self, corpus_root, tmp_path):
        assert run_cli(["train", "--data", corpus_root, "--epochs", "0",
                        "--out", str(tmp_path / "o")]) == 2

    def test_bad_config_key_exit_2(self, corpus_root, tmp_path):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("data: {}\nnot_a_key: 1\n".format(corpus_root))
        assert run_cli(["train", "--config", str(cfg), "--data", corpus_root,
                        "--out", str(tmp_path / "o")]) == 2

    def test_rerun_from_manifest_byte_identical(self, corpus_root, trained, tmp_path):
        out2 = tmp_path / "rerun"
        code = run_cli(["train", "--config", str(trained / "manifest.json"),
                        "--out", str(out2)])
        assert code == 0
        assert (out2 / "history.csv").read_bytes() == (trained / "history.csv").read_bytes()
        assert (out2 / "checkpoint.xck").read_bytes() == (trained / "checkpoint.xck").read_bytes()
        png_a = np.asarray(Image.open(out2 / "history.png"))
        png_b = np.asarray(Image.open(trained / "history.png"))
        assert np.array_equal(png_a, png_b)


class TestEvaluate:
    def test_native_checkpoint(self, corpus_root, trained, tmp_path):
        out = tmp_path / "eval"
        code = run_cli(["evaluate", "--data", corpus_root,
                        "--model", str(trained / "checkpoint.xck"),
                        "--out", str(out), "--batch-size", "8"])
        assert code == 0
        payload = json.loads((out / "metrics.json").read_text())
        assert 0.0 <= payload["accuracy"] <= 1.0
        assert np.asarray(payload["confusion"]).shape == (4, 4)
        assert (out / "confusion.csv").exists()


@pytest.fixture(scope="module")
def image_path(corpus_root):
    return str(next(Path(corpus_root).glob("*/blob_0000.png")))


class TestExplain:
    def test_method_all_file_contract(self, trained, image_path, tmp_path):
        out = tmp_path / "exp"
        code = run_cli(["explain", "--image", image_path,
                        "--model", str(trained / "checkpoint.xck"),
                        "--method", "all", "--segments", "12", "--samples", "120",
                        "--seed", "1", "--out", str(out)])
        assert code == 0
        pngs = {p.name for p in out.glob("*.png")}
        assert pngs == {"lime_superpixels.png", "lime_posneg.png", "shap_redblue.png",
                        "cam_overlay.png", "comparison_sheet.png"}
        sidecar = json.loads((out / "explanation.json").read_text())
        assert {e["method"] for e in sidecar["entries"]} == {"lime", "kernel_shap", "grad_cam"}
        assert (out / "manifest.json").exists()

    def test_lime_defaults_in_sidecar(self, trained, image_path, tmp_path):
        out = tmp_path / "lime"
        code = run_cli(["explain", "--image", image_path,
                        "--model", str(trained / "checkpoint.xck"),
                        "--method", "lime", "--segments", "12",
                        "--seed", "0", "--out", str(out)])
        assert code == 0
        entry = json.loads((out / "explanation.json").read_text())["entries"][0]
        assert entry["metadata"]["num_samples"] == 1000
        assert entry["metadata"]["num_features"] == 10

    def test_gradcam_remote_exit_5(self, image_path, tmp_path):
        with MockModelServer(input_shape=(3, 16, 16)) as srv:
            code = run_cli(["explain", "--image", image_path, "--model", srv.url,
                            "--method", "gradcam", "--out", str(tmp_path / "o")])
        assert code == 5

    def test_remote_lime_works(self, image_path, tmp_path):
        with MockModelServer(input_shape=(3, 16, 16)) as srv:
            out = tmp_path / "rl"
            code = run_cli(["explain", "--image", image_path, "--model", srv.url,
                            "--method", "lime", "--segments", "8", "--samples", "60",
                            "--seed", "0", "--out", str(out)])
        assert code == 0
        assert (out / "lime_posneg.png").exists()

    def test_env_var_model_url(self, image_path, tmp_path, monkeypatch):
        with MockModelServer(input_shape=(3, 16, 16)) as srv:
            monkeypatch.setenv("XPLAIN_MODEL_URL", srv.url)
            code = run_cli(["explain", "--image", image_path, "--method", "shap",
                            "--segments", "8", "--samples", "80",
                            "--seed", "0", "--out", str(tmp_path / "envout")])
        assert code == 0

    def test_explain_rerun_deterministic(self, trained, image_path, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = run_cli(["explain", "--image", image_path,
                            "--model", str(trained / "checkpoint.xck"),
                            "--method", "shap", "--segments", "10", "--samples", "80",
                            "--seed", "3", "--out", str(out)])
            assert code == 0
            outs.append(out)
        a, b = outs
        assert (a / "explanation.json").read_bytes() == (b / "explanation.json").read_bytes()
        assert np.array_equal(np.asarray(Image.open(a / "shap_redblue.png")),
                              np.asarray(Image.open(b / "shap_redblue.png")))


class TestCompare:
    def test_two_models_sheet(self, corpus_root, trained, tmp_path):
        image = str(next(Path(corpus_root).glob("*/blob_0001.png")))
        out = tmp_path / "cmp"
        with MockModelServer(input_shape=(3, 16, 16), model_id="remote-mock") as srv:
            code = run_cli(["compare-xai", "--image", image,
                            "--model", str(trained / "checkpoint.xck"),
                            "--model", srv.url,
                            "--segments", "8", "--samples", "60", "--seed", "0",
                            "--out", str(out)])
        assert code == 0
        assert (out / "comparison.png").exists()
        payload = json.loads((out / "comparison.json").read_text())
        assert len(payload["models"]) == 2
        has_cam = ["grad_cam" in m for m in payload["models"]]
        assert has_cam == [True, False]  # native has a map, remote cannot


class TestParser:
    def test_unknown_command_exit_2(self):
        assert run_cli(["conjure"]) == 2

    def test_missing_required_out_exit_2(self, corpus_root):
        assert run_cli(["train", "--data", corpus_root]) == 2

    def test_version_flag(self, capsys):
        code = run_cli(["--version"])
        assert code == 0
        assert "xplain" in capsys.readouterr().out
