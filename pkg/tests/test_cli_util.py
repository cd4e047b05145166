import json

import numpy as np
import pytest

from retrain.assert_util import expect
from retrain.cli_util import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from retrain.encoder_util import Method, load_codemap
from retrain.image_util import GrayImage, load_grayscale, save_pgm
from retrain.report_util import REPORT_SCHEMA

COMMANDS = ["masks", "encode", "export-codemap", "features", "train", "predict", "crossval", "compare", "synth"]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-synth")
    assert main(["synth", "--out", str(root), "--classes", "2", "--per-class", "6", "--size", "16",
                 "--seed", "3"]) == EXIT_OK
    return root


def test_masks(capsys):
    assert main(["masks"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.splitlines()[:3] == ["-1 -1 2"] * 3
    assert len(out.strip().split("\n\n")) == 8


@pytest.mark.parametrize("command", COMMANDS)
def test_help_exits_zero(command, capsys):
    assert main([command, "--help"]) == EXIT_OK
    assert "usage:" in capsys.readouterr().out


def test_usage_errors_print_grammar(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["masks", "--bogus"]) == EXIT_USAGE
    assert main(["encode", "--in", "x.pgm", "--method", "SIFT"]) == EXIT_USAGE
    assert main(["crossval", "--manifest", "m.csv", "--grid", "7by6"]) == EXIT_USAGE
    assert "usage:" in capsys.readouterr().err


def test_encode_flat_image(tmp_path):
    save_pgm(GrayImage(np.full((9, 9), 128, dtype=np.uint8)), tmp_path / "flat.pgm")
    assert main(["encode", "--in", str(tmp_path / "flat.pgm"), "--method", "RETRAIN",
                 "--out", str(tmp_path / "map.dpcm"), "--out-pgm", str(tmp_path / "map.pgm")]) == EXIT_OK
    assert not load_grayscale(tmp_path / "map.pgm").pixels.any()
    codes = load_codemap(tmp_path / "map.dpcm")
    assert codes.method is Method.RETRAIN and not codes.codes.any()


def test_export_codemap(tmp_path, step_image):
    save_pgm(step_image, tmp_path / "step.pgm")
    main(["encode", "--in", str(tmp_path / "step.pgm"), "--out", str(tmp_path / "step.dpcm")])
    assert main(["export-codemap", "--in", str(tmp_path / "step.dpcm"),
                 "--out-pgm", str(tmp_path / "step-map.pgm")]) == EXIT_OK
    # 码 35 · floor(255 / 63) = 140
    assert load_grayscale(tmp_path / "step-map.pgm").pixels[2, 2] == 140


def test_encode_missing_file_is_a_data_error(tmp_path, capsys):
    assert main(["encode", "--in", str(tmp_path / "absent.pgm"), "--out-pgm", str(tmp_path / "o.pgm")]) == EXIT_DATA
    assert "absent.pgm" in capsys.readouterr().err


def test_features(synth_dir, tmp_path):
    out = tmp_path / "features.csv"
    assert main(["features", "--manifest", str(synth_dir / "manifest.csv"), "--method", "cslbp",
                 "--grid", "2x2", "--norm", "L1", "--out", str(out), "--jobs", "2"]) == EXIT_OK
    lines = out.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1 + 12
    assert lines[1].split(",")[2:5] == ["CSLBP", "2x2", "L1"]


def test_train_then_predict(synth_dir, tmp_path, capsys):
    model = tmp_path / "model.svm"
    assert main(["train", "--manifest", str(synth_dir / "manifest.csv"), "--grid", "2x2", "--epochs", "20",
                 "--out", str(model), "--json", str(tmp_path / "model.json")]) == EXIT_OK
    expect(tmp_path / "model.json").at("classes").to_equal(["class_0", "class_1"])
    capsys.readouterr()

    image = synth_dir / "class_1" / "class_1_000.pgm"
    assert main(["predict", "--model", str(model), "--in", str(image), "--out", str(tmp_path / "p.csv")]) == EXIT_OK
    path, label = capsys.readouterr().out.strip().split(",")
    assert path == str(image) and label in ("class_0", "class_1")
    assert (tmp_path / "p.csv").read_text(encoding="utf-8").startswith("path,label\n")

    assert main(["predict", "--model", str(model), "--manifest", str(synth_dir / "manifest.csv")]) == EXIT_OK
    assert len(capsys.readouterr().out.strip().splitlines()) == 12


def test_predict_with_truncated_model_is_a_data_error(synth_dir, tmp_path, capsys):
    model = tmp_path / "model.svm"
    assert main(["train", "--manifest", str(synth_dir / "manifest.csv"), "--grid", "2x2", "--epochs", "5",
                 "--out", str(model)]) == EXIT_OK
    model.write_bytes(model.read_bytes()[:-3])
    image = synth_dir / "class_0" / "class_0_000.pgm"
    assert main(["predict", "--model", str(model), "--in", str(image)]) == EXIT_DATA
    assert "retrain predict: error:" in capsys.readouterr().err


@pytest.mark.parametrize("flag", [["--C", "0"], ["--C", "-1.5"], ["--C", "nan"], ["--epochs", "0"]])
def test_invalid_svm_values_are_usage_errors(synth_dir, flag, capsys):
    assert main(["crossval", "--manifest", str(synth_dir / "manifest.csv"), *flag]) == EXIT_USAGE
    assert "usage:" in capsys.readouterr().err


def test_crossval_outputs(synth_dir, tmp_path, capsys):
    assert main(["crossval", "--manifest", str(synth_dir / "manifest.csv"), "--method", "RETRAIN",
                 "--grid", "2x2", "--folds", "3", "--seed", "42", "--epochs", "10", "--jobs", "1",
                 "--text", str(tmp_path / "report.txt"),
                 "--confusion-csv", str(tmp_path / "confusion.csv")]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    (expect(report)
     .to_match_schema(REPORT_SCHEMA)
     .at("confusion").to_have_length(2))
    expect(report).at("total").to_equal(12)
    expect(report).at("config.folds").to_equal(3)

    text = (tmp_path / "report.txt").read_text(encoding="utf-8")
    assert "Recognition rate" in text and "rows = true" in text
    rows = (tmp_path / "confusion.csv").read_text(encoding="utf-8").splitlines()
    assert rows[0] == "true\\predicted,class_0,class_1"
    assert sum(int(v) for row in rows[1:] for v in row.split(",")[1:]) == 12


def test_crossval_writes_json_file(synth_dir, tmp_path):
    out = tmp_path / "report.json"
    assert main(["crossval", "--manifest", str(synth_dir / "manifest.csv"), "--grid", "2x2", "--folds", "2",
                 "--epochs", "5", "--out", str(out)]) == EXIT_OK
    expect(out).at("mean_accuracy").to_be_in_range(0.0, 1.0)


def test_crossval_too_many_folds_is_a_data_error(synth_dir):
    assert main(["crossval", "--manifest", str(synth_dir / "manifest.csv"), "--folds", "20"]) == EXIT_DATA


def test_compare(synth_dir, tmp_path, capsys):
    assert main(["compare", "--manifest", str(synth_dir / "manifest.csv"), "--methods", "RETRAIN", "LDN",
                 "--grid", "2x2", "--folds", "2", "--epochs", "5", "--out", str(tmp_path / "cmp.json")]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split()[:2] == ["method", "accuracy"]
    assert [line.split()[0] for line in lines[2:]] == ["RETRAIN", "LDN"]
    expect(tmp_path / "cmp.json").at("LDN.config.method").to_equal("LDN")


def test_log_file_flag(tmp_path):
    log_file = tmp_path / "logs" / "run.log"
    assert main(["--log-level", "debug", "--log-file", str(log_file), "masks"]) == EXIT_OK
    assert log_file.parent.is_dir()
