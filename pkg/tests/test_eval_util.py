import math
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from retrain.assert_util import expect
from retrain.cache_util import FeatureCache
from retrain.encoder_util import Method
from retrain.error_util import (
    ConfigError, EmptyDatasetError, MalformedRowError, MissingFileError, PipelineError,
    TooFewSamplesError, UnresolvablePathError
)
from retrain.eval_util import (
    Dataset, PipelineConfig, Sample, compare_methods, cross_validate,
    extract_dataset_features, load_manifest, stratified_folds, subject_folds, synth_dataset
)
from retrain.feature_util import Norm, RegionGrid
from retrain.image_util import save_pgm
from retrain.random_util import GratingGenerator
from retrain.report_util import REPORT_SCHEMA, report_to_dict
from retrain.svm_util import SvmConfig

SMALL_PIPELINE = PipelineConfig(Method.RETRAIN, RegionGrid(2, 2), Norm.RAW, SvmConfig(epochs=10))


@pytest.fixture(scope="module")
def small_synth(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("synth")
    synth_dataset(root, classes=3, per_class=10, size=16, seed=1)
    return root


def fake_dataset(labels, subjects=None) -> Dataset:
    subjects = subjects or [None] * len(labels)
    samples = tuple(Sample(Path(f"/data/{k}.pgm"), label, subject)
                    for k, (label, subject) in enumerate(zip(labels, subjects)))
    return Dataset(samples, tuple(dict.fromkeys(labels)))


def write_manifest(path: Path, lines) -> Path:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_synth_layout(small_synth):
    manifest = small_synth / "manifest.csv"
    lines = manifest.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "path,label"
    assert lines[1] == "class_0/class_0_000.pgm,class_0"
    assert len(lines) == 1 + 30
    assert (small_synth / "class_2" / "class_2_009.pgm").is_file()


def test_synth_is_deterministic(tmp_path):
    synth_dataset(tmp_path / "a", classes=2, per_class=3, size=16, seed=5)
    synth_dataset(tmp_path / "b", classes=2, per_class=3, size=16, seed=5)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 7
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


@pytest.mark.parametrize("classes, per_class, size", [(1, 5, 16), (9, 5, 16), (2, 0, 16), (2, 5, 15)])
def test_synth_rejects_bad_parameters(tmp_path, classes, per_class, size):
    with pytest.raises(ConfigError):
        synth_dataset(tmp_path, classes, per_class, size)


def test_load_manifest(small_synth):
    dataset = load_manifest(small_synth / "manifest.csv")
    assert len(dataset) == 30
    assert dataset.class_names == ("class_0", "class_1", "class_2")
    assert dataset.class_counts() == {"class_0": 10, "class_1": 10, "class_2": 10}
    assert all(s.path.is_absolute() and s.path.is_file() for s in dataset.samples)


def test_manifest_class_order_and_subjects(tmp_path, small_synth):
    manifest = write_manifest(tmp_path / "m.csv", [
        "path,label,subject",
        f"{small_synth}/class_1/class_1_000.pgm,happy,s1",
        f"{small_synth}/class_0/class_0_000.pgm,sad,s2",
        f"{small_synth}/class_0/class_0_001.pgm,happy,",
    ])
    dataset = load_manifest(manifest)
    assert dataset.class_names == ("happy", "sad")
    assert [s.subject for s in dataset.samples] == ["s1", "s2", None]


def test_manifest_errors(tmp_path, small_synth):
    image = f"{small_synth}/class_0/class_0_000.pgm"
    with pytest.raises(MissingFileError):
        load_manifest(tmp_path / "absent.csv")

    with pytest.raises(MalformedRowError) as info:
        load_manifest(write_manifest(tmp_path / "cols.csv", ["path,label", f"{image},a", "only-one-column"]))
    assert info.value.row == 3

    with pytest.raises(MalformedRowError, match="重复"):
        load_manifest(write_manifest(tmp_path / "dup.csv", ["path,label", f"{image},a", f"{image},b"]))

    with pytest.raises(MalformedRowError):
        load_manifest(write_manifest(tmp_path / "header.csv", ["file,class", f"{image},a"]))

    with pytest.raises(UnresolvablePathError):
        load_manifest(write_manifest(tmp_path / "gone.csv", ["path,label", "nowhere.pgm,a"]))

    with pytest.raises(EmptyDatasetError):
        load_manifest(write_manifest(tmp_path / "empty.csv", ["path,label"]))


def test_stratified_folds_are_balanced():
    labels = ["a"] * 23 + ["b"] * 17 + ["c"] * 10
    dataset = fake_dataset(labels)
    plan = stratified_folds(dataset, 10, seed=42)
    assert len(plan.assignment) == 50
    assert plan.fold_sizes() == [5] * 10
    for name in ("a", "b", "c"):
        per_fold = Counter(f for f, label in zip(plan.assignment, labels) if label == name)
        counts = [per_fold.get(f, 0) for f in range(10)]
        assert max(counts) - min(counts) <= 1
    assert stratified_folds(dataset, 10, seed=42) == plan
    assert stratified_folds(dataset, 10, seed=43) != plan


def test_fold_errors():
    with pytest.raises(TooFewSamplesError):
        stratified_folds(fake_dataset(["a", "b", "a"]), 4)
    with pytest.raises(ConfigError):
        stratified_folds(fake_dataset(["a", "b", "a"]), 1)


def test_subject_folds_keep_subjects_together():
    labels = ["a", "b"] * 12
    subjects = [f"s{k // 4}" for k in range(24)]
    plan = subject_folds(fake_dataset(labels, subjects), 3, seed=7)
    for subject in set(subjects):
        assert len({f for f, s in zip(plan.assignment, subjects) if s == subject}) == 1
    assert sorted(plan.fold_sizes()) == [8, 8, 8]


def test_cross_validate_report(small_synth):
    dataset = load_manifest(small_synth / "manifest.csv")
    report = cross_validate(dataset, SMALL_PIPELINE, n_folds=5, seed=3)
    assert report.total == 30
    assert len(report.per_fold_accuracy) == 5
    assert report.mean_accuracy == pytest.approx(np.trace(report.confusion) / 30)
    assert len(report.predictions) == 30
    (expect(report)
     .to_match_schema(REPORT_SCHEMA)
     .at("config").to_contain({"method": "RETRAIN", "grid": "2x2", "norm": "RAW", "folds": 5, "seed": 3}))
    expect(report).at("config.svm.epochs").to_equal(10)
    expect(report).at("confusion").to_match(lambda rows: [sum(row) for row in rows] == [10, 10, 10],
                                            "混淆矩阵每行之和应等于该类样本数")


def test_cross_validate_is_job_independent(small_synth):
    dataset = load_manifest(small_synth / "manifest.csv")
    single = cross_validate(dataset, SMALL_PIPELINE, n_folds=3, seed=1, jobs=1)
    threaded = cross_validate(dataset, SMALL_PIPELINE, n_folds=3, seed=1, jobs=4)
    expect(threaded).to_equal(report_to_dict(single), deep_compare=True)


def test_feature_cache_is_used(small_synth, tmp_path):
    dataset = load_manifest(small_synth / "manifest.csv")
    cache = FeatureCache.for_directory(tmp_path / "cache")
    first = extract_dataset_features(dataset, SMALL_PIPELINE, cache=cache)
    assert cache.stats.hits == 0
    second = extract_dataset_features(dataset, SMALL_PIPELINE, jobs=3, cache=cache)
    assert cache.stats.hits == len(dataset)
    assert all(np.array_equal(a.values, b.values) for a, b in zip(first, second))


def test_extraction_error_names_the_sample(tmp_path, small_synth):
    broken = tmp_path / "broken.pgm"
    broken.write_bytes(b"P5\n16 16\n255\n" + bytes(3))
    manifest = write_manifest(tmp_path / "m.csv", [
        "path,label",
        f"{small_synth}/class_0/class_0_000.pgm,a",
        f"{small_synth}/class_1/class_1_000.pgm,b",
        "broken.pgm,b",
    ])
    with pytest.raises(PipelineError) as info:
        cross_validate(load_manifest(manifest), SMALL_PIPELINE, n_folds=2)
    assert info.value.sample == str(broken.resolve())


def test_label_shuffle_canary(tmp_path):
    # 同一方向的光栅，图像内容与标签无关
    generator = GratingGenerator(seed=9)
    samples = tuple(Sample(save_pgm(generator.grating(16, 0.0), tmp_path / f"g{n:03d}.pgm"), "x")
                    for n in range(90))
    unlabeled = Dataset(samples, ("x",))
    shuffled = [str(v) for v in np.random.default_rng(123).permutation(["a", "b", "c"] * 30)]
    dataset = unlabeled.with_labels(shuffled)
    assert dataset.class_counts() == {"a": 30, "b": 30, "c": 30}

    report = cross_validate(dataset, SMALL_PIPELINE, n_folds=10, seed=42)
    sigma = math.sqrt((1 / 3) * (2 / 3) / len(dataset))
    assert abs(report.mean_accuracy - 1 / 3) <= 3 * sigma


def test_with_labels_requires_one_label_per_sample():
    dataset = fake_dataset(["a", "b"])
    assert dataset.with_labels(["c", "c"]).class_names == ("c",)
    with pytest.raises(ConfigError):
        dataset.with_labels(["c"])


def test_compare_methods_uses_identical_folds(small_synth):
    dataset = load_manifest(small_synth / "manifest.csv")
    reports = compare_methods(dataset, ["RETRAIN", "lbp"], SMALL_PIPELINE, n_folds=3, seed=2)
    assert list(reports) == [Method.RETRAIN, Method.LBP]
    folds = [[p.fold for p in r.predictions] for r in reports.values()]
    assert folds[0] == folds[1]
    assert reports[Method.LBP].config_echo["method"] == "LBP"


@pytest.mark.slow
def test_synthetic_benchmark(tmp_path):
    synth_dataset(tmp_path, classes=4, per_class=50, size=64, seed=7)
    dataset = load_manifest(tmp_path / "manifest.csv")
    reports = compare_methods(dataset, [Method.RETRAIN, Method.LBP], n_folds=10, seed=42, jobs=4)
    retrain, lbp = reports[Method.RETRAIN], reports[Method.LBP]
    # 4 个方向相隔 45° 的光栅，方向直方图线性可分
    expect(retrain).at("mean_accuracy").to_be_at_least(0.95)
    assert retrain.mean_accuracy >= lbp.mean_accuracy - 0.02
