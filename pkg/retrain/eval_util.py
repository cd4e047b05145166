"""
评估工具模块

提供数据集读取、分层 N 折交叉验证与合成数据集生成，支持以下特性：

功能特性:
    - 数据集清单
        * CSV 表头 path,label[,subject]
        * 路径相对清单所在目录解析
        * 类别按首次出现顺序排列
    - 折划分
        * 类内按种子打乱后轮转分配（分层）
        * 可选按受试者划分（同一受试者不同时出现在训练与测试）
    - 交叉验证
        * 标准化参数只在训练折上估计
        * 汇总混淆矩阵（行 = 真实类别，列 = 预测类别）
        * 报告回显完整流水线配置
    - 方法对比
        * 相同折划分下比较多种描述子
    - 合成数据集
        * 定向光栅 PGM 文件 + 清单

技术特点:
    - 特征提取与各折训练可用线程池并行，结果与并行度无关
    - 错误附带折号与样本路径
    - 完整的类型注解
    - 自动化日志记录
"""

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np

from .cache_util import FeatureCache
from .encoder_util import Method
from .error_util import (
    ConfigError, DatasetIoError, EmptyDatasetError, MalformedRowError, MissingFileError,
    PipelineError, RetrainError, TooFewSamplesError, UnresolvablePathError
)
from .feature_util import FeatureConfig, FeatureMeta, FeatureVector, Norm, RegionGrid, extract_features
from .image_util import PathLike, load_grayscale, save_pgm
from .log_util import my_logger
from .random_util import GratingGenerator, SynthConfig
from .svm_util import SvmConfig, predict_many, train_ovo_svm

T = TypeVar('T')
U = TypeVar('U')


class EvalConfig:
    """评估配置类"""
    DEFAULT_FOLDS: int = 10
    DEFAULT_SEED: int = 42
    MANIFEST_COLUMNS: Tuple[str, ...] = ("path", "label", "subject")
    MANIFEST_NAME: str = "manifest.csv"
    CAVEAT: str = (
        "Accuracy depends on the fold protocol, fold seeding, preprocessing and SVM settings; "
        "published benchmark numbers are not reproducible without the original datasets and protocol."
    )


@dataclass(frozen=True)
class Sample:
    """数据集样本"""
    path: Path
    label: str
    subject: Optional[str] = None


@dataclass(frozen=True)
class Dataset:
    """
    数据集

    Attributes:
        samples: 样本列表，路径互不相同
        class_names: 有序类别列表
    """
    samples: Tuple[Sample, ...]
    class_names: Tuple[str, ...]

    def __post_init__(self) -> None:
        names = set(self.class_names)
        for sample in self.samples:
            if sample.label not in names:
                raise ConfigError(f"样本 {sample.path} 的类别 {sample.label} 不在类别列表中")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def labels(self) -> List[str]:
        return [s.label for s in self.samples]

    def class_counts(self) -> Dict[str, int]:
        counts = {name: 0 for name in self.class_names}
        for sample in self.samples:
            counts[sample.label] += 1
        return counts

    def with_labels(self, labels: Sequence[str]) -> "Dataset":
        """替换标签（类别列表按新标签首次出现顺序重建）"""
        if len(labels) != len(self.samples):
            raise ConfigError(f"标签数 {len(labels)} 与样本数 {len(self.samples)} 不符")
        samples =tuple(Sample(s.path, str(l), s.subject) for s, l in zip(self.samples, labels))
        return Dataset(samples, tuple(dict.fromkeys(s.label for s in samples)))


@dataclass(frozen=True)
class FoldPlan:
    """
    折划分

    Attributes:
        n_folds: 折数 N ≥ 2
        assignment: 每个样本所在的折号，取值 [0, N)
    """
    n_folds: int
    assignment: Tuple[int, ...]

    def test_indices(self, fold: int) -> List[int]:
        return [i for i, f in enumerate(self.assignment) if f == fold]

    def train_indices(self, fold: int) -> List[int]:
        return [i for i, f in enumerate(self.assignment) if f != fold]

    def fold_sizes(self) -> List[int]:
        return [self.assignment.count(f) for f in range(self.n_folds)]


@dataclass(frozen=True)
class PipelineConfig:
    """完整的流水线配置，回显到每份报告"""
    method: Method = Method.RETRAIN
    grid: RegionGrid = FeatureConfig.DEFAULT_GRID
    norm: Norm = FeatureConfig.DEFAULT_NORM
    svm: SvmConfig = field(default_factory=SvmConfig)

    def feature_meta(self) -> FeatureMeta:
        return FeatureMeta(self.method, self.grid, self.norm, self.method.code_count)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method.value,
            "grid": str(self.grid),
            "norm": self.norm.value,
            "svm": self.svm.to_dict(),
        }


@dataclass(frozen=True)
class Prediction:
    """单个测试样本的预测结果"""
    sample: str
    true_label: str
    predicted: str
    fold: int


@dataclass(frozen=True)
class EvaluationReport:
    """
    交叉验证报告

    Attributes:
        class_names: 混淆矩阵的行列顺序
        per_fold_accuracy: 各折准确率
        mean_accuracy: trace(confusion) / total
        confusion: 行 = 真实类别，列 = 预测类别
        config_echo: 完整配置
        predictions: 每个样本的预测
    """
    class_names: Tuple[str, ...]
    per_fold_accuracy: Tuple[float, ...]
    mean_accuracy: float
    confusion: np.ndarray
    config_echo: Dict[str, Any]
    predictions: Tuple[Prediction, ...] = ()
    caveat: str = EvalConfig.CAVEAT

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def per_class_recall(self) -> Dict[str, float]:
        recalls = {}
        for k, name in enumerate(self.class_names):
            row = int(self.confusion[k].sum())
            recalls[name] = float(self.confusion[k, k]) / row if row else 0.0
        return recalls


def _resolve(base: Path, raw: str) -> Path:
    candidate = Path(raw)
    return candidate if candidate.is_absolute() else base / candidate


@my_logger.runtime_logger
def load_manifest(path: PathLike) -> Dataset:
    """
    读取数据集清单

    Args:
        path: CSV 文件，表头 path,label[,subject]

    Returns:
        Dataset: 类别按首次出现顺序排列

    Raises:
        MissingFileError: 清单不存在
        MalformedRowError: 行格式错误或路径重复
        UnresolvablePathError: 图像文件不存在
        EmptyDatasetError: 没有数据行
    """
    manifest = Path(path)
    if not manifest.is_file():
        raise MissingFileError(f"清单文件不存在: {manifest}")
    base = manifest.resolve().parent

    samples: List[Sample] = []
    seen: Dict[Path, int] = {}
    with manifest.open("r", newline="", encoding="utf-8-sig") as f:
        reader = csv.reader(f)
        header = [h.strip().lower() for h in next(reader, [])]
        if header[:2] != ["path", "label"] or len(header) > 3 or (len(header) == 3 and header[2] != "subject"):
            raise MalformedRowError(1, f"表头必须为 path,label[,subject]，实际为 {','.join(header)}")
        with_subject = len(header) == 3

        for row_number, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise MalformedRowError(row_number, f"应有 {len(header)} 列，实际 {len(record)} 列")
            raw_path, label = record[0].strip(), record[1].strip()
            if not raw_path:
                raise MalformedRowError(row_number, "路径为空")
            if not label:
                raise MalformedRowError(row_number, "类别为空")
            resolved = _resolve(base, raw_path).resolve()
            if resolved in seen:
                raise MalformedRowError(row_number, f"路径重复: {raw_path}（首次出现于第 {seen[resolved]} 行）")
            if not resolved.is_file():
                raise UnresolvablePathError(f"清单第 {row_number} 行的图像不存在: {raw_path}")
            seen[resolved] = row_number
            subject = record[2].strip() or None if with_subject else None
            samples.append(Sample(resolved, label, subject))

    if not samples:
        raise EmptyDatasetError(f"清单没有数据行: {manifest}")
    class_names = tuple(dict.fromkeys(s.label for s in samples))
    my_logger.logger.info(f"📋 读取清单: {manifest} | 样本: {len(samples)} | 类别: {list(class_names)}")
    return Dataset(tuple(samples), class_names)


def _check_fold_count(total: int, n_folds: int) -> None:
    if n_folds < 2:
        raise ConfigError(f"折数必须 ≥ 2: {n_folds}")
    if total < n_folds:
        raise TooFewSamplesError(f"样本数 {total} 少于折数 {n_folds}")


def stratified_folds(dataset: Dataset, n_folds: int = EvalConfig.DEFAULT_FOLDS,
                     seed: int = EvalConfig.DEFAULT_SEED) -> FoldPlan:
    """
    分层折划分

    类内按种子打乱后轮转分配，轮转位置在类别之间延续，使总折大小也保持均衡

    Raises:
        TooFewSamplesError: 样本总数少于折数
    """
    _check_fold_count(len(dataset), n_folds)
    rng = np.random.default_rng(seed)
    assignment = [0] * len(dataset)
    cursor = 0
    for name in dataset.class_names:
        members = [i for i, s in enumerate(dataset.samples) if s.label == name]
        for i in rng.permutation(len(members)):
            assignment[members[i]] = cursor % n_folds
            cursor += 1
    return FoldPlan(n_folds, tuple(assignment))


def subject_folds(dataset: Dataset, n_folds: int = EvalConfig.DEFAULT_FOLDS,
                  seed: int = EvalConfig.DEFAULT_SEED) -> FoldPlan:
    """
    按受试者划分

    同一受试者的全部样本落在同一折；没有受试者编号的样本各自成组

    Raises:
        TooFewSamplesError: 组数少于折数
    """
    groups: Dict[str, List[int]] = {}
    for i, sample in enumerate(dataset.samples):
        key = f"subject:{sample.subject}" if sample.subject else f"sample:{i}"
        groups.setdefault(key, []).append(i)
    _check_fold_count(len(groups), n_folds)
    rng = np.random.default_rng(seed)
    keys = list(groups)
    assignment = [0] * len(dataset)
    for position, k in enumerate(rng.permutation(len(keys))):
        for i in groups[keys[k]]:
            assignment[i] = position % n_folds
    return FoldPlan(n_folds, tuple(assignment))


def _ordered_map(func: Callable[[T], U], items: Sequence[T], jobs: int) -> List[U]:
    """按输入顺序返回结果的线程池 map"""
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(func, items))
    return [func(item) for item in items]


def default_jobs() -> int:
    return os.cpu_count() or 1


@my_logger.runtime_logger
def extract_dataset_features(dataset: Dataset, pipeline: PipelineConfig, jobs: int = 1,
                             cache: Optional[FeatureCache] = None) -> List[FeatureVector]:
    """
    逐样本读取、编码并计算区域直方图

    Raises:
        PipelineError: 读取或编码失败，附带样本路径
    """
    meta = pipeline.feature_meta()

    def extract(sample: Sample) -> FeatureVector:
        try:
            if cache is not None:
                cached = cache.get(sample.path, meta)
                if cached is not None:
                    return cached
            feature = extract_features(load_grayscale(sample.path), pipeline.method, pipeline.grid, pipeline.norm)
            if cache is not None:
                cache.put(sample.path, feature)
            return feature
        except RetrainError as e:
            raise PipelineError(f"特征提取失败: {e}", sample=str(sample.path)) from e
        except OSError as e:
            raise PipelineError(f"读取图像失败: {e}", sample=str(sample.path)) from e

    features = _ordered_map(extract, list(dataset.samples), jobs)
    if cache is not None:
        stats = cache.stats
        my_logger.logger.debug(f"📦 特征缓存 | 命中: {stats.hits} | 未命中: {stats.misses}")
    return features


def evaluate_features(features: Sequence[FeatureVector], labels: Sequence[str],
                      class_names: Sequence[str], plan: FoldPlan, svm: SvmConfig,
                      jobs: int = 1, sample_ids: Optional[Sequence[str]] = None,
                      config_echo: Optional[Dict[str, Any]] = None) -> EvaluationReport:
    """
    在预先计算的特征上执行 N 折评估

    每折只用训练样本拟合标准化与 SVM，再预测测试样本

    Raises:
        PipelineError: 某一折训练或预测失败，附带折号
    """
    if len(features) != len(labels) or len(labels) != len(plan.assignment):
        raise ConfigError("特征、标签与折划分的长度不一致")
    sample_ids = list(sample_ids) if sample_ids is not None else [str(i) for i in range(len(labels))]
    index = {name: k for k, name in enumerate(class_names)}

    def run_fold(fold: int) -> List[Prediction]:
        train = plan.train_indices(fold)
        test = plan.test_indices(fold)
        try:
            model = train_ovo_svm([features[i] for i in train], [labels[i] for i in train], svm)
            predicted = predict_many(model, [features[i] for i in test])
        except RetrainError as e:
            raise PipelineError(f"交叉验证失败: {e}", fold=fold) from e
        my_logger.logger.debug(f"📊 第 {fold} 折完成 | 训练: {len(train)} | 测试: {len(test)}")
        return [Prediction(sample_ids[i], labels[i], p, fold) for i, p in zip(test, predicted)]

    per_fold = _ordered_map(run_fold, list(range(plan.n_folds)), jobs)

    confusion = np.zeros((len(class_names), len(class_names)), dtype=np.int64)
    accuracies = []
    for predictions in per_fold:
        for p in predictions:
            confusion[index[p.true_label], index[p.predicted]] += 1
        correct = sum(p.true_label == p.predicted for p in predictions)
        accuracies.append(correct / len(predictions) if predictions else 0.0)
    total = int(confusion.sum())
    mean_accuracy = float(np.trace(confusion)) / total if total else 0.0

    return EvaluationReport(
        class_names=tuple(class_names),
        per_fold_accuracy=tuple(accuracies),
        mean_accuracy=mean_accuracy,
        confusion=confusion,
        config_echo=dict(config_echo or {}),
        predictions=tuple(p for predictions in per_fold for p in predictions),
    )


def _config_echo(dataset: Dataset, pipeline: PipelineConfig, n_folds: int, seed: int,
                 subject_split: bool) -> Dict[str, Any]:
    return {
        **pipeline.to_dict(),
        "folds": n_folds,
        "seed": seed,
        "split": "subject" if subject_split else "stratified",
        "samples": len(dataset),
        "classes": list(dataset.class_names),
    }


@my_logger.runtime_logger
def cross_validate(dataset: Dataset, pipeline: Optional[PipelineConfig] = None,
                   n_folds: int = EvalConfig.DEFAULT_FOLDS, seed: int = EvalConfig.DEFAULT_SEED,
                   jobs: int = 1, cache: Optional[FeatureCache] = None,
                   subject_split: bool = False) -> EvaluationReport:
    """
    N 折交叉验证

    Args:
        dataset: 非空数据集
        pipeline: 方法、网格、归一化与 SVM 配置
        n_folds: 折数
        seed: 折划分种子
        jobs: 线程数，不影响结果
        cache: 可选的特征缓存
        subject_split: 按受试者划分

    Returns:
        EvaluationReport: 汇总报告

    Raises:
        EmptyDatasetError: 数据集为空
        TooFewSamplesError: 样本少于折数
        PipelineError: 读取、编码或训练失败
    """
    pipeline = pipeline or PipelineConfig()
    if not len(dataset):
        raise EmptyDatasetError("数据集为空")
    plan = subject_folds(dataset, n_folds, seed) if subject_split else stratified_folds(dataset, n_folds, seed)
    my_logger.logger.info(
        f"🔁 交叉验证 | 方法: {pipeline.method.value} | 网格: {pipeline.grid} | 归一化: {pipeline.norm.value} "
        f"| 折数: {n_folds} | 折大小: {plan.fold_sizes()}")

    features = extract_dataset_features(dataset, pipeline, jobs, cache)
    report = evaluate_features(
        features, dataset.labels, dataset.class_names, plan, pipeline.svm, jobs,
        sample_ids=[str(s.path) for s in dataset.samples],
        config_echo=_config_echo(dataset, pipeline, n_folds, seed, subject_split),
    )
    my_logger.logger.info(f"✅ 平均准确率: {report.mean_accuracy:.4f} | 各折: "
                          f"{[round(a, 4) for a in report.per_fold_accuracy]}")
    return report


@my_logger.runtime_logger
def compare_methods(dataset: Dataset, methods: Sequence[Union[Method, str]],
                    pipeline: Optional[PipelineConfig] = None,
                    n_folds: int = EvalConfig.DEFAULT_FOLDS, seed: int = EvalConfig.DEFAULT_SEED,
                    jobs: int = 1, cache: Optional[FeatureCache] = None,
                    subject_split: bool = False) -> Dict[Method, EvaluationReport]:
    """相同折划分与 SVM 配置下依次评估多个描述子"""
    base = pipeline or PipelineConfig()
    reports: Dict[Method, EvaluationReport] = {}
    for method in methods:
        method = Method.parse(method)
        config = PipelineConfig(method, base.grid, base.norm, base.svm)
        reports[method] = cross_validate(dataset, config, n_folds, seed, jobs, cache, subject_split)
    return reports


def write_manifest(dataset: Dataset, path: PathLike) -> Path:
    """写出清单，路径相对清单所在目录"""
    out = Path(path)
    base = out.resolve().parent
    with_subject = any(s.subject for s in dataset.samples)
    with out.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(EvalConfig.MANIFEST_COLUMNS if with_subject else EvalConfig.MANIFEST_COLUMNS[:2])
        for sample in dataset.samples:
            rel = Path(os.path.relpath(sample.path, base)).as_posix()
            writer.writerow([rel, sample.label, sample.subject or ""] if with_subject else [rel, sample.label])
    return out


@my_logger.runtime_logger
def synth_dataset(out_dir: PathLike, classes: int, per_class: int, size: int,
                  seed: int = EvalConfig.DEFAULT_SEED) -> Dataset:
    """
    生成定向光栅合成数据集

    Args:
        out_dir: 输出目录，写入 <label>/<label>_<n>.pgm 与 manifest.csv
        classes: 类别数 2..8
        per_class: 每类样本数
        size: 图像边长 ≥ 16
        seed: 随机种子

    Returns:
        Dataset: 写出的数据集

    Raises:
        ConfigError: 参数越界
        DatasetIoError: 写文件失败
    """
    if not 2 <= classes <= 8:
        raise ConfigError(f"类别数必须位于 2..8: {classes}")
    if per_class < 1:
        raise ConfigError(f"每类样本数必须为正: {per_class}")
    if size < SynthConfig.MIN_SIZE:
        raise ConfigError(f"图像边长必须 ≥ {SynthConfig.MIN_SIZE}: {size}")

    root = Path(out_dir)
    generator = GratingGenerator(seed)
    samples: List[Sample] = []
    width = max(3, len(str(per_class - 1)))
    try:
        for c in range(classes):
            label = f"class_{c}"
            theta = generator.orientation(c, classes)
            for n in range(per_class):
                path = root / label / f"{label}_{n:0{width}d}.pgm"
                save_pgm(generator.grating(size, theta), path)
                samples.append(Sample(path.resolve(), label))
        dataset = Dataset(tuple(samples), tuple(f"class_{c}" for c in range(classes)))
        write_manifest(dataset, root / EvalConfig.MANIFEST_NAME)
    except OSError as e:
        raise DatasetIoError(f"写出合成数据集失败: {e}") from e

    my_logger.logger.info(
        f"🎲 合成数据集 | 目录: {root} | 类别: {classes} | 每类: {per_class} | 尺寸: {size} "
        f"| 方向间隔: {math.degrees(math.pi / classes):.1f}°")
    return dataset
