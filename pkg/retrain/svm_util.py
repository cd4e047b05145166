"""
分类器工具模块

对区域直方图特征做多类分类，支持以下特性：

功能特性:
    - 一对一线性 SVM
        * 每对类别训练一个软间隔线性分类器
        * 原始问题随机次梯度下降（Pegasos 步长 1/(λt)，投影到半径 1/√λ 的球）
        * 每轮按种子打乱样本顺序，第 p 对的种子为 seed + p
        * 多数投票，票数并列取类别顺序中最小者
    - 特征标准化
        * 均值与方差只在训练数据上估计，随模型保存
    - 卡方距离 k 近邻基线
    - 模型持久化
        * 二进制 DPSVM001
        * 无损 JSON 导出

技术特点:
    - 基于 numpy 实现
    - 结果与线程数无关，完全可复现
    - 完整的类型注解
    - 自动化日志记录
"""

import json
import struct
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .error_util import (
    ConfigError, CorruptModelError, EmptyDatasetError, InconsistentFeatureMetaError,
    KTooLargeError, SingleClassError, error_handler
)
from .feature_util import FeatureMeta, FeatureVector, stack_features
from .image_util import PathLike
from .log_util import my_logger

MODEL_MAGIC = b"DPSVM001"
CHI_SQUARE_EPS = 1e-10


@dataclass(frozen=True)
class SvmConfig:
    """SVM 训练配置"""
    C: float = 1.0
    epochs: int = 100
    seed: int = 42

    def __post_init__(self) -> None:
        if not self.C > 0:
            raise ConfigError(f"正则化系数 C 必须为正: {self.C}")
        if self.epochs < 1:
            raise ConfigError(f"训练轮数必须为正: {self.epochs}")

    def to_dict(self) -> Dict[str, Any]:
        return {"C": self.C, "epochs": self.epochs, "seed": self.seed}


@dataclass(frozen=True)
class Standardizer:
    """逐维标准化 (x − mean) / scale，方差为 0 的维度 scale 取 1"""
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, matrix: np.ndarray) -> "Standardizer":
        mean = matrix.mean(axis=0)
        std = matrix.std(axis=0)
        scale = np.where(std > 0, std, 1.0)
        return cls(mean, scale)

    @classmethod
    def identity(cls, length: int) -> "Standardizer":
        return cls(np.zeros(length), np.ones(length))

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        return (matrix - self.mean) / self.scale


@dataclass(frozen=True)
class LinearModel:
    """
    二类线性分类器

    w·x + b > 0 判为 class_pair[1]，否则判为 class_pair[0]
    """
    weights: np.ndarray = field(repr=False)
    bias: float
    class_pair: Tuple[str, str]

    def decision(self, matrix: np.ndarray) -> np.ndarray:
        return matrix @ self.weights + self.bias

    def vote(self, matrix: np.ndarray) -> np.ndarray:
        """每行投给的类别索引：0 → class_pair[0]，1 → class_pair[1]"""
        return (self.decision(matrix) > 0).astype(np.int64)


@dataclass(frozen=True)
class OvoSvmModel:
    """
    一对一多类 SVM 模型

    Attributes:
        classes: 有序、互不相同的类别列表
        models: 每个无序类别对一个 LinearModel，共 k·(k−1)/2 个
        config: 训练配置
        feature_meta: 训练特征的元信息
        standardizer: 训练集上估计的标准化参数
    """
    classes: Tuple[str, ...]
    models: Tuple[LinearModel, ...]
    config: SvmConfig
    feature_meta: FeatureMeta
    standardizer: Standardizer

    def __post_init__(self) -> None:
        k = len(self.classes)
        if len(self.models) != k * (k - 1) // 2:
            raise ValueError(f"{k} 个类别应有 {k * (k - 1) // 2} 个二类模型，实际 {len(self.models)} 个")

    def check_meta(self, feature: FeatureVector) -> None:
        if feature.meta != self.feature_meta:
            raise InconsistentFeatureMetaError(
                f"特征元信息 {feature.meta.to_dict()} 与模型 {self.feature_meta.to_dict()} 不一致")


def _pegasos(x: np.ndarray, y: np.ndarray, config: SvmConfig, seed: int) -> Tuple[np.ndarray, float]:
    """
    单个类别对的 Pegasos 训练

    偏置作为值恒为 1 的增广特征一起学习；y 取 ±1
    """
    n, d = x.shape
    augmented = np.hstack([x, np.ones((n, 1))])
    lam = 1.0 / (config.C * n)
    radius = 1.0 / np.sqrt(lam)
    rng = np.random.default_rng(seed)
    w = np.zeros(d + 1)
    t = 0
    for _ in range(config.epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = y[i] * float(augmented[i] @ w)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += (eta * y[i]) * augmented[i]
            norm = float(np.linalg.norm(w))
            if norm > radius:
                w *= radius / norm
    return w[:-1].copy(), float(w[-1])


def _check_meta(features: Sequence[FeatureVector]) -> FeatureMeta:
    meta = features[0].meta
    for index, feature in enumerate(features):
        if feature.meta != meta:
            raise InconsistentFeatureMetaError(
                f"第 {index} 个特征的元信息 {feature.meta.to_dict()} 与首个特征 {meta.to_dict()} 不一致")
    return meta


@my_logger.runtime_logger
def train_ovo_svm(features: Sequence[FeatureVector], labels: Sequence[str],
                  config: Optional[SvmConfig] = None, jobs: int = 1) -> OvoSvmModel:
    """
    训练一对一线性 SVM

    Args:
        features: 特征向量列表，元信息必须一致
        labels: 对应的类别标签
        config: 训练配置，默认 SvmConfig()
        jobs: 并行训练的线程数，不影响结果

    Returns:
        OvoSvmModel: 训练好的模型

    Raises:
        EmptyDatasetError: 没有样本
        SingleClassError: 少于两个类别
        InconsistentFeatureMetaError: 特征元信息不一致
    """
    config = config or SvmConfig()
    if not features:
        raise EmptyDatasetError("训练集为空")
    if len(features) != len(labels):
        raise ConfigError(f"特征数 {len(features)} 与标签数 {len(labels)} 不符")
    meta = _check_meta(features)
    labels = [str(label) for label in labels]
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise SingleClassError(f"训练集至少需要两个类别，实际为: {list(classes)}")

    standardizer = Standardizer.fit(stack_features(features))
    matrix = standardizer.transform(stack_features(features))
    label_array = np.array(labels)
    pairs = list(combinations(classes, 2))
    my_logger.logger.info(
        f"🧠 训练一对一 SVM | 类别: {len(classes)} | 二类模型: {len(pairs)} | 样本: {len(labels)} | 维度: {meta.length}")

    def train_pair(item: Tuple[int, Tuple[str, str]]) -> LinearModel:
        index, (label_a, label_b) = item
        mask = (label_array == label_a) | (label_array == label_b)
        y = np.where(label_array[mask] == label_b, 1.0, -1.0)
        weights, bias = _pegasos(matrix[mask], y, config, config.seed + index)
        return LinearModel(weights, bias, (label_a, label_b))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            models = tuple(pool.map(train_pair, enumerate(pairs)))
    else:
        models = tuple(train_pair(item) for item in enumerate(pairs))

    return OvoSvmModel(classes, models, config, meta, standardizer)


def vote_counts(model: OvoSvmModel, matrix: np.ndarray) -> np.ndarray:
    """
    各样本的票数矩阵

    Args:
        model: 模型
        matrix: 未标准化的 (n, d) 特征矩阵

    Returns:
        np.ndarray: (n, k) 票数，列顺序与 model.classes 一致
    """
    index = {label: k for k, label in enumerate(model.classes)}
    scaled = model.standardizer.transform(np.atleast_2d(matrix))
    votes = np.zeros((scaled.shape[0], len(model.classes)), dtype=np.int64)
    rows = np.arange(scaled.shape[0])
    for linear in model.models:
        pair_index = np.array([index[linear.class_pair[0]], index[linear.class_pair[1]]])
        winners = pair_index[linear.vote(scaled)]
        np.add.at(votes, (rows, winners), 1)
    return votes


def predict_many(model: OvoSvmModel, features: Sequence[FeatureVector]) -> List[str]:
    """批量预测，argmax 取首个最大值即类别顺序中最小者"""
    for feature in features:
        model.check_meta(feature)
    if not features:
        return []
    votes = vote_counts(model, stack_features(features))
    return [model.classes[k] for k in np.argmax(votes, axis=1)]


def predict(model: OvoSvmModel, feature: FeatureVector) -> str:
    """
    预测单个特征向量的类别

    Raises:
        InconsistentFeatureMetaError: 特征元信息与模型不一致
    """
    return predict_many(model, [feature])[0]


def chi_square_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Σ (x − y)² / (x + y + ε)"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return float(np.sum((x - y) ** 2 / (x + y + CHI_SQUARE_EPS)))


def knn_predict(train: Sequence[Tuple[FeatureVector, str]], query: FeatureVector, k: int = 1) -> str:
    """
    卡方距离 k 近邻

    距离并列时训练顺序靠前者优先，票数并列时取最小标签

    Raises:
        EmptyDatasetError: 训练集为空
        KTooLargeError: k 大于训练样本数
    """
    if not train:
        raise EmptyDatasetError("k 近邻训练集为空")
    if k < 1:
        raise ConfigError(f"k 必须为正: {k}")
    if k > len(train):
        raise KTooLargeError(f"k = {k} 大于训练样本数 {len(train)}")
    matrix = stack_features([feature for feature, _ in train])
    if matrix.shape[1] != len(query):
        raise InconsistentFeatureMetaError(
            f"查询特征长度 {len(query)} 与训练特征长度 {matrix.shape[1]} 不符")
    q = query.values
    distances = np.sum((matrix - q) ** 2 / (matrix + q + CHI_SQUARE_EPS), axis=1)
    nearest = np.argsort(distances, kind="stable")[:k]
    counts = Counter(str(train[i][1]) for i in nearest)
    best = max(counts.values())
    return min(label for label, count in counts.items() if count == best)


def _metadata(model: OvoSvmModel) -> Dict[str, Any]:
    return {
        "classes": list(model.classes),
        "config": model.config.to_dict(),
        "feature_meta": model.feature_meta.to_dict(),
        "pairs": [list(m.class_pair) for m in model.models],
        "dimension": int(model.standardizer.mean.size),
    }


def model_to_json(model: OvoSvmModel) -> Dict[str, Any]:
    """无损 JSON 导出（浮点数以 repr 精度保存）"""
    data = _metadata(model)
    data["standardizer"] = {
        "mean": [float(v) for v in model.standardizer.mean],
        "scale": [float(v) for v in model.standardizer.scale],
    }
    data["models"] = [
        {"class_pair": list(m.class_pair), "weights": [float(v) for v in m.weights], "bias": float(m.bias)}
        for m in model.models
    ]
    return data


def model_from_json(data: Dict[str, Any]) -> OvoSvmModel:
    """由 model_to_json 的结果重建模型"""
    try:
        config = SvmConfig(**data["config"])
        meta = FeatureMeta.from_dict(data["feature_meta"])
        standardizer = Standardizer(np.array(data["standardizer"]["mean"], dtype=np.float64),
                                    np.array(data["standardizer"]["scale"], dtype=np.float64))
        models = tuple(
            LinearModel(np.array(m["weights"], dtype=np.float64), float(m["bias"]),
                        (str(m["class_pair"][0]), str(m["class_pair"][1])))
            for m in data["models"]
        )
        return OvoSvmModel(tuple(str(c) for c in data["classes"]), models, config, meta, standardizer)
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptModelError(f"模型 JSON 内容非法: {e}") from e


@error_handler
def save_model(model: OvoSvmModel, path: PathLike, json_path: Optional[PathLike] = None) -> Path:
    """
    写出 DPSVM001 二进制模型

    布局（小端）: 魔数 8 字节 | 元数据长度 u32 | UTF-8 JSON 元数据 |
    float64 mean[d] | float64 scale[d] | 每个二类模型 float64 weights[d] + bias
    """
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    meta_bytes = json.dumps(_metadata(model), sort_keys=True).encode("utf-8")
    arrays = [model.standardizer.mean, model.standardizer.scale]
    for linear in model.models:
        arrays.append(linear.weights)
        arrays.append(np.array([linear.bias]))
    payload = np.concatenate(arrays).astype("<f8").tobytes()
    out.write_bytes(MODEL_MAGIC + struct.pack("<I", len(meta_bytes)) + meta_bytes + payload)
    my_logger.logger.info(f"💾 写出模型: {out}")

    if json_path is not None:
        json_out = Path(json_path)
        json_out.parent.mkdir(parents=True, exist_ok=True)
        json_out.write_text(json.dumps(model_to_json(model), indent=2, sort_keys=True), encoding="utf-8")
        my_logger.logger.info(f"💾 写出模型 JSON: {json_out}")
    return out


@error_handler
def load_model(path: PathLike) -> OvoSvmModel:
    """读取 DPSVM001 二进制模型"""
    data = Path(path).read_bytes()
    header = len(MODEL_MAGIC) + 4
    if len(data) < header or data[:len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise CorruptModelError(f"模型魔数错误: {path}")
    (meta_length,) = struct.unpack_from("<I", data, len(MODEL_MAGIC))
    try:
        meta = json.loads(data[header:header + meta_length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptModelError(f"模型元数据损坏: {path}") from e

    payload = data[header + meta_length:]
    if len(payload) % 8:
        raise CorruptModelError(f"模型权重区长度不是 8 的整数倍: {path}")
    try:
        d = int(meta["dimension"])
        pairs = list(meta["pairs"])
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptModelError(f"模型元数据缺少 dimension / pairs: {path}") from e

    values = np.frombuffer(payload, dtype="<f8")
    if values.size != 2 * d + len(pairs) * (d + 1):
        raise CorruptModelError(f"模型权重长度与元数据不符: {path}")

    document = dict(meta)
    document["standardizer"] = {"mean": values[:d].tolist(), "scale": values[d:2 * d].tolist()}
    models = []
    offset = 2 * d
    for pair in pairs:
        models.append({"class_pair": pair, "weights": values[offset:offset + d].tolist(),
                       "bias": float(values[offset + d])})
        offset += d + 1
    document["models"] = models
    return model_from_json(document)
