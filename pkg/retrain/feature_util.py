"""
特征工具模块

将码图转换为区域直方图特征向量，支持以下特性：

功能特性:
    - 区域网格
        * 行 × 列划分，边界取 floor，恰好覆盖全部像素
    - 区域直方图
        * RAW 计数 / L1 归一化
        * 区域按行优先拼接，码值变化最快
    - 特征持久化
        * CSV 行（样本编号、标签、方法、网格、归一化 + 特征值）
        * 二进制记录 DPFV0001（小端 float64）

技术特点:
    - 基于 numpy 实现
    - 纯函数，可并发调用
    - 完整的类型注解
"""

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .encoder_util import CodeMap, Method, encode
from .error_util import ConfigError, CorruptModelError, GridTooFineError, error_handler
from .image_util import GrayImage, PathLike
from .log_util import my_logger

FEATURE_MAGIC = b"DPFV0001"
CSV_META_COLUMNS = ("sample_id", "label", "method", "grid", "norm")


class Norm(str, Enum):
    """直方图归一化方式"""
    RAW = "RAW"
    L1 = "L1"

    @classmethod
    def parse(cls, value: Union[str, "Norm"]) -> "Norm":
        if isinstance(value, Norm):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ConfigError(f"未知的归一化方式: {value}，可选: RAW, L1") from None

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class RegionGrid:
    """区域网格（行 × 列）"""
    rows: int
    cols: int

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"网格行列数必须为正: {self.rows}x{self.cols}")

    @classmethod
    def parse(cls, text: Union[str, "RegionGrid"]) -> "RegionGrid":
        """解析 "7x6" 形式的网格描述"""
        if isinstance(text, RegionGrid):
            return text
        parts = str(text).lower().split("x")
        if len(parts) != 2 or not all(p.strip().isdigit() for p in parts):
            raise ConfigError(f"网格格式应为 <行>x<列>，实际为: {text}")
        return cls(int(parts[0]), int(parts[1]))

    @property
    def region_count(self) -> int:
        return self.rows * self.cols

    def bounds(self, height: int, width: int) -> List[Tuple[int, int, int, int]]:
        """
        各区域边界，行优先

        区域 (r, c) 覆盖行 [floor(r·H/rows), floor((r+1)·H/rows)) 与对应的列区间

        Raises:
            GridTooFineError: 存在空区域
        """
        if self.rows > height or self.cols > width:
            raise GridTooFineError(
                f"网格 {self} 对 {width}x{height} 的码图过细，存在空区域")
        row_edges = [(r * height) // self.rows for r in range(self.rows + 1)]
        col_edges = [(c * width) // self.cols for c in range(self.cols + 1)]
        return [
            (row_edges[r], row_edges[r + 1], col_edges[c], col_edges[c + 1])
            for r in range(self.rows) for c in range(self.cols)
        ]

    def __str__(self) -> str:
        return f"{self.rows}x{self.cols}"


class FeatureConfig:
    """特征配置类"""
    DEFAULT_GRID: RegionGrid = RegionGrid(7, 6)
    DEFAULT_NORM: Norm = Norm.RAW
    L1_TOLERANCE: float = 1e-9


@dataclass(frozen=True)
class FeatureMeta:
    """特征元信息，模型预测时必须完全一致"""
    method: Method
    grid: RegionGrid
    norm: Norm
    code_count: int

    @property
    def length(self) -> int:
        return self.grid.region_count * self.code_count

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "grid": str(self.grid),
            "norm": self.norm.value,
            "code_count": self.code_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureMeta":
        return cls(
            method=Method.parse(data["method"]),
            grid=RegionGrid.parse(data["grid"]),
            norm=Norm.parse(data["norm"]),
            code_count=int(data["code_count"]),
        )


@dataclass(frozen=True)
class FeatureVector:
    """
    区域直方图特征向量

    Attributes:
        values: 非负 float64，长度 rows × cols × code_count
        meta: 方法、网格、归一化、码数
    """
    values: np.ndarray = field(repr=False)
    meta: FeatureMeta

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True).ravel()
        if values.size != self.meta.length:
            raise ValueError(f"特征长度 {values.size} 与元信息要求的 {self.meta.length} 不符")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.size)

    def region_slice(self, region: int) -> np.ndarray:
        start = region * self.meta.code_count
        return self.values[start:start + self.meta.code_count]


def region_histograms(codes: CodeMap, grid: Union[RegionGrid, str],
                      norm: Union[Norm, str] = FeatureConfig.DEFAULT_NORM) -> FeatureVector:
    """
    区域直方图

    Args:
        codes: 码图
        grid: 区域网格
        norm: RAW 计数或 L1（每个区域除以其像素数）

    Returns:
        FeatureVector: 区域行优先拼接的直方图

    Raises:
        GridTooFineError: 存在空区域
    """
    grid = RegionGrid.parse(grid)
    norm = Norm.parse(norm)
    slices = []
    for top, bottom, left, right in grid.bounds(codes.height, codes.width):
        block = codes.codes[top:bottom, left:right].ravel()
        hist = np.bincount(block, minlength=codes.code_count).astype(np.float64)
        if norm is Norm.L1:
            hist /= block.size
        slices.append(hist)
    meta = FeatureMeta(codes.method, grid, norm, codes.code_count)
    return FeatureVector(np.concatenate(slices), meta)


def extract_features(image: GrayImage, method: Union[Method, str],
                     grid: Union[RegionGrid, str] = FeatureConfig.DEFAULT_GRID,
                     norm: Union[Norm, str] = FeatureConfig.DEFAULT_NORM) -> FeatureVector:
    """编码并计算区域直方图"""
    return region_histograms(encode(image, method), grid, norm)


def cosine_similarity(a: FeatureVector, b: FeatureVector) -> float:
    """两个特征向量的余弦相似度"""
    denom = float(np.linalg.norm(a.values) * np.linalg.norm(b.values))
    if denom == 0.0:
        return 0.0
    return float(np.dot(a.values, b.values) / denom)


@dataclass(frozen=True)
class FeatureRow:
    """CSV 中的一行：样本编号、标签与特征"""
    sample_id: str
    label: Optional[str]
    feature: FeatureVector


@error_handler
def write_feature_csv(rows: Iterable[FeatureRow], path: PathLike) -> Path:
    """
    写出特征 CSV

    表头: sample_id,label,method,grid,norm,f0,...,f{n-1}
    """
    rows = list(rows)
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    length = len(rows[0].feature) if rows else 0
    with out.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([*CSV_META_COLUMNS, *(f"f{k}" for k in range(length))])
        for row in rows:
            meta = row.feature.meta
            writer.writerow([
                row.sample_id, row.label or "", meta.method.value, str(meta.grid), meta.norm.value,
                *(repr(float(v)) for v in row.feature.values),
            ])
    my_logger.logger.info(f"💾 写出特征 CSV: {out} | 行数: {len(rows)}")
    return out


@error_handler
def read_feature_csv(path: PathLike) -> List[FeatureRow]:
    """读取 write_feature_csv 写出的文件"""
    rows: List[FeatureRow] = []
    with Path(path).open("r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header[:len(CSV_META_COLUMNS)]) != CSV_META_COLUMNS:
            raise CorruptModelError(f"特征 CSV 表头非法: {path}")
        for record in reader:
            if len(record) < len(CSV_META_COLUMNS):
                raise CorruptModelError(f"特征 CSV 第 {reader.line_num} 行缺少列: {path}")
            sample_id, label, method, grid, norm = record[:len(CSV_META_COLUMNS)]
            method = Method.parse(method)
            meta = FeatureMeta(method, RegionGrid.parse(grid), Norm.parse(norm), method.code_count)
            try:
                values = [float(v) for v in record[len(CSV_META_COLUMNS):]]
            except ValueError as e:
                raise CorruptModelError(f"特征 CSV 第 {reader.line_num} 行含非数值: {path}") from e
            if len(values) != meta.length:
                raise CorruptModelError(
                    f"特征 CSV 第 {reader.line_num} 行有 {len(values)} 个值，应为 {meta.length}: {path}")
            rows.append(FeatureRow(sample_id, label or None, FeatureVector(np.array(values), meta)))
    return rows


def save_feature_vector(feature: FeatureVector, path: PathLike) -> Path:
    """写出 DPFV0001 记录：8 字节魔数 + 小端 float64 数组"""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(FEATURE_MAGIC + feature.values.astype("<f8").tobytes())
    return out


def load_feature_vector(path: PathLike, meta: FeatureMeta) -> FeatureVector:
    """读取 DPFV0001 记录，元信息由调用方提供"""
    data = Path(path).read_bytes()
    if data[:len(FEATURE_MAGIC)] != FEATURE_MAGIC:
        raise CorruptModelError(f"特征记录魔数错误: {path}")
    payload = data[len(FEATURE_MAGIC):]
    if len(payload) % 8:
        raise CorruptModelError(f"特征记录长度不是 8 的整数倍: {path}")
    values = np.frombuffer(payload, dtype="<f8")
    if values.size != meta.length:
        raise CorruptModelError(f"特征记录长度 {values.size} 与元信息要求的 {meta.length} 不符: {path}")
    return FeatureVector(values, meta)


def stack_features(features: Sequence[FeatureVector]) -> np.ndarray:
    """特征向量堆叠为 (n, d) 矩阵"""
    return np.vstack([f.values for f in features])
