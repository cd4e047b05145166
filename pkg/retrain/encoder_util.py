"""
编码器工具模块

将灰度图像编码为逐像素码图，支持以下特性：

功能特性:
    - RETRaIN 编码
        * code = 8 · 主方向 + 次方向，共 64 个码
    - 对比基线
        * LBP：8 邻域与中心比较，256 个码
        * CS-LBP：4 对中心对称邻居比较，阈值 T = 1，16 个码
        * LDP：|罗盘响应| 前 k = 3 个方向，按字典序稠密编号，56 个码
        * LDN：带符号响应的最大 / 最小方向有序对，稠密编号，56 个码
    - 码图持久化
        * 二进制记录 DPCM0001
        * PGM 可视化导出

技术特点:
    - 基于 numpy 实现，整幅图像向量化
    - 纯函数，可并发调用
    - 完整的类型注解
"""

import struct
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Dict, Union

import numpy as np

from .compass_util import (
    DIRECTION_COUNT, DIRECTION_OFFSETS, primary_map, response_stack, secondary_map
)
from .error_util import CorruptModelError, UnknownMethodError, error_handler
from .image_util import GrayImage, PathLike, require_encodable
from .log_util import my_logger

CODEMAP_MAGIC = b"DPCM0001"
_CODEMAP_HEADER = struct.Struct("<8sIII8s")

LDP_TOP_K = 3
CSLBP_THRESHOLD = 1


class Method(str, Enum):
    """描述子标识"""
    RETRAIN = "RETRAIN"
    LBP = "LBP"
    CSLBP = "CSLBP"
    LDP = "LDP"
    LDN = "LDN"

    @property
    def code_count(self) -> int:
        return _CODE_COUNTS[self]

    @classmethod
    def parse(cls, value: Union[str, "Method"]) -> "Method":
        """按名称解析（不区分大小写，允许 CS-LBP 写法）"""
        if isinstance(value, Method):
            return value
        key = str(value).strip().upper().replace("-", "").replace("_", "")
        try:
            return cls(key)
        except ValueError:
            raise UnknownMethodError(
                f"未知的描述子: {value}，可选: {', '.join(m.value for m in cls)}") from None

    def __str__(self) -> str:
        return self.value


_CODE_COUNTS: Dict[Method, int] = {
    Method.RETRAIN: 64,
    Method.LBP: 256,
    Method.CSLBP: 16,
    Method.LDP: 56,
    Method.LDN: 56,
}


def _build_ldp_rank() -> np.ndarray:
    """8 位字（恰好 3 位为 1）→ 字典序编号，其余为 -1"""
    table = np.full(256, -1, dtype=np.int16)
    for rank, combo in enumerate(combinations(range(DIRECTION_COUNT), LDP_TOP_K)):
        table[sum(1 << c for c in combo)] = rank
    return table


LDP_RANK = _build_ldp_rank()


def ldn_pair_code(max_index: np.ndarray, min_index: np.ndarray) -> np.ndarray:
    """有序对 (a, b)，a ≠ b → 7·a + (b if b < a else b − 1)"""
    return 7 * max_index + np.where(min_index < max_index, min_index, min_index - 1)


@dataclass(frozen=True)
class CodeMap:
    """
    逐像素码图

    Attributes:
        codes: 形状 (height, width) 的整数数组
        code_count: 码值上界（不含）
        method: 描述子标识
    """
    codes: np.ndarray
    code_count: int
    method: Method

    def __post_init__(self) -> None:
        codes = np.array(self.codes, dtype=np.int64, copy=True)
        if codes.ndim != 2:
            raise ValueError(f"码图必须是二维数组，实际维度: {codes.ndim}")
        if codes.size and (codes.min() < 0 or codes.max() >= self.code_count):
            raise ValueError(f"码值超出范围 [0, {self.code_count})")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    @property
    def width(self) -> int:
        return int(self.codes.shape[1])

    @property
    def height(self) -> int:
        return int(self.codes.shape[0])


def encode_retrain(image: GrayImage) -> CodeMap:
    """
    RETRaIN 编码

    Args:
        image: 宽高均 ≥ 5 的灰度图像

    Returns:
        CodeMap: code(i, j) = 8 · P(i, j) + S(i, j)，code_count = 64

    Raises:
        ImageTooSmallError: 图像过小
    """
    stack = response_stack(image)
    primary = primary_map(stack).astype(np.int64)
    secondary = secondary_map(stack).astype(np.int64)
    return CodeMap(8 * primary + secondary, Method.RETRAIN.code_count, Method.RETRAIN)


def _neighbor_planes(image: GrayImage) -> np.ndarray:
    """按方向索引排列的 8 邻域像素平面，边界复制"""
    h, w = image.height, image.width
    padded = np.pad(image.pixels.astype(np.int32), 1, mode="edge")
    return np.stack([padded[1 + di:1 + di + h, 1 + dj:1 + dj + w] for di, dj in DIRECTION_OFFSETS])


def _encode_lbp(image: GrayImage) -> np.ndarray:
    neighbors = _neighbor_planes(image)
    center = image.pixels.astype(np.int32)
    codes = np.zeros(center.shape, dtype=np.int64)
    for k in range(DIRECTION_COUNT):
        codes |= (neighbors[k] >= center).astype(np.int64) << k
    return codes


def _encode_cslbp(image: GrayImage) -> np.ndarray:
    neighbors = _neighbor_planes(image)
    codes = np.zeros(image.pixels.shape, dtype=np.int64)
    for k in range(DIRECTION_COUNT // 2):
        codes |= (neighbors[k] > neighbors[k + 4] + CSLBP_THRESHOLD).astype(np.int64) << k
    return codes


def _encode_ldp(image: GrayImage) -> np.ndarray:
    magnitudes = np.abs(response_stack(image).planes)
    # 稳定排序保证并列时最小索引优先
    order = np.argsort(-magnitudes, axis=0, kind="stable")[:LDP_TOP_K]
    words = np.zeros(image.pixels.shape, dtype=np.int64)
    for k in range(LDP_TOP_K):
        words |= np.left_shift(1, order[k].astype(np.int64))
    return LDP_RANK[words].astype(np.int64)


def _encode_ldn(image: GrayImage) -> np.ndarray:
    planes = response_stack(image).planes
    max_index = np.argmax(planes, axis=0).astype(np.int64)
    min_index = np.argmin(planes, axis=0).astype(np.int64)
    # 全部响应相等时 argmax 与 argmin 同为 0，改取除 argmax 外的最小索引
    min_index = np.where(min_index == max_index, np.where(max_index == 0, 1, 0), min_index)
    return ldn_pair_code(max_index, min_index)


_BASELINES = {
    Method.LBP: _encode_lbp,
    Method.CSLBP: _encode_cslbp,
    Method.LDP: _encode_ldp,
    Method.LDN: _encode_ldn,
}


def encode_baseline(image: GrayImage, method: Union[str, Method]) -> CodeMap:
    """
    对比基线编码

    Args:
        image: 宽高均 ≥ 5 的灰度图像
        method: LBP | CSLBP | LDP | LDN

    Returns:
        CodeMap: 与图像同尺寸的码图

    Raises:
        ImageTooSmallError: 图像过小
        UnknownMethodError: 未知或非基线方法
    """
    method = Method.parse(method)
    if method not in _BASELINES:
        raise UnknownMethodError(f"{method.value} 不是基线描述子")
    require_encodable(image)
    return CodeMap(_BASELINES[method](image), method.code_count, method)


def encode(image: GrayImage, method: Union[str, Method]) -> CodeMap:
    """按方法分派编码"""
    method = Method.parse(method)
    if method is Method.RETRAIN:
        return encode_retrain(image)
    return encode_baseline(image, method)


def codemap_to_image(codemap: CodeMap) -> GrayImage:
    """码值乘以 floor(255 / (code_count − 1)) 得到可视化图像"""
    scale = 255 // max(codemap.code_count - 1, 1)
    return GrayImage(codemap.codes * scale)


@error_handler
def save_codemap(codemap: CodeMap, path: PathLike) -> Path:
    """
    写出 DPCM0001 二进制码图

    布局（小端）: 魔数 8 字节 | width u32 | height u32 | code_count u32 |
    方法名 8 字节（NUL 填充）| 码值 u16 行优先
    """
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    header = _CODEMAP_HEADER.pack(
        CODEMAP_MAGIC, codemap.width, codemap.height, codemap.code_count,
        codemap.method.value.encode("ascii"))
    out.write_bytes(header + codemap.codes.astype("<u2").tobytes())
    my_logger.logger.debug(f"💾 写出码图: {out}")
    return out


@error_handler
def load_codemap(path: PathLike) -> CodeMap:
    """读取 DPCM0001 二进制码图"""
    data = Path(path).read_bytes()
    if len(data) < _CODEMAP_HEADER.size:
        raise CorruptModelError(f"码图文件过短: {path}")
    magic, width, height, code_count, method = _CODEMAP_HEADER.unpack_from(data)
    if magic != CODEMAP_MAGIC:
        raise CorruptModelError(f"码图魔数错误 {magic!r}: {path}")
    payload = data[_CODEMAP_HEADER.size:]
    if len(payload) != 2 * width * height:
        raise CorruptModelError(f"码图数据长度与尺寸 {width}x{height} 不符: {path}")
    codes = np.frombuffer(payload, dtype="<u2").reshape(height, width)
    try:
        return CodeMap(codes, code_count, Method.parse(method.rstrip(b"\0").decode("ascii")))
    except ValueError as e:
        raise CorruptModelError(f"码图内容非法: {path} ({e})") from e
