"""
图像工具模块

提供描述子所依赖的灰度图像表示与基础算子，支持以下特性：

功能特性:
    - 灰度图像表示
        * 行优先 8 位强度
        * 不可变，可在线程间共享
    - 文件读写
        * PGM（二进制 P5 / ASCII P2，maxval 必须为 255）
        * PNG（彩色图像按 BT.601 整数亮度转换）
    - 边界策略
        * 复制边缘像素的填充
    - 3×3 互相关
        * 不翻转卷积核
        * 全程有符号整数运算

技术特点:
    - 基于 numpy 实现
    - PNG 解码基于 Pillow
    - 完整的类型注解
"""

import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .error_util import (
    CorruptImageError, ImageFileNotFoundError, ImageTooSmallError,
    UnsupportedFormatError, error_handler
)
from .log_util import my_logger

PathLike = Union[str, os.PathLike]

# 响应值的整数类型，|响应| ≤ 1530，int32 留有充足余量
RESPONSE_DTYPE = np.int32

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_PGM_TOKEN = re.compile(rb"\S+")


@dataclass(frozen=True)
class GrayImage:
    """
    灰度图像

    Attributes:
        pixels: 形状为 (height, width) 的只读 uint8 数组
    """
    pixels: np.ndarray

    def __post_init__(self) -> None:
        array = np.asarray(self.pixels)
        if array.ndim != 2:
            raise ValueError(f"灰度图像必须是二维数组，实际维度: {array.ndim}")
        if array.shape[0] < 1 or array.shape[1] < 1:
            raise ValueError(f"图像尺寸必须为正: {array.shape}")
        if array.dtype != np.uint8:
            if np.any(array < 0) or np.any(array > 255):
                raise ValueError("像素值必须位于 [0, 255]")
            array = array.astype(np.uint8)
        array = np.array(array, dtype=np.uint8, copy=True)
        array.setflags(write=False)
        object.__setattr__(self, "pixels", array)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "GrayImage":
        """由嵌套列表构造图像"""
        return cls(np.asarray(rows, dtype=np.int64))

    def to_rows(self) -> List[List[int]]:
        return self.pixels.tolist()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self) -> int:
        return hash((self.pixels.shape, self.pixels.tobytes()))


def make_kernel(weights: Sequence[Sequence[int]]) -> np.ndarray:
    """
    构造只读 3×3 整数卷积核

    Args:
        weights: 行优先的 3×3 权重

    Returns:
        np.ndarray: 形状 (3, 3) 的 int32 数组
    """
    kernel = np.array(weights, dtype=RESPONSE_DTYPE)
    if kernel.shape != (3, 3):
        raise ValueError(f"卷积核必须为 3×3，实际形状: {kernel.shape}")
    kernel.setflags(write=False)
    return kernel


def luma(rgb: np.ndarray) -> np.ndarray:
    """
    BT.601 整数亮度

    round(0.299·R + 0.587·G + 0.114·B)，取整为四舍五入（0.5 向上）

    Args:
        rgb: 形状 (..., 3) 的 uint8 数组

    Returns:
        np.ndarray: 与输入同形（去掉最后一维）的 uint8 数组
    """
    channels = rgb.astype(np.int64)
    weighted = 299 * channels[..., 0] + 587 * channels[..., 1] + 114 * channels[..., 2]
    return ((weighted + 500) // 1000).astype(np.uint8)


def _parse_pgm(data: bytes, path: str) -> GrayImage:
    """解析 P2 / P5 数据"""
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise UnsupportedFormatError(f"不支持的 PNM 类型 {magic!r}: {path}")

    # 逐个读取头部记号，# 起始的注释延续到行尾
    header: List[int] = []
    pos = 2
    while len(header) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise CorruptImageError(f"PGM 头部不完整: {path}")
        if data[pos:pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
            continue
        match = _PGM_TOKEN.match(data, pos)
        token = match.group(0)
        if not token.isdigit():
            raise CorruptImageError(f"PGM 头部字段非法 {token!r}: {path}")
        header.append(int(token))
        pos = match.end()

    width, height, maxval = header
    if width < 1 or height < 1:
        raise CorruptImageError(f"PGM 尺寸非法 {width}x{height}: {path}")
    if maxval != 255:
        raise UnsupportedFormatError(f"PGM maxval 必须为 255，实际为 {maxval}: {path}")

    count = width * height
    if magic == b"P5":
        # 头部之后恰好一个空白字符
        payload = data[pos + 1:]
        if len(payload) != count:
            raise CorruptImageError(
                f"PGM 像素数据长度 {len(payload)} 与尺寸 {width}x{height} 不符: {path}")
        pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    else:
        tokens = _PGM_TOKEN.findall(data, pos)
        if len(tokens) != count:
            raise CorruptImageError(
                f"PGM 像素个数 {len(tokens)} 与尺寸 {width}x{height} 不符: {path}")
        try:
            values = np.array([int(t) for t in tokens], dtype=np.int64)
        except ValueError as e:
            raise CorruptImageError(f"PGM 像素值非法: {path}") from e
        if np.any(values > 255):
            raise CorruptImageError(f"PGM 像素值超过 maxval: {path}")
        pixels = values.reshape(height, width)
    return GrayImage(pixels)


def _decode_png(path: str) -> GrayImage:
    """使用 Pillow 解码 PNG"""
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode == "L":
                return GrayImage(np.array(img, dtype=np.uint8))
            if img.mode == "1":
                return GrayImage(np.array(img.convert("L"), dtype=np.uint8))
            if img.mode in ("P", "RGB", "RGBA", "LA", "PA"):
                return GrayImage(luma(np.array(img.convert("RGB"), dtype=np.uint8)))
            raise UnsupportedFormatError(f"不支持的 PNG 像素模式 {img.mode}: {path}")
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise CorruptImageError(f"PNG 解码失败: {path} ({e})") from e


@error_handler
def load_grayscale(path: PathLike) -> GrayImage:
    """
    读取灰度图像

    Args:
        path: PGM（P2/P5）或 PNG 文件路径

    Returns:
        GrayImage: 解码后的灰度图像

    Raises:
        ImageFileNotFoundError: 文件不存在
        UnsupportedFormatError: 既不是 PGM 也不是 PNG，或 maxval 不为 255
        CorruptImageError: 尺寸与像素数据不符
    """
    path_str = os.fspath(path)
    if not os.path.isfile(path_str):
        raise ImageFileNotFoundError(f"图像文件不存在: {path_str}")

    with open(path_str, "rb") as f:
        data = f.read()

    if data.startswith(PNG_SIGNATURE):
        image = _decode_png(path_str)
    elif data[:2] in (b"P2", b"P5"):
        image = _parse_pgm(data, path_str)
    else:
        raise UnsupportedFormatError(f"无法识别的图像格式: {path_str}")

    my_logger.logger.debug(f"🖼️ 读取图像: {path_str} | 尺寸: {image.width}x{image.height}")
    return image


def save_pgm(image: GrayImage, path: PathLike, binary: bool = True) -> Path:
    """
    写出 PGM 文件

    Args:
        image: 灰度图像
        path: 输出路径，父目录不存在时自动创建
        binary: True 写 P5，False 写 P2

    Returns:
        Path: 输出路径
    """
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    if binary:
        header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
        out.write_bytes(header + image.pixels.tobytes())
    else:
        lines = [f"P2\n{image.width} {image.height}\n255"]
        lines.extend(" ".join(str(v) for v in row) for row in image.pixels.tolist())
        out.write_text("\n".join(lines) + "\n", encoding="ascii")
    my_logger.logger.debug(f"💾 写出 PGM: {out}")
    return out


def pad_replicate(image: GrayImage, margin: int) -> GrayImage:
    """
    复制边缘填充

    Args:
        image: 输入图像
        margin: 每侧填充宽度，≥ 0

    Returns:
        GrayImage: (width + 2·margin) × (height + 2·margin) 的图像
    """
    if margin < 0:
        raise ValueError(f"填充宽度不能为负: {margin}")
    if margin == 0:
        return image
    return GrayImage(np.pad(image.pixels, margin, mode="edge"))


def correlate_array(padded: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """
    对已填充的二维数组做 3×3 互相关（valid 区域）

    Args:
        padded: 形状 (h + 2, w + 2) 的数组
        kernel: 3×3 整数卷积核

    Returns:
        np.ndarray: 形状 (h, w) 的 int32 响应
    """
    rows, cols = padded.shape[0] - 2, padded.shape[1] - 2
    source = padded.astype(RESPONSE_DTYPE, copy=False)
    out = np.zeros((rows, cols), dtype=RESPONSE_DTYPE)
    for di in range(3):
        for dj in range(3):
            weight = int(kernel[di, dj])
            if weight:
                out += weight * source[di:di + rows, dj:dj + cols]
    return out


def correlate3x3(image: GrayImage, kernel: np.ndarray) -> np.ndarray:
    """
    3×3 互相关（不翻转卷积核）

    value(i, j) = Σ weights(di, dj) · image(i + di, j + dj)，(di, dj) ∈ {−1, 0, 1}²。
    调用方传入已按 1 像素复制填充的图像，输出尺寸即原图尺寸。

    Args:
        image: 已填充的图像，宽高均 ≥ 3
        kernel: 3×3 整数卷积核

    Returns:
        np.ndarray: 形状 (height − 2, width − 2) 的 int32 响应图

    Raises:
        ImageTooSmallError: 宽或高小于 3
    """
    if image.width < 3 or image.height < 3:
        raise ImageTooSmallError(
            f"互相关要求填充后图像至少 3x3，实际为 {image.width}x{image.height}")
    return correlate_array(image.pixels, np.asarray(kernel))


def require_encodable(image: GrayImage, minimum: int = 5) -> None:
    """描述子入口的尺寸检查"""
    if image.width < minimum or image.height < minimum:
        raise ImageTooSmallError(
            f"描述子要求图像至少 {minimum}x{minimum}，实际为 {image.width}x{image.height}")
