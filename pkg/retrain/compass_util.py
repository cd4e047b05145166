"""
罗盘掩模工具模块

提供八方向罗盘掩模及其响应计算，支持以下特性：

功能特性:
    - 八个 3×3 罗盘掩模
        * 0 号掩模指向东，之后每个掩模逆时针旋转 45°
        * 全部为零和核，响应对强度偏移不变
    - 响应栈
        * 复制填充 1 像素后逐方向互相关
    - 方向索引
        * 主方向：参考像素处 |响应| 最大的方向
        * 次方向：各方向掩模在对应方向邻居处的 |响应| 最大的方向
        * 并列时取最小索引

技术特点:
    - 基于 numpy 实现，整幅图像一次计算
    - 次方向复用响应栈的坐标平移，不重复互相关
    - 完整的类型注解
"""

from dataclasses import dataclass
from enum import IntEnum
from typing import Tuple

import numpy as np

from .error_util import OutOfBoundsError
from .image_util import GrayImage, RESPONSE_DTYPE, correlate_array, make_kernel, require_encodable

DIRECTION_COUNT = 8

# 3×3 外环位置，从左上角起顺时针
_RING: Tuple[Tuple[int, int], ...] = (
    (0, 0), (0, 1), (0, 2), (1, 2), (2, 2), (2, 1), (2, 0), (1, 0)
)

_EAST_MASK = ((-1, -1, 2),
              (-1, -1, 2),
              (-1, -1, 2))


class Direction(IntEnum):
    """方向索引，偏移量为 (行增量, 列增量)"""
    E = 0
    NE = 1
    N = 2
    NW = 3
    W = 4
    SW = 5
    S = 6
    SE = 7

    @property
    def offset(self) -> Tuple[int, int]:
        return DIRECTION_OFFSETS[int(self)]


DIRECTION_OFFSETS: Tuple[Tuple[int, int], ...] = (
    (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1)
)


def rotate_ccw_45(kernel: np.ndarray) -> np.ndarray:
    """将 3×3 核的外环逆时针旋转一格（45°），中心不变"""
    rotated = np.array(kernel, dtype=RESPONSE_DTYPE)
    for k, (r, c) in enumerate(_RING):
        src_r, src_c = _RING[(k + 1) % len(_RING)]
        rotated[r, c] = kernel[src_r, src_c]
    return rotated


def _build_masks() -> Tuple[np.ndarray, ...]:
    masks = [make_kernel(_EAST_MASK)]
    for _ in range(DIRECTION_COUNT - 1):
        masks.append(make_kernel(rotate_ccw_45(masks[-1]).tolist()))
    return tuple(masks)


_MASKS = _build_masks()


def compass_masks() -> Tuple[np.ndarray, ...]:
    """
    八个罗盘掩模，按方向索引排列

    Returns:
        Tuple[np.ndarray, ...]: 8 个只读 3×3 int32 核
    """
    return _MASKS


def format_masks() -> str:
    """掩模审计文本：每行一行矩阵，掩模之间空一行"""
    blocks = []
    for mask in _MASKS:
        blocks.append("\n".join(" ".join(str(int(v)) for v in row) for row in mask))
    return "\n\n".join(blocks) + "\n"


@dataclass(frozen=True)
class ResponseStack:
    """
    八方向响应栈

    Attributes:
        planes: 形状 (8, height, width) 的 int32 数组，按方向索引排列
    """
    planes: np.ndarray

    def __post_init__(self) -> None:
        if self.planes.ndim != 3 or self.planes.shape[0] != DIRECTION_COUNT:
            raise ValueError(f"响应栈必须包含 8 个平面，实际形状: {self.planes.shape}")

    @property
    def height(self) -> int:
        return int(self.planes.shape[1])

    @property
    def width(self) -> int:
        return int(self.planes.shape[2])

    def plane(self, direction: int) -> np.ndarray:
        return self.planes[direction]

    def check_bounds(self, i: int, j: int) -> None:
        if not (0 <= i < self.height and 0 <= j < self.width):
            raise OutOfBoundsError(
                f"像素 ({i}, {j}) 超出响应栈范围 {self.height}x{self.width}")


def response_stack(image: GrayImage) -> ResponseStack:
    """
    计算八方向响应栈

    Args:
        image: 宽高均 ≥ 5 的灰度图像

    Returns:
        ResponseStack: 与图像同尺寸的 8 个响应平面

    Raises:
        ImageTooSmallError: 图像过小
    """
    require_encodable(image)
    padded = np.pad(image.pixels, 1, mode="edge")
    planes = np.stack([correlate_array(padded, mask) for mask in _MASKS])
    return ResponseStack(planes)


def neighbor_responses(stack: ResponseStack) -> np.ndarray:
    """
    扩展邻域响应 M

    M[α](i, j) = plane_α(i + di_α, j + dj_α)，越界坐标钳制到最近的有效像素

    Returns:
        np.ndarray: 形状 (8, height, width) 的 int32 数组
    """
    h, w = stack.height, stack.width
    padded = np.pad(stack.planes, ((0, 0), (1, 1), (1, 1)), mode="edge")
    shifted = np.empty_like(stack.planes)
    for alpha, (di, dj) in enumerate(DIRECTION_OFFSETS):
        shifted[alpha] = padded[alpha, 1 + di:1 + di + h, 1 + dj:1 + dj + w]
    return shifted


def primary_map(stack: ResponseStack) -> np.ndarray:
    """整幅主方向图，np.argmax 返回首个最大值即最小索引"""
    return np.argmax(np.abs(stack.planes), axis=0).astype(np.uint8)


def secondary_map(stack: ResponseStack) -> np.ndarray:
    """整幅次方向图"""
    return np.argmax(np.abs(neighbor_responses(stack)), axis=0).astype(np.uint8)


def _argmax_lowest(values) -> Direction:
    magnitudes = [abs(int(v)) for v in values]
    best = 0
    for alpha in range(1, DIRECTION_COUNT):
        if magnitudes[alpha] > magnitudes[best]:
            best = alpha
    return Direction(best)


def primary_direction(stack: ResponseStack, i: int, j: int) -> Direction:
    """
    主方向

    Args:
        stack: 响应栈
        i: 行
        j: 列

    Returns:
        Direction: argmax_α |plane_α(i, j)|，并列取最小索引

    Raises:
        OutOfBoundsError: 坐标越界
    """
    stack.check_bounds(i, j)
    return _argmax_lowest(stack.planes[:, i, j])


def secondary_direction(stack: ResponseStack, i: int, j: int) -> Direction:
    """
    次方向

    Args:
        stack: 响应栈
        i: 行
        j: 列

    Returns:
        Direction: argmax_α |plane_α(i + di_α, j + dj_α)|，邻居坐标钳制，并列取最小索引

    Raises:
        OutOfBoundsError: 坐标越界
    """
    stack.check_bounds(i, j)
    values = []
    for alpha, (di, dj) in enumerate(DIRECTION_OFFSETS):
        ni = min(max(i + di, 0), stack.height - 1)
        nj = min(max(j + dj, 0), stack.width - 1)
        values.append(stack.planes[alpha, ni, nj])
    return _argmax_lowest(values)
