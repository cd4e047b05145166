"""
随机数据生成工具模块

为验证与基准测试提供可复现的随机图像，支持以下特性：

功能特性:
    - 合成数据
        * 定向正弦光栅（方向 = 类别序号 × 180° / 类别数）
        * 随机相位与轻度加性噪声
        * 同一种子生成逐字节相同的图像
    - 随机图像
        * 均匀随机灰度图
        * 粗格点灰度图（相邻灰度级至少相差 2）
    - 属性测试
        * 基于假设的图像策略
        * 增益 / 偏移参数策略

技术特点:
    - 基于 numpy.random.Generator 与 Hypothesis 实现
    - 完整的类型注解
    - 自动化日志记录
"""

import math
from typing import Optional, Tuple

import numpy as np
from hypothesis import strategies as st
from hypothesis.strategies import SearchStrategy

from .image_util import GrayImage
from .log_util import my_logger


class SynthConfig:
    """合成光栅配置类"""
    PERIOD: float = 8.0  # 光栅周期（像素）
    AMPLITUDE: float = 90.0  # 正弦幅值
    MEAN: float = 127.5  # 平均亮度
    NOISE_SIGMA: float = 6.0  # 加性高斯噪声标准差
    MIN_SIZE: int = 16


class RandomGenerator:
    """
    随机数据生成器基类

    所有随机性都来自一个按种子初始化的 numpy Generator
    """

    def __init__(self, seed: Optional[int] = None):
        """
        Args:
            seed: 随机种子
        """
        self.rng = np.random.default_rng(seed)
        if seed is not None:
            my_logger.logger.debug(f"🎯 设置随机种子: {seed}")

    def seed(self, seed: int) -> None:
        """重新设置随机种子"""
        my_logger.logger.debug(f"🎯 更新随机种子: {seed}")
        self.rng = np.random.default_rng(seed)


class GratingGenerator(RandomGenerator):
    """定向正弦光栅生成器"""

    def orientation(self, class_index: int, classes: int) -> float:
        """类别对应的光栅方向（弧度）"""
        return class_index * math.pi / classes

    def grating(self, size: int, theta: float) -> GrayImage:
        """
        生成一幅光栅图像

        Args:
            size: 边长（像素）
            theta: 方向（弧度），相位与噪声取自内部随机源
        """
        phase = self.rng.uniform(0.0, 2.0 * math.pi)
        noise = self.rng.normal(0.0, SynthConfig.NOISE_SIGMA, size=(size, size))
        rows, cols = np.mgrid[0:size, 0:size].astype(np.float64)
        # 行坐标向下，取负号使方向按逆时针计
        projection = cols * math.cos(theta) - rows * math.sin(theta)
        wave = np.cos(2.0 * math.pi * projection / SynthConfig.PERIOD + phase)
        values = SynthConfig.MEAN + SynthConfig.AMPLITUDE * wave + noise
        return GrayImage(np.clip(np.rint(values), 0, 255).astype(np.uint8))


class ImageGenerator(RandomGenerator):
    """随机灰度图生成器"""

    def uniform(self, height: int, width: int, low: int = 0, high: int = 255) -> GrayImage:
        """像素在 [low, high] 内均匀分布"""
        return GrayImage(self.rng.integers(low, high + 1, size=(height, width)))

    def lattice(self, height: int, width: int, levels: int = 32, step: int = 4) -> GrayImage:
        """像素取值为 step 的整数倍，相邻灰度级至少相差 step"""
        return GrayImage(self.rng.integers(0, levels, size=(height, width)) * step)

    def gain_offset(self, gains: Tuple[int, ...] = (2, 3), max_offset: int = 40) -> Tuple[int, int]:
        """随机增益 a 与偏移 b"""
        return int(self.rng.choice(gains)), int(self.rng.integers(0, max_offset + 1))


class HypothesisGenerator:
    """Hypothesis策略生成器"""

    @staticmethod
    def gray_images(min_size: int = 5, max_size: int = 16,
                    max_value: int = 255) -> SearchStrategy[GrayImage]:
        """随机尺寸、随机像素的灰度图策略"""

        @st.composite
        def build(draw) -> GrayImage:
            height = draw(st.integers(min_value=min_size, max_value=max_size))
            width = draw(st.integers(min_value=min_size, max_value=max_size))
            pixels = draw(st.lists(st.integers(min_value=0, max_value=max_value),
                                   min_size=height * width, max_size=height * width))
            return GrayImage(np.array(pixels, dtype=np.int64).reshape(height, width))

        return build()

    @staticmethod
    def gains() -> SearchStrategy[int]:
        """正整数增益策略"""
        return st.sampled_from([2, 3])

    @staticmethod
    def offsets(max_offset: int = 40) -> SearchStrategy[int]:
        """非负偏移策略"""
        return st.integers(min_value=0, max_value=max_offset)

    @staticmethod
    def grids(max_rows: int = 5, max_cols: int = 5) -> SearchStrategy[Tuple[int, int]]:
        """(行, 列) 网格策略"""
        return st.tuples(st.integers(min_value=1, max_value=max_rows),
                         st.integers(min_value=1, max_value=max_cols))
