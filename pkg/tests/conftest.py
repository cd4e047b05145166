import numpy as np
import pytest

from retrain.image_util import GrayImage
from retrain.log_util import LogConfig, my_logger
from retrain.random_util import ImageGenerator


@pytest.fixture(autouse=True)
def reset_logging():
    """命令行测试会改变日志级别与输出，每个用例前恢复默认"""
    my_logger.log_file = None
    my_logger.set_level(LogConfig.DEFAULT_LEVEL)
    yield


@pytest.fixture
def step_image() -> GrayImage:
    """5×5 竖直阶跃：左两列 0，其余 100"""
    return GrayImage.from_rows([[0, 0, 100, 100, 100]] * 5)


@pytest.fixture
def flat_image() -> GrayImage:
    return GrayImage(np.full((8, 8), 77, dtype=np.uint8))


@pytest.fixture
def image_generator() -> ImageGenerator:
    return ImageGenerator(seed=2024)
