"""
错误处理模块

定义工具包内的全部异常类型，并提供统一的错误日志装饰器。

功能特性:
    - 异常层次
        * RetrainError 为所有业务异常的基类
        * 子类同时继承对应的内置异常，调用方可按任一类型捕获
    - 错误处理装饰器
        * 记录操作开始与失败
        * 原样抛出异常

技术特点:
    - 完整的类型注解
    - 自动化日志记录
"""

from functools import wraps
from typing import Callable, Optional, TypeVar, ParamSpec

from .log_util import my_logger

P = ParamSpec('P')
R = TypeVar('R')


class RetrainError(Exception):
    """工具包异常基类"""
    pass


class ConfigError(RetrainError, ValueError):
    """参数取值非法（网格描述、折数、正则化系数等）"""
    pass


class ImageFileNotFoundError(RetrainError, FileNotFoundError):
    """图像文件不存在"""
    pass


class UnsupportedFormatError(RetrainError, ValueError):
    """不支持的图像格式"""
    pass


class CorruptImageError(RetrainError, ValueError):
    """图像头部与像素数据不一致"""
    pass


class ImageTooSmallError(RetrainError, ValueError):
    """图像尺寸低于算子要求"""
    pass


class OutOfBoundsError(RetrainError, IndexError):
    """像素坐标越界"""
    pass


class UnknownMethodError(RetrainError, ValueError):
    """未知的描述子名称"""
    pass


class GridTooFineError(RetrainError, ValueError):
    """区域网格过细，存在空区域"""
    pass


class SingleClassError(RetrainError, ValueError):
    """训练数据只有一个类别"""
    pass


class EmptyDatasetError(RetrainError, ValueError):
    """数据集为空"""
    pass


class InconsistentFeatureMetaError(RetrainError, ValueError):
    """特征元信息（方法、网格、归一化、码数）不一致"""
    pass


class KTooLargeError(RetrainError, ValueError):
    """k 大于训练样本数"""
    pass


class MissingFileError(RetrainError, FileNotFoundError):
    """清单文件不存在"""
    pass


class MalformedRowError(RetrainError, ValueError):
    """清单行格式错误

    Attributes:
        row: 出错的行号（表头为第 1 行）
        reason: 错误原因
    """

    def __init__(self, row: int, reason: str):
        self.row = row
        self.reason = reason
        super().__init__(f"清单第 {row} 行格式错误: {reason}")


class UnresolvablePathError(RetrainError, FileNotFoundError):
    """清单中的图像路径无法解析"""
    pass


class TooFewSamplesError(RetrainError, ValueError):
    """样本总数少于折数"""
    pass


class DatasetIoError(RetrainError, OSError):
    """数据集读写失败"""
    pass


class CorruptModelError(RetrainError, ValueError):
    """二进制记录（模型、特征、码图）损坏"""
    pass


class PipelineError(RetrainError):
    """交叉验证流程错误，附带折号与样本信息

    Attributes:
        fold: 出错的折号，特征提取阶段为 None
        sample: 出错的样本路径，训练阶段为 None
    """

    def __init__(self, message: str, fold: Optional[int] = None, sample: Optional[str] = None):
        self.fold = fold
        self.sample = sample
        context = []
        if fold is not None:
            context.append(f"fold={fold}")
        if sample is not None:
            context.append(f"sample={sample}")
        suffix = f" [{', '.join(context)}]" if context else ""
        super().__init__(f"{message}{suffix}")


def error_handler(func: Callable[P, R]) -> Callable[P, R]:
    """公开操作的错误日志装饰器"""

    @wraps(func)
    def wrapper(*args: P.args, **kwargs: P.kwargs) -> R:
        try:
            my_logger.logger.debug(f"🔧 开始{func.__name__}操作")
            return func(*args, **kwargs)
        except Exception as e:
            my_logger.logger.error(f"❌ {func.__name__}操作失败: {str(e)}")
            raise

    return wrapper
