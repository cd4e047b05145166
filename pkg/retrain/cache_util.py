"""
缓存工具模块

为特征提取提供缓存，避免同一图像在多次实验中重复编码，支持以下特性：

功能特性:
    - 磁盘缓存（每个键一个 pickle 文件，跨进程、跨次运行复用）
    - 缓存键
        * 图像文件内容的 SHA-256 + 方法 + 网格 + 归一化
    - 缓存统计
        * 命中率统计
        * 使用量统计

技术特点:
    - 策略模式（CacheBase 接口）
    - 完整的类型注解
    - 自动化日志记录
"""

import hashlib
import os
import pickle
import shutil
import uuid
from abc import ABC, abstractmethod
from dataclasses import dataclass
from threading import Lock
from typing import Any, Optional, Union

from .feature_util import FeatureMeta, FeatureVector
from .image_util import PathLike
from .log_util import my_logger

CacheKey = str
CacheValue = Any


@dataclass
class CacheStats:
    """缓存统计信息"""
    hits: int = 0  # 命中次数
    misses: int = 0  # 未命中次数
    size: int = 0  # 当前缓存大小

    @property
    def hit_rate(self) -> float:
        """计算缓存命中率"""
        total = self.hits + self.misses
        return self.hits / total if total > 0 else 0.0


class CacheBase(ABC):
    """缓存基类，定义缓存接口"""

    def __init__(self):
        self.stats = CacheStats()

    @abstractmethod
    def get(self, key: CacheKey) -> Optional[CacheValue]:
        """获取缓存值"""
        pass

    @abstractmethod
    def set(self, key: CacheKey, value: CacheValue) -> None:
        """设置缓存值"""
        pass

    @abstractmethod
    def delete(self, key: CacheKey) -> None:
        """删除缓存值"""
        pass

    @abstractmethod
    def clear(self) -> None:
        """清空缓存"""
        pass

    def get_stats(self) -> CacheStats:
        """获取缓存统计信息"""
        return self.stats


class DiskCache(CacheBase):
    """磁盘缓存实现"""

    _NAMESPACE = uuid.UUID("c875fb30-a8a8-402d-a796-225a6b065cad")

    def __init__(self, cache_path: PathLike):
        """
        初始化磁盘缓存

        Args:
            cache_path: 缓存目录路径，不存在时自动创建
        """
        super().__init__()
        self.cache_path = os.path.abspath(os.fspath(cache_path))
        self.lock = Lock()
        if not os.path.exists(self.cache_path):
            os.makedirs(self.cache_path)
            my_logger.logger.info(f"📁 创建磁盘缓存目录: {self.cache_path}")

    def _get_cache_file(self, key: CacheKey) -> str:
        """生成缓存文件路径"""
        return os.path.join(self.cache_path, f"{uuid.uuid5(self._NAMESPACE, key)}.cache")

    def get(self, key: CacheKey) -> Optional[CacheValue]:
        cache_file = self._get_cache_file(key)
        try:
            with open(cache_file, 'rb') as f:
                value = pickle.load(f)
            with self.lock:
                self.stats.hits += 1
            return value
        except (FileNotFoundError, EOFError, pickle.PickleError) as e:
            with self.lock:
                self.stats.misses += 1
            my_logger.logger.debug(f"❌ 磁盘缓存未命中: {cache_file}, 原因: {type(e).__name__}")
            return None

    def set(self, key: CacheKey, value: CacheValue) -> None:
        cache_file = self._get_cache_file(key)
        temp_file = f"{cache_file}.{uuid.uuid4().hex}.tmp"
        try:
            with open(temp_file, 'wb') as f:
                pickle.dump(value, f)
            os.replace(temp_file, cache_file)
            with self.lock:
                self.stats.size = len(os.listdir(self.cache_path))
        except (OSError, pickle.PickleError) as e:
            my_logger.logger.error(f"❌ 写入磁盘缓存失败: {cache_file}, 错误: {e}")

    def delete(self, key: CacheKey) -> None:
        try:
            os.remove(self._get_cache_file(key))
            with self.lock:
                self.stats.size = len(os.listdir(self.cache_path))
        except FileNotFoundError:
            pass

    def clear(self) -> None:
        if os.path.exists(self.cache_path):
            shutil.rmtree(self.cache_path)
            os.makedirs(self.cache_path)
            my_logger.logger.info(f"🧹 清空磁盘缓存目录: {self.cache_path}")
        self.stats.size = 0


def file_digest(path: PathLike) -> str:
    """文件内容的 SHA-256"""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def feature_key(path: PathLike, meta: Union[FeatureMeta, dict]) -> CacheKey:
    """特征缓存键：内容摘要 + 方法 + 网格 + 归一化"""
    fields = meta.to_dict() if isinstance(meta, FeatureMeta) else meta
    return f"{file_digest(path)}:{fields['method']}:{fields['grid']}:{fields['norm']}"


class FeatureCache:
    """
    特征向量缓存

    按图像内容而非路径建键，文件改动后自动失效
    """

    def __init__(self, backend: CacheBase):
        self.backend = backend

    @classmethod
    def for_directory(cls, cache_dir: PathLike) -> "FeatureCache":
        """以 cache_dir 为目录的磁盘缓存"""
        return cls(DiskCache(cache_dir))

    def get(self, path: PathLike, meta: FeatureMeta) -> Optional[FeatureVector]:
        value = self.backend.get(feature_key(path, meta))
        if isinstance(value, FeatureVector) and value.meta == meta:
            return value
        return None

    def put(self, path: PathLike, feature: FeatureVector) -> None:
        self.backend.set(feature_key(path, feature.meta), feature)

    @property
    def stats(self) -> CacheStats:
        return self.backend.get_stats()
