"""
断言工具模块

为报告、模型导出等 JSON 文档提供链式断言，支持以下特性：

功能特性:
    - 断言对象
        * 字典 / 列表
        * 交叉验证报告（自动转为报告字典）
        * 模型（自动转为模型 JSON）
        * JSON 文件路径
    - 丰富的断言方法
        * JMESPath 路径选择
        * 相等性断言（可深度比较）
        * 范围、长度、键、包含关系
        * JSON Schema 校验
    - 自定义错误消息

技术特点:
    - 完整的类型注解
    - 装饰器模式支持
    - 链式调用支持
    - 自动化日志记录
"""
import json
import math
from functools import wraps
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union, cast

import jmespath
from deepdiff import DeepDiff
from jmespath.exceptions import JMESPathError
from jsonschema import ValidationError, validate

from .eval_util import EvaluationReport
from .log_util import my_logger
from .report_util import report_to_dict
from .svm_util import OvoSvmModel, model_to_json

JsonType = Union[Dict[str, Any], List[Any], str, int, float, bool, None]
"""
JSON 数据类型

支持的数据类型:
    - Dict[str, Any]: JSON 对象
    - List[Any]: JSON 数组
    - str / int / float / bool / None: 标量
"""


class ExpectAssertionError(AssertionError):
    """Expect 断言错误，与 pytest 的断言失败处理兼容"""
    pass


class AssertInfo:
    """
    断言信息管理类

    收集深度比较产生的警告与错误
    """

    warning: List[str] = []
    error: List[str] = []

    @classmethod
    def clear(cls) -> None:
        cls.warning = []
        cls.error = []

    @classmethod
    def has_errors(cls) -> bool:
        return len(cls.error) > 0


def handle_result(func):
    """
    统一的断言结果处理装饰器

    注入 handle_error / handle_success / handle_info，并把断言过程中的
    AssertionError、TypeError、ValueError、KeyError、IndexError 统一转换为 ExpectAssertionError
    """

    @wraps(func)
    def wrapper(self, *args, **kwargs):
        def handle_error(message: str):
            my_logger.logger.error(f"❌ {message}")
            raise ExpectAssertionError(message)

        def handle_success(message: str):
            my_logger.logger.success(f"✅ {message}")

        def handle_warning(message: str):
            my_logger.logger.warning(f"💡 {message}")

        def handle_info(message: str):
            my_logger.logger.debug(f"ℹ️ {message}")

        self.handle_error = handle_error
        self.handle_success = handle_success
        self.handle_warning = handle_warning
        self.handle_info = handle_info

        func_name = func.__name__
        if not func_name.startswith('_'):
            my_logger.logger.debug(f"🔍 开始断言: {func_name}")
        try:
            return func(self, *args, **kwargs)
        except ExpectAssertionError:
            raise
        except AssertionError as e:
            handle_error(str(e))
        except (TypeError, ValueError, KeyError, IndexError) as e:
            handle_error(f"{type(e).__name__}: {e}")
        return None

    return wrapper


def _to_json(subject: Any) -> JsonType:
    """断言对象统一转为 JSON 数据"""
    if isinstance(subject, EvaluationReport):
        return report_to_dict(subject)
    if isinstance(subject, OvoSvmModel):
        return model_to_json(subject)
    if isinstance(subject, Path):
        return json.loads(subject.read_text(encoding="utf-8"))
    return subject


class ExpectAssertion:
    """
    JSON 断言器

    Attributes:
        json_data: 完整 JSON 数据
        _current_path: 当前选择的 JMESPath 路径
        _current_value: 当前路径对应的值
    """

    handle_error: Callable[[str], None]
    handle_success: Callable[[str], None]
    handle_warning: Callable[[str], None]
    handle_info: Callable[[str], None]

    def __init__(self, subject: Any) -> None:
        self.json_data: JsonType = _to_json(subject)
        self._current_path: Optional[str] = None
        self._current_value: Any = None

    def _get_current_value(self) -> Any:
        return self._current_value if self._current_path else self.json_data

    @handle_result
    def at(self, path: str) -> 'ExpectAssertion':
        """
        选择 JSON 路径

        Args:
            path: JMESPath 路径表达式，如 "config.svm.C"、"confusion[0][0]"

        Raises:
            ExpectAssertionError: 路径不存在或语法错误
        """
        self.handle_info(f"👀 选择 JSON 路径: {path}")
        try:
            value = jmespath.search(path, self.json_data)
        except JMESPathError as e:
            self.handle_error(f"JMESPath 语法错误: {path} ({e})")
        if value is None:
            self.handle_error(f"路径不存在: {path}")
        self._current_path = path
        self._current_value = value
        return self

    @handle_result
    def _deep_compare(self, actual: Any, expected: Any, exclude: Optional[List[str]] = None,
                      significant_digits: Optional[int] = None) -> None:
        AssertInfo.clear()
        diff = DeepDiff(expected, actual, exclude_paths=exclude or [], ignore_order=False,
                        significant_digits=significant_digits, verbose_level=2)
        if not diff:
            self.handle_success("数据完全匹配")
            return

        for item in diff.get('dictionary_item_removed', []):
            AssertInfo.error.append(f"缺少键: {item}")
        for item in diff.get('dictionary_item_added', []):
            AssertInfo.warning.append(f"多出键: {item}")
        for path, change in diff.get('values_changed', {}).items():
            AssertInfo.error.append(f"值不相等 {path}: {change['old_value']} != {change['new_value']}")
        for path, change in diff.get('type_changes', {}).items():
            AssertInfo.error.append(
                f"类型不匹配 {path}: 期望 {type(change['old_value']).__name__}, "
                f"实际 {type(change['new_value']).__name__}")
        if diff.get('iterable_item_removed') or diff.get('iterable_item_added'):
            AssertInfo.error.append("列表长度或内容与预期不匹配")

        if AssertInfo.warning:
            self.handle_warning("\n".join(AssertInfo.warning))
        if AssertInfo.has_errors():
            self.handle_error("JSON 比较失败:\n" + "\n".join(AssertInfo.error))

    @handle_result
    def to_equal(self, expected: Any, deep_compare: bool = False,
                 exclude: Optional[List[str]] = None,
                 significant_digits: Optional[int] = None) -> 'ExpectAssertion':
        """
        相等性断言

        Args:
            expected: 期望值（可为报告、模型或 JSON 数据）
            deep_compare: 使用 DeepDiff 深度比较
            exclude: 深度比较时忽略的路径，如 "root['config']"
            significant_digits: 浮点比较的有效位数，None 表示精确比较
        """
        actual = self._get_current_value()
        expected = _to_json(expected)
        if deep_compare:
            self._deep_compare(actual, expected, exclude, significant_digits)
        elif actual != expected:
            self.handle_error(f"值不相等: 期望 {expected!r}, 实际 {actual!r}")
        return self

    @handle_result
    def to_be_close_to(self, expected: float, tolerance: float = 1e-9) -> 'ExpectAssertion':
        """浮点近似相等断言"""
        value = float(self._get_current_value())
        if not math.isclose(value, expected, rel_tol=0.0, abs_tol=tolerance):
            self.handle_error(f"值 {value} 与 {expected} 之差超过 {tolerance}")
        return self

    @handle_result
    def to_be_in_range(self, start: float, end: float) -> 'ExpectAssertion':
        """
        范围断言

        Args:
            start: 下界（包含）
            end: 上界（包含）
        """
        value = self._get_current_value()
        if not start <= value <= end:
            self.handle_error(f"值不在范围 [{start}, {end}] 内: {value}")
        return self

    @handle_result
    def to_be_at_least(self, minimum: float) -> 'ExpectAssertion':
        value = self._get_current_value()
        if value < minimum:
            self.handle_error(f"值 {value} 小于 {minimum}")
        return self

    @handle_result
    def to_have_length(self, expected_length: int) -> 'ExpectAssertion':
        value = self._get_current_value()
        if len(value) != expected_length:
            self.handle_error(f"长度不匹配: 期望 {expected_length}, 实际 {len(value)}")
        return self

    @handle_result
    def to_have_keys(self, *keys: str) -> 'ExpectAssertion':
        value = self._get_current_value()
        if not isinstance(value, dict):
            self.handle_error(f"类型错误: 期望 dict, 实际 {type(value).__name__}")
        missing = [k for k in keys if k not in cast(Dict[str, Any], value)]
        if missing:
            self.handle_error(f"字典中不存在键: {missing}")
        return self

    @handle_result
    def to_contain(self, item: Any) -> 'ExpectAssertion':
        container = self._get_current_value()
        if isinstance(container, dict) and isinstance(item, dict):
            missing = {k: v for k, v in item.items() if container.get(k) != v}
            if missing:
                self.handle_error(f"字典不包含: {missing}")
        elif item not in container:
            self.handle_error(f"{self._current_path or 'root'} 不包含 {item!r}")
        return self

    @handle_result
    def to_match_schema(self, schema: dict) -> 'ExpectAssertion':
        """断言符合 JSON Schema"""
        try:
            validate(instance=self._get_current_value(), schema=schema)
        except ValidationError as e:
            self.handle_error(f"Schema 验证失败: {e.message}")
        self.handle_success("JSON Schema 验证成功")
        return self

    @handle_result
    def to_match(self, matcher: Callable[[Any], bool], error_message: str) -> 'ExpectAssertion':
        """自定义匹配断言"""
        if not matcher(self._get_current_value()):
            self.handle_error(error_message)
        self.handle_success("自定义匹配成功")
        return self


def expect(subject: Any) -> ExpectAssertion:
    """
    创建 expect 风格的断言对象

    Args:
        subject: 报告、模型、JSON 文件路径或 JSON 数据

    Example:
        >>> expect(report).at("mean_accuracy").to_be_at_least(0.95)
        >>> expect(model_a).to_equal(model_b, deep_compare=True)
    """
    return ExpectAssertion(subject)
