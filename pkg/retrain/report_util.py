"""
报告工具模块

将交叉验证结果输出为机器可读与人工可读两种形式，支持以下特性：

功能特性:
    - 报告生成
        * JSON 报告（写出前按 schema 校验）
        * 对齐文本表（配置回显、各折准确率、识别率、混淆矩阵）
        * 方法对比表（方法 × 准确率）
    - 混淆矩阵导出
        * CSV（行 = 真实类别，列 = 预测类别）

技术特点:
    - 基于 jsonschema 校验
    - 完整的类型注解
    - 自动化日志记录
"""

import csv
import io
import json
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, TextIO

from jsonschema import ValidationError, validate

from .encoder_util import Method
from .error_util import ConfigError, error_handler
from .eval_util import EvaluationReport
from .image_util import PathLike
from .log_util import my_logger


class ReportConfig:
    """报告配置类"""
    FLOAT_PRECISION: int = 4  # 文本表中的小数位数
    PERCENT_PRECISION: int = 2
    REPORT_ENCODING: str = "utf-8"
    JSON_INDENT: int = 2
    MIN_CELL_WIDTH: int = 6


REPORT_SCHEMA: Dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["class_names", "per_fold_accuracy", "mean_accuracy", "confusion",
                 "per_class_recall", "total", "config", "caveat"],
    "properties": {
        "class_names": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "per_fold_accuracy": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "mean_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
        "confusion": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        },
        "per_class_recall": {"type": "object", "additionalProperties": {"type": "number"}},
        "total": {"type": "integer", "minimum": 0},
        "config": {
            "type": "object",
            "required": ["method", "grid", "norm", "svm", "folds", "seed"],
            "properties": {
                "method": {"enum": [m.value for m in Method]},
                "grid": {"type": "string", "pattern": r"^[1-9][0-9]*x[1-9][0-9]*$"},
                "norm": {"enum": ["RAW", "L1"]},
                "svm": {
                    "type": "object",
                    "required": ["C", "epochs", "seed"],
                    "properties": {
                        "C": {"type": "number", "exclusiveMinimum": 0},
                        "epochs": {"type": "integer", "minimum": 1},
                        "seed": {"type": "integer"},
                    },
                },
                "folds": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer"},
            },
        },
        "predictions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["sample", "true", "predicted", "fold"],
                "properties": {
                    "sample": {"type": "string"},
                    "true": {"type": "string"},
                    "predicted": {"type": "string"},
                    "fold": {"type": "integer", "minimum": 0},
                },
            },
        },
        "caveat": {"type": "string"},
    },
}


def report_to_dict(report: EvaluationReport, include_predictions: bool = True) -> Dict[str, Any]:
    """报告转为 JSON 兼容字典"""
    data: Dict[str, Any] = {
        "class_names": list(report.class_names),
        "per_fold_accuracy": [float(a) for a in report.per_fold_accuracy],
        "mean_accuracy": float(report.mean_accuracy),
        "confusion": [[int(v) for v in row] for row in report.confusion],
        "per_class_recall": report.per_class_recall(),
        "total": report.total,
        "config": report.config_echo,
        "caveat": report.caveat,
    }
    if include_predictions:
        data["predictions"] = [
            {"sample": p.sample, "true": p.true_label, "predicted": p.predicted, "fold": p.fold}
            for p in report.predictions
        ]
    return data


def validate_report(data: Mapping[str, Any]) -> None:
    """
    按 REPORT_SCHEMA 校验报告，并检查混淆矩阵形状

    Raises:
        ConfigError: 报告不合法
    """
    try:
        validate(instance=data, schema=REPORT_SCHEMA)
    except ValidationError as e:
        raise ConfigError(f"报告 schema 校验失败: {e.message}") from e
    size = len(data["class_names"])
    if len(data["confusion"]) != size or any(len(row) != size for row in data["confusion"]):
        raise ConfigError(f"混淆矩阵形状应为 {size}x{size}")


@error_handler
def write_report_json(report: EvaluationReport, path: Optional[PathLike] = None,
                      stream: Optional[TextIO] = None) -> str:
    """
    写出 JSON 报告

    Args:
        report: 交叉验证报告
        path: 输出文件，为 None 时写入 stream
        stream: 输出流

    Returns:
        str: JSON 文本
    """
    data = report_to_dict(report)
    validate_report(data)
    text = json.dumps(data, indent=ReportConfig.JSON_INDENT, ensure_ascii=False)
    if path is not None:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n", encoding=ReportConfig.REPORT_ENCODING)
        my_logger.logger.info(f"💾 写出 JSON 报告: {out}")
    elif stream is not None:
        stream.write(text + "\n")
    return text


def _table(header: list, rows: list) -> str:
    widths = [max(ReportConfig.MIN_CELL_WIDTH, len(str(h))) for h in header]
    for row in rows:
        widths = [max(w, len(str(c))) for w, c in zip(widths, row)]
    lines = ["  ".join(str(c).rjust(w) for c, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(str(c).rjust(w) for c, w in zip(row, widths)).rstrip() for row in rows)
    return "\n".join(lines)


def _percent(value: float) -> str:
    return f"{100.0 * value:.{ReportConfig.PERCENT_PRECISION}f}%"


def render_report_text(report: EvaluationReport) -> str:
    """渲染对齐文本报告：配置、各折准确率、识别率与混淆矩阵"""
    echo = report.config_echo
    svm = echo.get("svm", {})
    precision = ReportConfig.FLOAT_PRECISION
    out = io.StringIO()
    out.write("Configuration\n")
    out.write(f"  method: {echo.get('method')}  grid: {echo.get('grid')}  norm: {echo.get('norm')}\n")
    out.write(f"  folds: {echo.get('folds')}  seed: {echo.get('seed')}  split: {echo.get('split', 'stratified')}\n")
    out.write(f"  svm: C={svm.get('C')} epochs={svm.get('epochs')} seed={svm.get('seed')}\n\n")

    fold_rows = [[f, f"{a:.{precision}f}"] for f, a in enumerate(report.per_fold_accuracy)]
    out.write(_table(["fold", "accuracy"], fold_rows))
    out.write(f"\n\nRecognition rate: {_percent(report.mean_accuracy)} "
              f"({int(report.confusion.trace())}/{report.total})\n\n")

    out.write("Confusion matrix (rows = true, columns = predicted)\n")
    recall = report.per_class_recall()
    rows = [[name, *(int(v) for v in report.confusion[k]), _percent(recall[name])]
            for k, name in enumerate(report.class_names)]
    out.write(_table(["", *report.class_names, "recall"], rows))
    out.write(f"\n\nNote: {report.caveat}\n")
    return out.getvalue()


def render_comparison_text(reports: Mapping[Method, EvaluationReport]) -> str:
    """渲染方法对比表（方法 × 识别率）"""
    rows = []
    for method, report in reports.items():
        folds = report.per_fold_accuracy
        spread = max(folds) - min(folds) if folds else 0.0
        rows.append([Method.parse(method).value, _percent(report.mean_accuracy),
                     f"{spread:.{ReportConfig.FLOAT_PRECISION}f}"])
    return _table(["method", "accuracy", "fold range"], rows) + "\n"


def comparison_to_dict(reports: Mapping[Method, EvaluationReport]) -> Dict[str, Any]:
    """方法对比结果转为字典：方法名 → 完整报告"""
    return {Method.parse(m).value: report_to_dict(r, include_predictions=False) for m, r in reports.items()}


@error_handler
def write_confusion_csv(report: EvaluationReport, path: PathLike) -> Path:
    """写出混淆矩阵 CSV，首列为真实类别"""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding=ReportConfig.REPORT_ENCODING) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["true\\predicted", *report.class_names])
        for name, row in zip(report.class_names, report.confusion):
            writer.writerow([name, *(int(v) for v in row)])
    my_logger.logger.info(f"💾 写出混淆矩阵 CSV: {out}")
    return out
