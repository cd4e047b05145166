"""
命令行工具模块

单一入口、多个子命令，把编码、特征、训练、预测、交叉验证与合成数据串成批处理流程：

    retrain [--log-level LEVEL] [--log-file PATH] <command> [options]

子命令:
    masks           打印 8 个罗盘掩码
    encode          图像 → 码图（DPCM0001，可选 PGM）
    export-codemap  DPCM0001 码图 → PGM
    features        清单 → 特征 CSV
    train           清单 → DPSVM001 模型（可选 JSON 导出）
    predict         模型 + 图像 / 清单 → path,label
    crossval        N 折交叉验证报告
    compare         多方法对比表
    synth           生成合成光栅数据集

退出码: 0 成功，1 用法错误（打印语法），2 数据错误（打印文件与原因）
"""

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import NoReturn, Optional, Sequence

from .cache_util import FeatureCache
from .compass_util import format_masks
from .encoder_util import Method, codemap_to_image, encode, load_codemap, save_codemap
from .error_util import RetrainError
from .eval_util import (
    EvalConfig, PipelineConfig, compare_methods, cross_validate, default_jobs,
    extract_dataset_features, load_manifest, synth_dataset
)
from .feature_util import FeatureConfig, FeatureRow, Norm, RegionGrid, extract_features, write_feature_csv
from .image_util import load_grayscale, save_pgm
from .log_util import LogConfig, my_logger
from .report_util import (
    comparison_to_dict, render_comparison_text, render_report_text, write_confusion_csv, write_report_json
)
from .svm_util import SvmConfig, load_model, predict_many, save_model, train_ovo_svm

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class CliParser(argparse.ArgumentParser):
    """用法错误时打印完整语法并以退出码 1 结束"""

    def error(self, message: str) -> NoReturn:
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"\n{self.prog}: error: {message}\n")


def _grid(text: str) -> RegionGrid:
    try:
        return RegionGrid.parse(text)
    except RetrainError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _method(text: str) -> Method:
    try:
        return Method.parse(text)
    except RetrainError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _norm(text: str) -> Norm:
    try:
        return Norm.parse(text)
    except RetrainError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer: {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value) or value <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive number: {text}")
    return value


def _add_pipeline_flags(parser: argparse.ArgumentParser, with_method: bool = True) -> None:
    if with_method:
        parser.add_argument("--method", type=_method, default=Method.RETRAIN,
                            help="descriptor: RETRAIN, LBP, CSLBP, LDP, LDN (default: RETRAIN)")
    parser.add_argument("--grid", type=_grid, default=FeatureConfig.DEFAULT_GRID,
                        help="region grid rows x cols (default: 7x6)")
    parser.add_argument("--norm", type=_norm, default=FeatureConfig.DEFAULT_NORM,
                        help="histogram normalization RAW or L1 (default: RAW)")


def _add_svm_flags(parser: argparse.ArgumentParser) -> None:
    defaults = SvmConfig()
    parser.add_argument("--C", dest="svm_c", type=_positive_float, default=defaults.C,
                        help=f"SVM regularization constant (default: {defaults.C})")
    parser.add_argument("--epochs", type=_positive_int, default=defaults.epochs,
                        help=f"Pegasos epochs per pair (default: {defaults.epochs})")
    parser.add_argument("--svm-seed", type=int, default=defaults.seed,
                        help=f"SVM sampling seed (default: {defaults.seed})")


def _add_jobs_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--jobs", type=_positive_int, default=default_jobs(),
                        help="worker threads (default: number of processors)")
    parser.add_argument("--cache-dir", type=Path, default=None,
                        help="directory for cached feature vectors")


def build_parser() -> CliParser:
    parser = CliParser(prog="retrain", description="Compass-direction texture descriptors and evaluation")
    parser.add_argument("--log-level", default=LogConfig.DEFAULT_LEVEL,
                        choices=["TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"],
                        type=str.upper, help="log level (default: INFO)")
    parser.add_argument("--log-file", default=None, help="additionally write logs to this file")
    commands = parser.add_subparsers(dest="command", metavar="<command>", required=True)

    commands.add_parser("masks", help="print the eight compass masks")

    p = commands.add_parser("encode", help="encode an image into a code map")
    p.add_argument("--in", dest="input", type=Path, required=True, help="PGM or PNG image")
    p.add_argument("--method", type=_method, default=Method.RETRAIN)
    p.add_argument("--out", type=Path, default=None, help="binary code map (DPCM0001)")
    p.add_argument("--out-pgm", type=Path, default=None, help="code map scaled to a PGM")

    p = commands.add_parser("export-codemap", help="convert a binary code map to PGM")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out-pgm", type=Path, required=True)

    p = commands.add_parser("features", help="write region-histogram features for a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    _add_pipeline_flags(p)
    p.add_argument("--out", type=Path, required=True, help="feature CSV")
    _add_jobs_flags(p)

    p = commands.add_parser("train", help="train a one-vs-one linear SVM")
    p.add_argument("--manifest", type=Path, required=True)
    _add_pipeline_flags(p)
    _add_svm_flags(p)
    p.add_argument("--out", type=Path, required=True, help="model file (DPSVM001)")
    p.add_argument("--json", type=Path, default=None, help="also export the model as JSON")
    _add_jobs_flags(p)

    p = commands.add_parser("predict", help="label images with a saved model")
    p.add_argument("--model", type=Path, required=True)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--in", dest="inputs", type=Path, nargs="+", help="one or more images")
    source.add_argument("--manifest", type=Path)
    p.add_argument("--out", type=Path, default=None, help="write path,label CSV here")
    _add_jobs_flags(p)

    p = commands.add_parser("crossval", help="N-fold cross-validation")
    p.add_argument("--manifest", type=Path, required=True)
    _add_pipeline_flags(p)
    _add_svm_flags(p)
    p.add_argument("--folds", type=int, default=EvalConfig.DEFAULT_FOLDS)
    p.add_argument("--seed", type=int, default=EvalConfig.DEFAULT_SEED, help="fold assignment seed")
    p.add_argument("--subject-split", action="store_true", help="keep each subject inside one fold")
    p.add_argument("--out", type=Path, default=None, help="JSON report (stdout when omitted)")
    p.add_argument("--text", type=Path, default=None, help="aligned text report")
    p.add_argument("--confusion-csv", type=Path, default=None)
    _add_jobs_flags(p)

    p = commands.add_parser("compare", help="compare descriptors under identical folds")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--methods", type=_method, nargs="+", default=list(Method))
    _add_pipeline_flags(p, with_method=False)
    _add_svm_flags(p)
    p.add_argument("--folds", type=int, default=EvalConfig.DEFAULT_FOLDS)
    p.add_argument("--seed", type=int, default=EvalConfig.DEFAULT_SEED)
    p.add_argument("--subject-split", action="store_true")
    p.add_argument("--out", type=Path, default=None, help="JSON with one report per method")
    _add_jobs_flags(p)

    p = commands.add_parser("synth", help="generate the oriented-grating dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=EvalConfig.DEFAULT_SEED)
    return parser


def _pipeline(args: argparse.Namespace, method: Optional[Method] = None) -> PipelineConfig:
    svm = SvmConfig(C=args.svm_c, epochs=args.epochs, seed=args.svm_seed) if hasattr(args, "svm_c") else SvmConfig()
    return PipelineConfig(method or args.method, args.grid, args.norm, svm)


def _cache(args: argparse.Namespace) -> Optional[FeatureCache]:
    return FeatureCache.for_directory(args.cache_dir) if args.cache_dir is not None else None


def cmd_masks(args: argparse.Namespace) -> None:
    sys.stdout.write(format_masks())


def cmd_encode(args: argparse.Namespace) -> None:
    codemap = encode(load_grayscale(args.input), args.method)
    if args.out is not None:
        save_codemap(codemap, args.out)
    if args.out_pgm is not None:
        save_pgm(codemap_to_image(codemap), args.out_pgm)
    if args.out is None and args.out_pgm is None:
        my_logger.logger.warning("💡 未指定 --out 或 --out-pgm，码图未写出")


def cmd_export_codemap(args: argparse.Namespace) -> None:
    save_pgm(codemap_to_image(load_codemap(args.input)), args.out_pgm)


def cmd_features(args: argparse.Namespace) -> None:
    dataset = load_manifest(args.manifest)
    features = extract_dataset_features(dataset, _pipeline(args), args.jobs, _cache(args))
    rows = [FeatureRow(str(s.path), s.label, f) for s, f in zip(dataset.samples, features)]
    write_feature_csv(rows, args.out)


def cmd_train(args: argparse.Namespace) -> None:
    dataset = load_manifest(args.manifest)
    pipeline = _pipeline(args)
    features = extract_dataset_features(dataset, pipeline, args.jobs, _cache(args))
    model = train_ovo_svm(features, dataset.labels, pipeline.svm, jobs=args.jobs)
    save_model(model, args.out, args.json)


def cmd_predict(args: argparse.Namespace) -> None:
    model = load_model(args.model)
    meta = model.feature_meta
    if args.manifest is not None:
        dataset = load_manifest(args.manifest)
        pipeline = PipelineConfig(meta.method, meta.grid, meta.norm, model.config)
        features = extract_dataset_features(dataset, pipeline, args.jobs, _cache(args))
        paths = [str(s.path) for s in dataset.samples]
    else:
        features = [extract_features(load_grayscale(p), meta.method, meta.grid, meta.norm) for p in args.inputs]
        paths = [str(p) for p in args.inputs]
    labels = predict_many(model, features)

    for path, label in zip(paths, labels):
        sys.stdout.write(f"{path},{label}\n")
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        with args.out.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["path", "label"])
            writer.writerows(zip(paths, labels))


def cmd_crossval(args: argparse.Namespace) -> None:
    dataset = load_manifest(args.manifest)
    report = cross_validate(dataset, _pipeline(args), args.folds, args.seed,
                            jobs=args.jobs, cache=_cache(args), subject_split=args.subject_split)
    write_report_json(report, args.out, stream=sys.stdout)
    if args.text is not None:
        args.text.parent.mkdir(parents=True, exist_ok=True)
        args.text.write_text(render_report_text(report), encoding="utf-8")
    if args.confusion_csv is not None:
        write_confusion_csv(report, args.confusion_csv)


def cmd_compare(args: argparse.Namespace) -> None:
    dataset = load_manifest(args.manifest)
    reports = compare_methods(dataset, args.methods, _pipeline(args, Method.RETRAIN), args.folds, args.seed,
                              jobs=args.jobs, cache=_cache(args), subject_split=args.subject_split)
    sys.stdout.write(render_comparison_text(reports))
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(comparison_to_dict(reports), indent=2, ensure_ascii=False) + "\n",
                            encoding="utf-8")


def cmd_synth(args: argparse.Namespace) -> None:
    synth_dataset(args.out, args.classes, args.per_class, args.size, args.seed)


COMMANDS = {
    "masks": cmd_masks,
    "encode": cmd_encode,
    "export-codemap": cmd_export_codemap,
    "features": cmd_features,
    "train": cmd_train,
    "predict": cmd_predict,
    "crossval": cmd_crossval,
    "compare": cmd_compare,
    "synth": cmd_synth,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    命令行入口

    Args:
        argv: 参数列表，None 时读取 sys.argv

    Returns:
        int: 退出码
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    my_logger.set_level(args.log_level)
    if args.log_file:
        my_logger.add_file_sink(args.log_file)

    try:
        COMMANDS[args.command](args)
    except (RetrainError, OSError) as e:
        filename = getattr(e, "filename", None)
        where = f"{filename}: " if filename else ""
        sys.stderr.write(f"retrain {args.command}: error: {where}{e}\n")
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
