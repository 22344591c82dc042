# -*- coding: utf-8 -*-
"""
命令行入口
ingest（扫描语料 → 划分 → 去重 → 划分清单）、tokenize（训练词表）、train、eval、bench、sample、experiment
"""

import argparse
import shutil
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

import tensor_core as tc
from corpus import (DatasetSplit, build_token_stream, dedup_filter, fit_batch_size, load_source_dir,
                    read_split_manifest, segment_stream, split_corpus, write_split_manifest)
from define import (DEFAULT_RUN_CONFIG, EXPERIMENT_MODELS, EXPERIMENT_SEEDS, ModelConfig,
                    create_model_config, create_train_schedule)
from errors import CodeLMError, DataError, UsageError, VocabularyError, exit_code_for
from evaluation import (benchmark_training_time, evaluate, format_report, summarize_runs,
                        validation_curves, write_rows)
from models import LanguageModel, count_parameters
from report_workbook import export_results_workbook
from run_config import (extensions_of, format_run_config, load_run_config, run_paths,
                        save_run_config)
from tokenizer import CHARACTER, UNK_ID, Vocabulary, build_vocab, decode, encode
from training import TrainResult, load_checkpoint, model_from_checkpoint, train_run

BENCH_ITERATIONS = 30


class CommandParser(argparse.ArgumentParser):
    """用法错误抛出 UsageError（退出码 1），而不是直接退出进程"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ==========================================
# 数据准备
# ==========================================

def run_ingest(config: dict, verbose: bool = True) -> DatasetSplit:
    """扫描语料目录，划分并去重，写出划分清单"""
    paths = run_paths(config)
    files = load_source_dir(config["corpus_dir"], extensions_of(config))
    if verbose:
        print(f"读取语料: {config['corpus_dir']}（{len(files)} 个文件）")
    split = split_corpus(files, seed=config["seed"])
    split = dedup_filter(split, threshold=config["threshold"], verbose=verbose)
    write_split_manifest(split, paths["manifest"], config["corpus_dir"])
    if verbose:
        print(f"✅ 划分清单: {paths['manifest']}（train {len(split.train)} / "
              f"validation {len(split.validation)} / test {len(split.test)}）")
    return split


def load_split(config: dict, verbose: bool = True) -> DatasetSplit:
    manifest = run_paths(config)["manifest"]
    if manifest.exists():
        return read_split_manifest(manifest, config["corpus_dir"])
    return run_ingest(config, verbose)


def run_tokenize(config: dict, split: Optional[DatasetSplit] = None, show_progress: bool = True) -> Vocabulary:
    """在训练集上构建词表并写出词表文件"""
    split = split or load_split(config, verbose=show_progress)
    texts = [f.text for f in split.train]
    vocab = build_vocab(config["vocab"], texts, vocab_budget=config["vocab_size"], show_progress=show_progress)
    path = run_paths(config)["vocab"]
    vocab.save(path)
    if show_progress:
        print(f"✅ 词表: {path}（{vocab.kind}，{vocab.size} 个 token，{len(vocab.merges)} 次合并）")
    return vocab


def load_vocab(config: dict, split: Optional[DatasetSplit] = None, show_progress: bool = True) -> Vocabulary:
    path = run_paths(config)["vocab"]
    if path.exists():
        return Vocabulary.load(path)
    return run_tokenize(config, split, show_progress)


def make_batches(files, vocab: Vocabulary, seq_len: int, batch_size: int, name: str, required: bool = True):
    """编码文件并切分片段批次；token 太少时缩小 batch"""
    stream = build_token_stream(files, vocab)
    fitted = fit_batch_size(len(stream), seq_len, batch_size)
    if fitted == 0:
        if required:
            raise DataError(f"{name} 只有 {len(stream)} 个 token，不足一个长度 {seq_len} 的片段")
        print(f"⚠ {name} 只有 {len(stream)} 个 token，跳过")
        return []
    if fitted < batch_size:
        print(f"⚠ {name} token 数不足，batch 由 {batch_size} 缩小为 {fitted}")
    return segment_stream(stream, seq_len=seq_len, batch_size=fitted)


# ==========================================
# 子命令实现
# ==========================================

def run_training(config: dict, resume: Optional[str] = None, stop_after: Optional[int] = None,
                 show_progress: bool = True) -> TrainResult:
    """准备数据与模型并训练；训练前先写出解析后的配置"""
    paths = run_paths(config)
    with tc.default_dtype(config["precision"]):
        split = load_split(config, verbose=show_progress)
        vocab = load_vocab(config, split, show_progress)
        train_batches = make_batches(split.train, vocab, config["seq_len"], config["batch"], "训练集")
        valid_batches = make_batches(split.validation, vocab, config["seq_len"], config["batch"],
                                     "验证集", required=False)
        model_config = create_model_config(config, vocab.size)
        model = LanguageModel(model_config, seed=config["seed"])
        save_run_config(config, paths["out_dir"])
        print("=" * 80)
        print(f"训练 {model_config.label}：{count_parameters(model)} 个参数，"
              f"{len(train_batches)} 个训练批次/轮，输出目录 {paths['out_dir']}")
        print("=" * 80)
        result = train_run(
            model, train_batches, valid_batches, create_train_schedule(config), paths["out_dir"],
            clip=config["clip"], seed=config["seed"], vocab_hash=vocab.fingerprint(), run_config=config,
            config_lines=format_run_config(config), resume=resume, stop_after=stop_after,
            show_progress=show_progress,
        )
    print(f"✅ 训练完成：{result.iterations} 次迭代，最佳验证 loss {result.best_val_loss:.4f}")
    return result


def vocab_path_for(checkpoint, config: dict) -> Path:
    """检查点所在运行目录下的 vocab.txt，找不到时使用配置的输出目录"""
    candidate = Path(checkpoint).resolve().parent.parent / "vocab.txt"
    return candidate if candidate.exists() else run_paths(config)["vocab"]


def run_eval(config: dict, checkpoint: Optional[str] = None, split_name: str = "test",
             report_path: Optional[Path] = None):
    """用检查点在测试集（或验证集）上评估，追加一行到 eval_reports.csv"""
    paths = run_paths(config)
    if checkpoint is None:
        checkpoint = paths["best"] if paths["best"].exists() else paths["last"]
    cp = load_checkpoint(checkpoint)
    precision = cp.run_config.get("precision", config["precision"])
    with tc.default_dtype(precision):
        vocab = Vocabulary.load(vocab_path_for(checkpoint, config))
        split = load_split(config, verbose=False)
        model = model_from_checkpoint(cp)
        batches = make_batches(split.files_of(split_name), vocab, cp.model_config.seq_len,
                               config["batch"], split_name)
        report = evaluate(model, batches, kind=vocab.kind, vocab_hash=vocab.fingerprint(),
                          expected_vocab_hash=cp.vocab_hash, seed=cp.run_config.get("seed"),
                          checkpoint=str(checkpoint))
    write_rows([report], report_path or paths["eval_reports"], append=True)
    print(format_report(report))
    return report


def parse_models(text: str) -> List[Tuple[str, int]]:
    """解析 "lstm:4,gru:4,txl:4,txl:8"（也接受 TXL-8 写法）"""
    models = []
    for item in text.split(","):
        item = item.strip().lower().replace("-", ":")
        if not item:
            continue
        arch, _, depth = item.partition(":")
        try:
            models.append((arch, int(depth)))
        except ValueError:
            raise UsageError(f"无法解析模型: {item}（格式 arch:depth）") from None
    if not models:
        raise UsageError("至少需要一个模型")
    return models


def bench_configs(config: dict, models: Sequence[Tuple[str, int]], vocab_size: int) -> List[ModelConfig]:
    return [create_model_config({**config, "arch": arch, "depth": depth}, vocab_size) for arch, depth in models]


def run_bench(config: dict, models: Sequence[Tuple[str, int]], iterations: int,
              output: Optional[Path] = None, show_progress: bool = True):
    """按当前宽度/序列长度对各模型计时，输出归一化耗时表"""
    with tc.default_dtype(config["precision"]):
        vocab_path = run_paths(config)["vocab"]
        vocab_size = Vocabulary.load(vocab_path).size if vocab_path.exists() else config["vocab_size"]
        rows = benchmark_training_time(bench_configs(config, models, vocab_size), iterations=iterations,
                                       batch_size=config["batch"], seed=config["seed"],
                                       show_progress=show_progress)
    write_rows(rows, output or run_paths(config)["bench"])
    print("=" * 80)
    print(f"{'模型':<10}{'参数量':>12}{'中位耗时(秒)':>16}{'归一化':>10}")
    for row in rows:
        print(f"{row.model:<10}{row.parameters:>12}{row.median_seconds:>16.4f}{row.normalized:>10.2f}")
    print("=" * 80)
    return rows


def sample_ids(model: LanguageModel, prompt_ids: np.ndarray, length: int, temperature: float,
               rng: np.random.Generator) -> List[int]:
    """
    先按 seq_len 分段读入提示建立记忆，再逐个 token 生成（记忆随每步传递）

    Returns:
        提示 id + 生成的 length 个 id
    """
    seq_len = model.config.seq_len
    out = [int(i) for i in prompt_ids]
    with tc.no_grad():
        memory = model.initial_memory(1)
        logits = None
        for start in range(0, len(out), seq_len):
            chunk = np.asarray(out[start:start + seq_len], dtype=np.int64)[None, :]
            logits, memory = model.forward(chunk, memory)
        for _ in range(length):
            last = np.asarray(logits.data[0, -1], dtype=np.float64)
            if temperature == 0:
                next_id = int(np.argmax(last))
            else:
                scaled = last / temperature
                probs = np.exp(scaled - scaled.max())
                probs /= probs.sum()
                next_id = int(rng.choice(len(probs), p=probs))
            out.append(next_id)
            logits, memory = model.forward(np.asarray([[next_id]], dtype=np.int64), memory)
    return out


def sample(checkpoint, prompt: str, length: int, temperature: float = 1.0, seed: int = 0,
           vocab_path=None) -> str:
    """
    从检查点生成文本

    Args:
        checkpoint: 检查点路径
        prompt: 提示文本；为空时以 "\\n" 作为提示
        length: 生成的 token 数
        temperature: 采样温度，0 表示取 argmax
        seed: 采样随机数种子
        vocab_path: 词表文件（默认为检查点所在运行目录下的 vocab.txt）

    Raises:
        VocabularyError: 词表与检查点不匹配
    """
    if length < 0 or temperature < 0:
        raise UsageError(f"length 与 temperature 不能为负: {length}, {temperature}")
    cp = load_checkpoint(checkpoint)
    vocab = Vocabulary.load(vocab_path or vocab_path_for(checkpoint, cp.run_config or DEFAULT_RUN_CONFIG))
    if cp.vocab_hash and vocab.fingerprint() != cp.vocab_hash:
        raise VocabularyError("词表与检查点记录的词表指纹不一致")
    with tc.default_dtype(cp.run_config.get("precision", "float32")):
        model = model_from_checkpoint(cp)
        ids = encode(prompt, vocab).ids
        if len(ids) == 0:
            ids = encode("\n", vocab).ids
        if np.all(ids == UNK_ID):
            print("⚠ 提示中的字符都不在词表中，按 <unk> 继续")
        out = sample_ids(model, ids, length, temperature, np.random.default_rng(seed))
    return decode(out, vocab)


def run_experiment(config: dict, models: Sequence[Tuple[str, int]], seeds: Sequence[int],
                   bench_iterations: int = 0, show_progress: bool = True):
    """
    模型 × 种子网格：每次运行单独的输出目录，共用划分清单与词表；
    汇总测试结果（均值、样本标准差），导出最佳种子的验证曲线，可选计时，最后写入工作簿
    """
    root = run_paths(config)["out_dir"]
    shared = run_paths(config)
    split = load_split(config, verbose=show_progress)
    load_vocab(config, split, show_progress)
    reports = []
    curve_runs = []
    for arch, depth in models:
        for seed in seeds:
            run_dir = root / f"{arch}-{depth}-seed{seed}"
            run_dir.mkdir(parents=True, exist_ok=True)
            for key in ("manifest", "vocab"):
                shutil.copyfile(shared[key], run_dir / shared[key].name)
            run_config = {**config, "arch": arch, "depth": depth, "seed": seed, "out_dir": str(run_dir)}
            run_training(run_config, show_progress=show_progress)
            report = run_eval(run_config, report_path=root / "eval_reports.csv")
            reports.append(report)
            curve_runs.append((report.model, seed, run_paths(run_config)["metrics"]))

    summary = summarize_runs(reports)
    curves = validation_curves(curve_runs)
    write_rows(summary, root / "summary.csv")
    write_rows(curves, root / "curves.csv")
    tables = {
        "summary": [[r.model, r.kind, r.runs, r.parameters, r.bpc_mean, r.bpc_std,
                     r.perplexity_mean, r.perplexity_std] for r in summary],
        "curves": [[c.model, c.epoch, c.iter, c.bpc, c.perplexity] for c in curves],
    }
    if bench_iterations:
        timing = run_bench(config, models, bench_iterations, output=root / "timing.csv",
                           show_progress=show_progress)
        tables["timing"] = [[r.model, r.depth, r.parameters, r.median_seconds, r.normalized] for r in timing]

    print("=" * 80)
    for row in summary:
        mean, std = row.headline
        metric = "BPC" if row.kind == CHARACTER else "困惑度"
        print(f"  {row.model:<8} {metric} {mean:.4f} ± {std:.4f}（{row.runs} 次运行，{row.parameters} 个参数）")
    print("=" * 80)
    export_results_workbook(tables, root / "results.xlsx")
    return summary


# ==========================================
# 参数解析
# ==========================================

def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("运行配置（覆盖配置文件与默认值）")
    group.add_argument("--config", help="key = value 格式的配置文件")
    group.add_argument("--seed", type=int)
    group.add_argument("--arch", choices=["txl", "lstm", "gru"])
    group.add_argument("--depth", type=int)
    group.add_argument("--hidden", type=int)
    group.add_argument("--heads", type=int)
    group.add_argument("--ffd-inner", dest="ffd_inner", type=int)
    group.add_argument("--seq-len", dest="seq_len", type=int)
    group.add_argument("--mem-len", dest="mem_len", type=int)
    group.add_argument("--pos-encoding", dest="pos_encoding", choices=["relative", "absolute"])
    group.add_argument("--vocab", choices=["char", "bpe"])
    group.add_argument("--vocab-size", dest="vocab_size", type=int)
    group.add_argument("--epochs", type=int)
    group.add_argument("--iters-per-epoch", dest="iters_per_epoch", type=int)
    group.add_argument("--lr-peak", dest="lr_peak", type=float)
    group.add_argument("--lr-floor", dest="lr_floor", type=float)
    group.add_argument("--warmup", type=int)
    group.add_argument("--clip", type=float)
    group.add_argument("--dropout", type=float)
    group.add_argument("--batch", type=int)
    group.add_argument("--corpus-dir", dest="corpus_dir")
    group.add_argument("--out-dir", dest="out_dir")
    group.add_argument("--threshold", type=float)
    group.add_argument("--extensions", help="逗号分隔的扩展名，默认 .py")
    group.add_argument("--precision", choices=["float32", "float64"])
    group.add_argument("--quiet", action="store_true", help="不显示进度条")


def build_parser() -> CommandParser:
    parser = CommandParser(
        prog="cli.py",
        description="源代码语言模型工具 - Transformer-XL 与 LSTM/GRU 基线的训练与评估",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
使用示例:
  # 扫描语料目录，划分 80/10/10 并去重
  python cli.py ingest --corpus-dir data/corpus --out-dir runs/demo

  # 训练 BPE 词表（1000 个 token）
  python cli.py tokenize --vocab bpe --out-dir runs/demo

  # 桌面规模训练 4 层 Transformer-XL
  python cli.py train --arch txl --depth 4 --hidden 128 --seq-len 128 --mem-len 128 --batch 16 --out-dir runs/demo

  # 在测试集上评估
  python cli.py eval --out-dir runs/demo

  # 训练耗时基准
  python cli.py bench --hidden 128 --seq-len 128 --batch 16

  # 从检查点生成代码
  python cli.py sample --checkpoint runs/demo/checkpoints/best.cxlm --prompt "def " --length 200

  # 四个模型 × 三个种子的完整实验
  python cli.py experiment --config desk.conf --out-dir runs/experiment
        """
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("ingest", help="扫描语料 → 划分 → 去重 → 划分清单")
    _add_config_flags(p)
    p.set_defaults(handler=_cmd_ingest)

    p = sub.add_parser("tokenize", help="训练字符/BPE 词表")
    _add_config_flags(p)
    p.set_defaults(handler=_cmd_tokenize)

    p = sub.add_parser("train", help="训练模型，输出检查点与指标 CSV")
    _add_config_flags(p)
    p.add_argument("--resume", help="从检查点继续训练")
    p.add_argument("--stop-after", dest="stop_after", type=int, help="完成 N 次迭代后保存并停止")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("eval", help="在测试集上评估检查点")
    _add_config_flags(p)
    p.add_argument("--checkpoint", help="检查点路径（默认 out_dir/checkpoints/best.cxlm）")
    p.add_argument("--split", default="test", choices=["validation", "test"])
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("bench", help="归一化训练耗时基准")
    _add_config_flags(p)
    p.add_argument("--models", default="lstm:4,gru:4,txl:4,txl:8")
    p.add_argument("--iterations", type=int, default=BENCH_ITERATIONS, help="计时迭代次数（至少 30）")
    p.set_defaults(handler=_cmd_bench)

    p = sub.add_parser("sample", help="从检查点生成文本")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--prompt", default="")
    p.add_argument("--length", type=int, default=200)
    p.add_argument("--temperature", type=float, default=1.0, help="0 表示 argmax")
    p.add_argument("--vocab-file", dest="vocab_file")
    p.set_defaults(handler=_cmd_sample)

    p = sub.add_parser("experiment", help="模型 × 种子网格实验与结果汇总")
    _add_config_flags(p)
    p.add_argument("--models", default=",".join(f"{a}:{d}" for a, d in EXPERIMENT_MODELS))
    p.add_argument("--seeds", default=",".join(str(s) for s in EXPERIMENT_SEEDS))
    p.add_argument("--bench-iterations", dest="bench_iterations", type=int, default=0,
                   help="大于 0 时同时做训练耗时基准")
    p.set_defaults(handler=_cmd_experiment)
    return parser


def _resolve(args) -> dict:
    overrides = {key: getattr(args, key) for key in DEFAULT_RUN_CONFIG if hasattr(args, key)}
    return load_run_config(args.config, overrides)


def _cmd_ingest(args) -> int:
    run_ingest(_resolve(args))
    return 0


def _cmd_tokenize(args) -> int:
    run_tokenize(_resolve(args), show_progress=not args.quiet)
    return 0


def _cmd_train(args) -> int:
    run_training(_resolve(args), resume=args.resume, stop_after=args.stop_after, show_progress=not args.quiet)
    return 0


def _cmd_eval(args) -> int:
    run_eval(_resolve(args), checkpoint=args.checkpoint, split_name=args.split)
    return 0


def _cmd_bench(args) -> int:
    run_bench(_resolve(args), parse_models(args.models), args.iterations, show_progress=not args.quiet)
    return 0


def _cmd_sample(args) -> int:
    config = _resolve(args)
    print(sample(args.checkpoint, args.prompt, args.length, args.temperature, seed=config["seed"],
                 vocab_path=args.vocab_file))
    return 0


def _cmd_experiment(args) -> int:
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"无法解析种子列表: {args.seeds}") from None
    run_experiment(_resolve(args), parse_models(args.models), seeds,
                   bench_iterations=args.bench_iterations, show_progress=not args.quiet)
    return 0


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """
    解析参数并执行子命令

    Returns:
        退出码：0 成功，1 用法/配置错误，2 数据错误，3 数值错误
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"❌ 用法错误: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:
        return int(e.code or 0)
    if args.command is None:
        parser.print_help()
        return 1
    try:
        return args.handler(args)
    except CodeLMError as e:
        print(f"❌ 错误: {e}")
        return exit_code_for(e)


def main():
    """主函数"""
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
