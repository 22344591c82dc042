# -*- coding: utf-8 -*-
"""
评估
BPC / 困惑度、测试集评估报告、归一化训练耗时基准、多种子结果汇总与验证曲线导出
"""

import csv
import math
import statistics
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

import tensor_core as tc
from corpus import SegmentBatch
from define import EvalReport, ModelConfig
from errors import ConfigError, NumericError, VocabularyError
from models import LanguageModel, count_parameters
from tokenizer import CHARACTER
from training import AdamState, adam_step, cross_entropy, read_metrics, stream_loss

PERPLEXITY_OVERFLOW = 700.0
MIN_TIMED_ITERATIONS = 30
DEFAULT_BENCH_WARMUP = 10


# ==========================================
# 指标
# ==========================================

def bpc(loss: float) -> float:
    """
    每字符比特数 = loss / ln 2

    Raises:
        NumericError: loss 为负
    """
    if loss < 0:
        raise NumericError(f"loss 不能为负: {loss}")
    return loss / math.log(2)


def perplexity(loss: float) -> float:
    """
    困惑度 = e^loss；loss > 700 时返回 +∞

    Raises:
        NumericError: loss 为负
    """
    if loss < 0:
        raise NumericError(f"loss 不能为负: {loss}")
    if loss > PERPLEXITY_OVERFLOW:
        return math.inf
    return math.exp(loss)


def evaluate(model: LanguageModel, batches: Sequence[SegmentBatch], kind: str = CHARACTER,
             vocab_hash: str = "", expected_vocab_hash: str = "", seed: Optional[int] = None,
             checkpoint: str = "") -> EvalReport:
    """
    在测试流上教师强制评估，记忆在连续片段之间传递，关闭 dropout

    Args:
        model: 已训练模型
        batches: 测试流的片段批次
        kind: 词表类型（character 报告 BPC，subword 报告困惑度，两者都保存）
        vocab_hash: 测试流所用词表的指纹
        expected_vocab_hash: 检查点记录的词表指纹

    Raises:
        VocabularyError: 两个词表指纹不一致
    """
    if vocab_hash and expected_vocab_hash and vocab_hash != expected_vocab_hash:
        raise VocabularyError("检查点的词表指纹与测试流的词表不一致")
    start = time.perf_counter()
    loss, count = stream_loss(model, batches)
    seconds = time.perf_counter() - start
    if count == 0:
        raise ConfigError("测试流为空，无法评估")
    return EvalReport(
        model=model.config.label, depth=model.config.depth, kind=kind, token_count=count,
        loss=loss, bpc=bpc(loss), perplexity=perplexity(loss), seconds=seconds,
        tokens_per_second=count / seconds if seconds > 0 else math.inf,
        seed=seed, parameters=count_parameters(model), checkpoint=checkpoint,
    )


def format_report(report: EvalReport) -> str:
    """面向终端的评估摘要"""
    headline = (f"BPC {report.bpc:.4f}" if report.kind == CHARACTER
                else f"困惑度 {report.perplexity:.4f}")
    return "\n".join([
        "=" * 80,
        f"📊 {report.model}（{report.kind}）{headline}",
        "=" * 80,
        f"  token 数:    {report.token_count}",
        f"  平均 loss:   {report.loss:.6f} nats/token",
        f"  BPC:         {report.bpc:.6f}",
        f"  困惑度:      {report.perplexity:.6f}",
        f"  参数量:      {report.parameters}",
        f"  耗时:        {report.seconds:.2f} 秒（{report.tokens_per_second:.1f} token/秒）",
    ])


# ==========================================
# 训练耗时基准
# ==========================================

@dataclass
class BenchRow:
    model: str
    depth: int
    parameters: int
    median_seconds: float
    normalized: float


def _time_iterations(config: ModelConfig, iterations: int, warmup: int, batch_size: int,
                     seed: int, show_progress: bool) -> List[float]:
    rng = np.random.default_rng(seed)
    model = LanguageModel(config, seed=seed)
    params = model.parameters()
    adam = AdamState.zeros(params)
    memory = model.initial_memory(batch_size)
    times = []
    for i in tqdm(range(warmup + iterations), desc=config.label, disable=not show_progress, leave=False):
        ids = rng.integers(0, config.vocab_size, size=(batch_size, config.seq_len + 1))
        start = time.perf_counter()
        logits, memory = model.forward(ids[:, :-1], memory, training=True, rng=rng)
        loss = cross_entropy(logits, ids[:, 1:])
        tc.backward(loss, params)
        grads, _ = tc.clip_global_norm(params, 0.1)
        adam_step(params, grads, adam, 1e-4)
        for p in params:
            p.zero_grad()
        if i >= warmup:
            times.append(time.perf_counter() - start)
    return times


def benchmark_training_time(configs: Sequence[ModelConfig], iterations: int = MIN_TIMED_ITERATIONS,
                            batch_size: int = 16, seed: int = 0, warmup: int = DEFAULT_BENCH_WARMUP,
                            show_progress: bool = True) -> List[BenchRow]:
    """
    依次计时每个模型的完整训练迭代（前向、反向、裁剪、Adam），去掉前 warmup 次，
    取中位数并除以最快模型的中位数

    Raises:
        ConfigError: 计时迭代少于 30 次
    """
    if iterations < MIN_TIMED_ITERATIONS:
        raise ConfigError(f"计时迭代 {iterations} 次太少（至少 {MIN_TIMED_ITERATIONS} 次）")
    if not configs:
        raise ConfigError("基准测试需要至少一个模型配置")
    medians = []
    for config in configs:
        times = _time_iterations(config, iterations, warmup, batch_size, seed, show_progress)
        medians.append(statistics.median(times))
    fastest = min(medians)
    return [
        BenchRow(model=config.label, depth=config.depth,
                 parameters=count_parameters(LanguageModel(config, seed=seed)),
                 median_seconds=median, normalized=median / fastest)
        for config, median in zip(configs, medians)
    ]


# ==========================================
# 多种子汇总与验证曲线
# ==========================================

@dataclass
class SummaryRow:
    model: str
    kind: str
    runs: int
    parameters: int
    bpc_mean: float
    bpc_std: float
    perplexity_mean: float
    perplexity_std: float

    @property
    def headline(self) -> Tuple[float, float]:
        if self.kind == CHARACTER:
            return self.bpc_mean, self.bpc_std
        return self.perplexity_mean, self.perplexity_std


def _mean_std(values: Sequence[float]) -> Tuple[float, float]:
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def summarize_runs(reports: Iterable[EvalReport]) -> List[SummaryRow]:
    """按模型分组，给出各种子测试结果的均值与样本标准差（保持首次出现的顺序）"""
    groups: Dict[Tuple[str, str], List[EvalReport]] = {}
    for report in reports:
        groups.setdefault((report.model, report.kind), []).append(report)
    rows = []
    for (model, kind), group in groups.items():
        bpc_mean, bpc_std = _mean_std([r.bpc for r in group])
        ppl_mean, ppl_std = _mean_std([r.perplexity for r in group])
        rows.append(SummaryRow(model=model, kind=kind, runs=len(group), parameters=group[0].parameters,
                               bpc_mean=bpc_mean, bpc_std=bpc_std,
                               perplexity_mean=ppl_mean, perplexity_std=ppl_std))
    return rows


@dataclass
class CurvePoint:
    model: str
    epoch: int
    iter: int
    bpc: float
    perplexity: float


def validation_curves(runs: Iterable[Tuple[str, int, Path]]) -> List[CurvePoint]:
    """
    每个模型选最终验证 loss 最低的种子，取出它逐 epoch 的验证指标

    Args:
        runs: (模型名, 种子, metrics.csv 路径)
    """
    best: Dict[str, Tuple[float, int, List[dict]]] = {}
    for model, seed, path in runs:
        rows = [r for r in read_metrics(path) if r["split"] == "validation"]
        if not rows:
            continue
        final = rows[-1]["loss"]
        if model not in best or final < best[model][0]:
            best[model] = (final, seed, rows)
    points = []
    for model, (_, _seed, rows) in best.items():
        points.extend(CurvePoint(model=model, epoch=r["epoch"], iter=r["iter"],
                                 bpc=r["bpc"], perplexity=r["perplexity"]) for r in rows)
    return points


# ==========================================
# CSV 输出
# ==========================================

def write_rows(rows: Sequence, path, append: bool = False) -> Path:
    """把 dataclass 列表写成 CSV（追加时不重复写表头）"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        return path
    names = [f.name for f in fields(rows[0])]
    write_header = not (append and path.exists() and path.stat().st_size > 0)
    with open(path, "a" if append else "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        if write_header:
            writer.writerow(names)
        for row in rows:
            values = asdict(row)
            writer.writerow([_format_cell(values[name]) for name in names])
    return path


def _format_cell(value):
    if isinstance(value, float):
        return f"{value:.6f}" if math.isfinite(value) else str(value)
    return "" if value is None else value
