# -*- coding: utf-8 -*-
"""
语料处理
目录扫描 → 80/10/10 划分（精确重复只保留一份）→ 按行重合率去重 → 拼接为 token 流 → 切分为连续片段批次
"""

import hashlib
import os
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from errors import DataError
from tokenizer import TokenStream, Vocabulary, encode

DEFAULT_RATIOS = (0.8, 0.1, 0.1)
DEFAULT_THRESHOLD = 0.25
MIN_FILES = 10

SPLIT_NAMES = ("train", "validation", "test")
FILE_SEPARATOR = "\n"


# ==========================================
# 数据结构
# ==========================================

@dataclass(frozen=True)
class SourceFile:
    """一个源文件；path 为相对语料根目录的 posix 路径"""
    path: str
    text: str

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()

    @property
    def trailing_newline(self) -> bool:
        return self.text.endswith("\n")

    @property
    def lines(self) -> List[str]:
        """按换行切分；末尾换行记在 trailing_newline 中，"\\n".join(lines) 加回后还原 text"""
        body = self.text[:-1] if self.trailing_newline else self.text
        return body.split("\n")


@dataclass(frozen=True)
class ManifestRecord:
    """划分清单中的一行"""
    split: str
    path: str
    content_hash: str
    overlap_ratio: Optional[float]
    status: str  # kept / removed / duplicate


@dataclass
class DatasetSplit:
    """
    训练 / 验证 / 测试集划分

    三个列表按路径和内容哈希互不相交；records 记录每个文件的去向（含被移除的文件）。
    """
    train: List[SourceFile]
    validation: List[SourceFile]
    test: List[SourceFile]
    seed: int
    threshold: float = DEFAULT_THRESHOLD
    records: List[ManifestRecord] = field(default_factory=list)

    def files_of(self, name: str) -> List[SourceFile]:
        if name not in SPLIT_NAMES:
            raise DataError(f"未知的数据集划分: {name}")
        return getattr(self, name)


@dataclass
class SegmentBatch:
    """
    一个训练批次：batch 条连续流各前进 seq_len 个 token

    targets 是 inputs 右移一位；每行最后一个 target 是该流下一个片段的第一个输入。
    """
    inputs: np.ndarray
    targets: np.ndarray
    stream_id: np.ndarray
    is_stream_start: np.ndarray
    segment_index: int = 0

    @property
    def token_count(self) -> int:
        return int(self.targets.size)


# ==========================================
# 读取
# ==========================================

def load_source_dir(root, extensions: Sequence[str] = (".py",)) -> List[SourceFile]:
    """
    扫描目录树，读取指定扩展名的源文件（按路径排序）

    Args:
        root: 语料根目录
        extensions: 扩展名列表

    Returns:
        SourceFile 列表

    Raises:
        DataError: 目录不存在或没有匹配文件
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"语料目录不存在: {root}")
    extensions = tuple(e if e.startswith(".") else f".{e}" for e in extensions)
    files = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for filename in sorted(filenames):
            if not filename.endswith(extensions):
                continue
            full = Path(dirpath) / filename
            try:
                text = full.read_text(encoding="utf-8")
            except UnicodeDecodeError:
                print(f"⚠ 跳过非 UTF-8 文件: {full}")
                continue
            files.append(SourceFile(path=full.relative_to(root).as_posix(), text=text))
    if not files:
        raise DataError(f"语料目录中没有 {', '.join(extensions)} 文件: {root}")
    files.sort(key=lambda f: f.path)
    return files


# ==========================================
# 划分与去重
# ==========================================

def split_corpus(files: Sequence[SourceFile], ratios: Tuple[float, float, float] = DEFAULT_RATIOS,
                 seed: int = 0) -> DatasetSplit:
    """
    按文件数划分训练/验证/测试集

    内容完全相同的文件先合并为一份（保留路径最小者），再按 seed 确定性打乱后按比例切分。

    Raises:
        DataError: 比例之和不为 1 或文件数少于 10
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise DataError(f"划分比例必须是三个非负数且和为 1: {ratios}")

    unique: List[SourceFile] = []
    seen: Dict[str, SourceFile] = {}
    records: List[ManifestRecord] = []
    for f in sorted(files, key=lambda f: f.path):
        digest = f.content_hash
        if digest in seen:
            records.append(ManifestRecord("duplicate", f.path, digest, None, "duplicate"))
            continue
        seen[digest] = f
        unique.append(f)
    if len(unique) < MIN_FILES:
        raise DataError(f"去除重复后文件数 {len(unique)} 少于 {MIN_FILES}，无法划分")

    shuffled = list(unique)
    random.Random(seed).shuffle(shuffled)
    n_train = int(round(len(shuffled) * ratios[0]))
    n_valid = int(round(len(shuffled) * ratios[1]))
    train = sorted(shuffled[:n_train], key=lambda f: f.path)
    validation = sorted(shuffled[n_train:n_train + n_valid], key=lambda f: f.path)
    test = sorted(shuffled[n_train + n_valid:], key=lambda f: f.path)
    for name, group in zip(SPLIT_NAMES, (train, validation, test)):
        records.extend(ManifestRecord(name, f.path, f.content_hash, None, "kept") for f in group)
    return DatasetSplit(train=train, validation=validation, test=test, seed=seed, records=records)


def normalize_line(line: str) -> str:
    return line.strip()


def build_line_index(files: Iterable[SourceFile]) -> FrozenSet[str]:
    """训练集所有非空行（去首尾空白）的集合"""
    index = set()
    for f in files:
        for line in f.lines:
            norm = normalize_line(line)
            if norm:
                index.add(norm)
    return frozenset(index)


def line_overlap_ratio(candidate: SourceFile, train_index: FrozenSet[str]) -> float:
    """
    候选文件的非空行中出现在训练集里的比例（按行出现次数计）

    Returns:
        [0, 1] 之间的比例；没有非空行时为 0
    """
    lines = [normalize_line(line) for line in candidate.lines]
    lines = [line for line in lines if line]
    if not lines:
        return 0.0
    hits = sum(1 for line in lines if line in train_index)
    return hits / len(lines)


def dedup_filter(split: DatasetSplit, threshold: float = DEFAULT_THRESHOLD,
                 verbose: bool = True) -> DatasetSplit:
    """
    移除与训练集行重合率高于阈值（严格大于）的验证/测试文件，训练集不变

    Returns:
        新的 DatasetSplit，records 中带有每个验证/测试文件的重合率与去向
    """
    index = build_line_index(split.train)
    records = [r for r in split.records if r.split not in ("validation", "test")]
    survivors: Dict[str, List[SourceFile]] = {}
    removed = 0
    for name in ("validation", "test"):
        kept = []
        for f in split.files_of(name):
            ratio = line_overlap_ratio(f, index)
            if ratio > threshold:
                removed += 1
                records.append(ManifestRecord(name, f.path, f.content_hash, ratio, "removed"))
                if verbose:
                    print(f"  移除 [{name}] {f.path}（行重合率 {ratio:.2%} > {threshold:.0%}）")
            else:
                kept.append(f)
                records.append(ManifestRecord(name, f.path, f.content_hash, ratio, "kept"))
        survivors[name] = kept
    if verbose:
        print(f"✅ 去重完成：移除 {removed} 个验证/测试文件")
    return replace(split, validation=survivors["validation"], test=survivors["test"],
                   threshold=threshold, records=records)


# ==========================================
# 划分清单
# ==========================================

def write_split_manifest(split: DatasetSplit, path, corpus_dir) -> None:
    """
    写出划分清单：每行 split、path、内容哈希、重合率、kept/removed/duplicate
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"# corpus_dir = {Path(corpus_dir).as_posix()}",
        f"# seed = {split.seed}",
        f"# threshold = {split.threshold}",
        "split\tpath\tcontent_hash\toverlap_ratio\tstatus",
    ]
    for r in split.records:
        ratio = "-" if r.overlap_ratio is None else f"{r.overlap_ratio:.6f}"
        lines.append(f"{r.split}\t{r.path}\t{r.content_hash}\t{ratio}\t{r.status}")
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def read_split_manifest(path, corpus_dir=None) -> DatasetSplit:
    """
    读取划分清单并从语料目录重新载入保留下来的文件

    Raises:
        DataError: 清单不存在、格式错误、文件缺失或内容哈希不一致
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"划分清单不存在: {path}")
    header: Dict[str, str] = {}
    records: List[ManifestRecord] = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            header[key.strip()] = value.strip()
            continue
        if not line or line.startswith("split\t"):
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise DataError(f"划分清单格式错误: {line!r}")
        split_name, rel, digest, ratio, status = parts
        records.append(ManifestRecord(split_name, rel, digest, None if ratio == "-" else float(ratio), status))

    root = Path(corpus_dir if corpus_dir is not None else header.get("corpus_dir", "."))
    groups: Dict[str, List[SourceFile]] = {name: [] for name in SPLIT_NAMES}
    for r in records:
        if r.status != "kept":
            continue
        full = root / r.path
        if not full.exists():
            raise DataError(f"清单中的文件不存在: {full}")
        f = SourceFile(path=r.path, text=full.read_text(encoding="utf-8"))
        if f.content_hash != r.content_hash:
            raise DataError(f"文件内容与清单哈希不一致: {full}")
        groups[r.split].append(f)
    return DatasetSplit(train=groups["train"], validation=groups["validation"], test=groups["test"],
                        seed=int(header.get("seed", 0)),
                        threshold=float(header.get("threshold", DEFAULT_THRESHOLD)),
                        records=records)


# ==========================================
# token 流与片段批次
# ==========================================

def build_token_stream(files: Sequence[SourceFile], vocab: Vocabulary) -> TokenStream:
    """按路径顺序编码并以换行连接各文件，记录每个文件的起始位置"""
    separator = encode(FILE_SEPARATOR, vocab).ids
    pieces = []
    boundaries = []
    offset = 0
    for i, f in enumerate(sorted(files, key=lambda f: f.path)):
        if i > 0:
            pieces.append(separator)
            offset += len(separator)
        ids = encode(f.text, vocab).ids
        boundaries.append(offset)
        pieces.append(ids)
        offset += len(ids)
    ids = np.concatenate(pieces) if pieces else np.zeros(0, dtype=np.int64)
    return TokenStream(ids=ids.astype(np.int64), source_boundaries=boundaries)


def fit_batch_size(n_tokens: int, seq_len: int, batch_size: int) -> int:
    """token 数不足时缩小 batch，使每条流至少有一个完整片段；返回 0 表示连一条流都不够"""
    return max(0, min(batch_size, n_tokens // (seq_len + 1)))


def segment_stream(stream, seq_len: int = 256, batch_size: int = 1) -> List[SegmentBatch]:
    """
    把 token 流切成 batch_size 条等长连续流，每个批次让每条流前进 seq_len 个 token，丢弃末尾余数

    Raises:
        DataError: token 数少于 batch_size × (seq_len + 1)
    """
    ids = stream.ids if isinstance(stream, TokenStream) else np.asarray(stream)
    ids = np.asarray(ids, dtype=np.int64)
    if seq_len <= 0 or batch_size <= 0:
        raise DataError(f"seq_len 与 batch_size 必须为正: {seq_len}, {batch_size}")
    if len(ids) < batch_size * (seq_len + 1):
        raise DataError(f"token 流长度 {len(ids)} 不足 batch_size × (seq_len + 1) = {batch_size * (seq_len + 1)}")
    per_stream = len(ids) // batch_size
    streams = ids[:per_stream * batch_size].reshape(batch_size, per_stream)
    n_batches = (per_stream - 1) // seq_len
    batches = []
    for k in range(n_batches):
        start = k * seq_len
        batches.append(SegmentBatch(
            inputs=streams[:, start:start + seq_len].copy(),
            targets=streams[:, start + 1:start + seq_len + 1].copy(),
            stream_id=np.arange(batch_size),
            is_stream_start=np.full(batch_size, k == 0),
            segment_index=k,
        ))
    return batches
