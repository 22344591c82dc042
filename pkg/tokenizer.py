# -*- coding: utf-8 -*-
"""
源代码分词
字符级与子词级（BPE）两种方案，保证 decode(encode(text)) == text（词表内字符）。

子词方案先按正则把文本切成“单元”（标识符、数字、符号串、空白串），
紧邻单元前的一个空格被替换为词首标记（默认 U+2581），解码时还原为空格；
其余空白作为字面 token 保存。BPE 合并只发生在单元内部。
"""

import hashlib
import heapq
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from errors import DataError, VocabularyError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN)
PAD_ID = 0
UNK_ID = 1

CHARACTER = "character"
SUBWORD = "subword"

WORD_MARKER = "▁"
REPLACEMENT_CHAR = "�"
DEFAULT_VOCAB_BUDGET = 1000

# 标识符 / 数字 / 符号串（可带一个前导空格），其后是空白串
PRETOKENIZE_PATTERN = re.compile(r" ?[^\W\d]\w*| ?\d+| ?[^\s\w]+|\s+(?!\S)|\s+")

_MERGES_HEADER = "#merges"


# ==========================================
# 数据结构
# ==========================================

@dataclass(frozen=True)
class Vocabulary:
    """
    token 与 id 的双射

    ids 连续为 0..size-1，0 为 <pad>，1 为 <unk>；
    子词词表额外记录有序的 BPE 合并列表与词首标记字符。
    """
    kind: str
    tokens: Tuple[str, ...]
    merges: Tuple[Tuple[str, str], ...] = ()
    marker: str = ""
    _index: Dict[str, int] = field(default_factory=dict, init=False, repr=False, compare=False)
    _ranks: Dict[Tuple[str, str], int] = field(default_factory=dict, init=False, repr=False, compare=False)
    _unit_cache: Dict[str, Tuple[int, ...]] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in (CHARACTER, SUBWORD):
            raise VocabularyError(f"未知的词表类型: {self.kind}")
        if tuple(self.tokens[:len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise VocabularyError("词表前两个 token 必须是 <pad>、<unk>")
        for i, token in enumerate(self.tokens):
            if token in self._index:
                raise VocabularyError(f"词表存在重复 token: {token!r}")
            self._index[token] = i
        for rank, pair in enumerate(self.merges):
            self._ranks.setdefault(pair, rank)

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def specials(self) -> Dict[str, int]:
        return {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}

    def id_of(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        if not 0 <= token_id < self.size:
            raise VocabularyError(f"token id 越界: {token_id}（词表大小 {self.size}）")
        return self.tokens[token_id]

    def fingerprint(self) -> str:
        """词表指纹（序列化文本的 SHA-256），写入检查点用于一致性校验"""
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    # ---------- 序列化 ----------
    def to_text(self) -> str:
        lines = [f"#vocab\tkind={self.kind}\tmarker={escape_token(self.marker)}"]
        lines.extend(f"{i}\t{escape_token(token)}" for i, token in enumerate(self.tokens))
        if self.kind == SUBWORD:
            lines.append(_MERGES_HEADER)
            lines.extend(f"{escape_token(a)}\t{escape_token(b)}" for a, b in self.merges)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        lines = text.split("\n")
        if not lines or not lines[0].startswith("#vocab\t"):
            raise VocabularyError("词表文件缺少 #vocab 头")
        header = dict(item.split("=", 1) for item in lines[0].split("\t")[1:])
        kind = header.get("kind", "")
        marker = unescape_token(header.get("marker", ""))
        tokens: List[str] = []
        merges: List[Tuple[str, str]] = []
        in_merges = False
        for line_no, line in enumerate(lines[1:], start=2):
            if line == "":
                continue
            if line == _MERGES_HEADER:
                in_merges = True
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise VocabularyError(f"词表文件第 {line_no} 行格式错误")
            if in_merges:
                merges.append((unescape_token(parts[0]), unescape_token(parts[1])))
            else:
                if int(parts[0]) != len(tokens):
                    raise VocabularyError(f"词表文件第 {line_no} 行 id 不连续")
                tokens.append(unescape_token(parts[1]))
        return cls(kind=kind, tokens=tuple(tokens), merges=tuple(merges), marker=marker)

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        path = Path(path)
        if not path.exists():
            raise VocabularyError(f"词表文件不存在: {path}")
        return cls.from_text(path.read_text(encoding="utf-8"))


@dataclass
class TokenStream:
    """token id 序列，source_boundaries 记录每个源文件在序列中的起始位置"""
    ids: np.ndarray
    source_boundaries: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.ids.shape[0])


# ==========================================
# 转义（词表文件格式）
# ==========================================

_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}


def escape_token(token: str) -> str:
    out = []
    for ch in token:
        if ch in _ESCAPES:
            out.append(_ESCAPES[ch])
        elif not ch.isprintable() or ch == WORD_MARKER:
            code = ord(ch)
            out.append(f"\\u{code:04x}" if code <= 0xFFFF else f"\\U{code:08x}")
        else:
            out.append(ch)
    return "".join(out)


def unescape_token(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        if i + 1 >= len(text):
            raise VocabularyError(f"非法转义: {text!r}")
        code = text[i + 1]
        if code == "\\":
            out.append("\\")
            i += 2
        elif code == "t":
            out.append("\t")
            i += 2
        elif code == "n":
            out.append("\n")
            i += 2
        elif code == "r":
            out.append("\r")
            i += 2
        elif code == "u":
            out.append(chr(int(text[i + 2:i + 6], 16)))
            i += 6
        elif code == "U":
            out.append(chr(int(text[i + 2:i + 10], 16)))
            i += 10
        else:
            raise VocabularyError(f"非法转义: {text!r}")
    return "".join(out)


# ==========================================
# 字符级
# ==========================================

def _require_corpus(corpus: Iterable[str]) -> List[str]:
    texts = [t for t in corpus if t]
    if not texts:
        raise DataError("语料为空，无法构建词表")
    return texts


def build_char_vocab(corpus: Iterable[str]) -> Vocabulary:
    """
    字符级词表：每个不同字符一个 token，按码点排序，加上特殊 token

    Args:
        corpus: 文本集合

    Returns:
        字符级 Vocabulary
    """
    texts = _require_corpus(corpus)
    alphabet = sorted(set().union(*(set(t) for t in texts)))
    return Vocabulary(kind=CHARACTER, tokens=SPECIAL_TOKENS + tuple(alphabet))


# ==========================================
# 子词级（BPE）
# ==========================================

def pretokenize(text: str) -> List[str]:
    """按正则切分为单元，单元拼接恰好还原原文"""
    return PRETOKENIZE_PATTERN.findall(text)


def _unit_symbols(unit: str, marker: str) -> List[str]:
    """单元 → 初始符号序列；前导空格变为词首标记，字面出现的标记字符视为未知"""
    symbols = [UNK_TOKEN if ch == marker else ch for ch in unit]
    if len(unit) > 1 and unit[0] == " " and not unit[1].isspace():
        symbols[0] = marker
    return symbols


def _pick_marker(texts: Sequence[str]) -> str:
    """选择语料中不出现的词首标记字符"""
    used = set().union(*(set(t) for t in texts))
    if WORD_MARKER not in used:
        return WORD_MARKER
    for code in range(0xE000, 0xF900):
        if chr(code) not in used:
            return chr(code)
    raise VocabularyError("找不到可用的词首标记字符")


def _merge_symbols(symbols: List[str], pair: Tuple[str, str], merged: str) -> List[str]:
    out = []
    i = 0
    while i < len(symbols):
        if i < len(symbols) - 1 and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def _pairs_of(symbols: List[str]) -> Counter:
    return Counter(zip(symbols, symbols[1:]))


def train_bpe(corpus: Iterable[str], vocab_budget: int = DEFAULT_VOCAB_BUDGET,
              show_progress: bool = False) -> Vocabulary:
    """
    训练 BPE 子词词表

    反复合并出现次数最多的相邻符号对，直到词表达到预算或没有出现两次以上的符号对；
    次数相同时取字典序最小的符号对，保证结果确定。

    Args:
        corpus: 文本集合
        vocab_budget: 词表大小预算（含特殊 token）
        show_progress: 是否显示进度条

    Returns:
        子词 Vocabulary
    """
    texts = _require_corpus(corpus)
    marker = _pick_marker(texts)

    unit_counts: Counter = Counter()
    for text in texts:
        unit_counts.update(pretokenize(text))

    alphabet = set().union(*(set(t) for t in texts))
    alphabet.add(marker)
    base_tokens = SPECIAL_TOKENS + tuple(sorted(alphabet))
    tokens = list(base_tokens)
    known = set(tokens)
    merges: List[Tuple[str, str]] = []

    words: List[List[str]] = []
    freqs: List[int] = []
    for unit, count in sorted(unit_counts.items()):
        words.append(_unit_symbols(unit, marker))
        freqs.append(count)

    pair_counts: Dict[Tuple[str, str], int] = defaultdict(int)
    pair_words: Dict[Tuple[str, str], set] = defaultdict(set)
    for idx, (symbols, freq) in enumerate(zip(words, freqs)):
        for pair, n in _pairs_of(symbols).items():
            pair_counts[pair] += n * freq
            pair_words[pair].add(idx)
    heap = [(-count, pair) for pair, count in pair_counts.items()]
    heapq.heapify(heap)

    progress = tqdm(total=max(0, vocab_budget - len(tokens)), desc="BPE 合并", disable=not show_progress)
    while len(tokens) < vocab_budget and heap:
        neg_count, pair = heapq.heappop(heap)
        if pair_counts.get(pair, 0) != -neg_count:
            continue
        if -neg_count < 2:
            break
        merged = pair[0] + pair[1]
        merges.append(pair)
        if merged not in known:
            known.add(merged)
            tokens.append(merged)
            progress.update(1)

        changed = set()
        for idx in sorted(pair_words.pop(pair, ())):
            old = words[idx]
            new = _merge_symbols(old, pair, merged)
            if len(new) == len(old):
                continue
            freq = freqs[idx]
            for p, n in _pairs_of(old).items():
                pair_counts[p] -= n * freq
                changed.add(p)
            for p, n in _pairs_of(new).items():
                pair_counts[p] += n * freq
                pair_words[p].add(idx)
                changed.add(p)
            words[idx] = new
        pair_counts.pop(pair, None)
        changed.discard(pair)
        for p in changed:
            count = pair_counts.get(p, 0)
            if count > 0:
                heapq.heappush(heap, (-count, p))
            else:
                pair_counts.pop(p, None)
    progress.close()

    return Vocabulary(kind=SUBWORD, tokens=tuple(tokens), merges=tuple(merges), marker=marker)


def _encode_unit(unit: str, vocab: Vocabulary) -> Tuple[int, ...]:
    cached = vocab._unit_cache.get(unit)
    if cached is not None:
        return cached
    symbols = _unit_symbols(unit, vocab.marker)
    ranks = vocab._ranks
    while len(symbols) > 1:
        best = min(zip(symbols, symbols[1:]), key=lambda p: ranks.get(p, float("inf")))
        if best not in ranks:
            break
        symbols = _merge_symbols(symbols, best, best[0] + best[1])
    ids = tuple(vocab.id_of(s) for s in symbols)
    vocab._unit_cache[unit] = ids
    return ids


# ==========================================
# 编码 / 解码
# ==========================================

def encode(text: str, vocab: Vocabulary) -> TokenStream:
    """
    文本 → token 序列

    字符词表逐字符映射；子词词表按训练顺序应用合并。不在词表中的字符映射为 <unk>。
    """
    if vocab.kind == CHARACTER:
        ids = [vocab.id_of(ch) for ch in text]
    else:
        ids = []
        for unit in pretokenize(text):
            ids.extend(_encode_unit(unit, vocab))
    return TokenStream(ids=np.asarray(ids, dtype=np.int64), source_boundaries=[0] if text else [])


def decode(ids, vocab: Vocabulary) -> str:
    """
    token 序列 → 文本；<unk> 输出为 U+FFFD，<pad> 输出为空

    Raises:
        VocabularyError: id 越界
    """
    if isinstance(ids, TokenStream):
        ids = ids.ids
    pieces = []
    for token_id in np.asarray(ids, dtype=np.int64).reshape(-1).tolist():
        token = vocab.token_of(token_id)
        if token_id == PAD_ID:
            continue
        if token_id == UNK_ID:
            pieces.append(REPLACEMENT_CHAR)
            continue
        pieces.append(token)
    text = "".join(pieces)
    if vocab.kind == SUBWORD and vocab.marker:
        text = text.replace(vocab.marker, " ")
    return text


def build_vocab(kind: str, corpus: Iterable[str], vocab_budget: int = DEFAULT_VOCAB_BUDGET,
                show_progress: bool = False) -> Vocabulary:
    """按类型构建词表（char / bpe 与 character / subword 均可）"""
    if kind in ("char", CHARACTER):
        return build_char_vocab(corpus)
    if kind in ("bpe", SUBWORD):
        return train_bpe(corpus, vocab_budget=vocab_budget, show_progress=show_progress)
    raise VocabularyError(f"未知的分词方案: {kind}")
