# -*- coding: utf-8 -*-
"""
语言模型
Transformer-XL（片段级循环 + 停止梯度的记忆）以及 LSTM / GRU 基线。
所有模型输入 (batch, seq_len) 的 token id，输出 (batch, seq_len, vocab) 的 logits 与新的记忆/状态。
"""

import math
from dataclasses import dataclass, field, fields
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

import tensor_core as tc
from define import ModelConfig
from errors import CheckpointError, ShapeError, VocabularyError
from tensor_core import Parameter, Tensor


# ==========================================
# 参数
# ==========================================

@dataclass
class EmbeddingParams:
    """输入嵌入与输出投影（不共享权重）"""
    input: Parameter  # vocab × hidden
    output_weight: Parameter  # hidden × vocab
    output_bias: Parameter  # vocab


@dataclass
class LayerParams:
    """一层 Transformer-XL 的参数；W_R / u / v 为相对位置注意力参数（absolute 模式下为 None）"""
    W_Q: Parameter
    W_K: Parameter
    W_V: Parameter
    W_O: Parameter
    W_1: Parameter
    b_1: Parameter
    W_2: Parameter
    b_2: Parameter
    norm1_gain: Parameter
    norm1_bias: Parameter
    norm2_gain: Parameter
    norm2_bias: Parameter
    W_R: Optional[Parameter] = None
    u: Optional[Parameter] = None  # heads × head_dim，内容偏置
    v: Optional[Parameter] = None  # heads × head_dim，位置偏置


@dataclass
class LSTMParams:
    """门顺序 i, f, g, o"""
    W_x: Parameter  # in × 4H
    W_h: Parameter  # H × 4H
    b: Parameter  # 4H


@dataclass
class GRUParams:
    """门顺序 z, r, n；候选状态使用 r ⊙ h"""
    W_x: Parameter  # in × 3H
    W_hzr: Parameter  # H × 2H
    W_hn: Parameter  # H × H
    b: Parameter  # 3H


RNNParams = Union[LSTMParams, GRUParams]


def _iter_params(group) -> Iterable[Parameter]:
    for f in fields(group):
        value = getattr(group, f.name)
        if value is not None:
            yield value


class _Initializer:
    """normal(0, init_std) 初始化矩阵，偏置为 0，归一化增益为 1"""

    def __init__(self, rng: np.random.Generator, std: float):
        self.rng = rng
        self.std = std
        self.dtype = tc.get_default_dtype()

    def normal(self, name: str, *shape: int) -> Parameter:
        return Parameter(self.rng.normal(0.0, self.std, size=shape).astype(self.dtype), name)

    def zeros(self, name: str, *shape: int) -> Parameter:
        return Parameter(np.zeros(shape, dtype=self.dtype), name)

    def ones(self, name: str, *shape: int) -> Parameter:
        return Parameter(np.ones(shape, dtype=self.dtype), name)


def init_embedding_params(config: ModelConfig, init: _Initializer) -> EmbeddingParams:
    return EmbeddingParams(
        input=init.normal("embed.input", config.vocab_size, config.hidden),
        output_weight=init.normal("embed.output.weight", config.hidden, config.vocab_size),
        output_bias=init.zeros("embed.output.bias", config.vocab_size),
    )


def init_layer_params(config: ModelConfig, layer: int, init: _Initializer) -> LayerParams:
    H, F = config.hidden, config.ffd_inner
    prefix = f"layers.{layer}"
    params = LayerParams(
        W_Q=init.normal(f"{prefix}.W_Q", H, H),
        W_K=init.normal(f"{prefix}.W_K", H, H),
        W_V=init.normal(f"{prefix}.W_V", H, H),
        W_O=init.normal(f"{prefix}.W_O", H, H),
        W_1=init.normal(f"{prefix}.W_1", H, F),
        b_1=init.zeros(f"{prefix}.b_1", F),
        W_2=init.normal(f"{prefix}.W_2", F, H),
        b_2=init.zeros(f"{prefix}.b_2", H),
        norm1_gain=init.ones(f"{prefix}.norm1.gain", H),
        norm1_bias=init.zeros(f"{prefix}.norm1.bias", H),
        norm2_gain=init.ones(f"{prefix}.norm2.gain", H),
        norm2_bias=init.zeros(f"{prefix}.norm2.bias", H),
    )
    if config.pos_encoding == "relative":
        params.W_R = init.normal(f"{prefix}.W_R", H, H)
        params.u = init.normal(f"{prefix}.u", config.heads, config.head_dim)
        params.v = init.normal(f"{prefix}.v", config.heads, config.head_dim)
    return params


def init_rnn_params(config: ModelConfig, layer: int, init: _Initializer) -> RNNParams:
    H = config.hidden
    prefix = f"layers.{layer}"
    if config.arch == "lstm":
        return LSTMParams(
            W_x=init.normal(f"{prefix}.W_x", H, 4 * H),
            W_h=init.normal(f"{prefix}.W_h", H, 4 * H),
            b=init.zeros(f"{prefix}.b", 4 * H),
        )
    return GRUParams(
        W_x=init.normal(f"{prefix}.W_x", H, 3 * H),
        W_hzr=init.normal(f"{prefix}.W_hzr", H, 2 * H),
        W_hn=init.normal(f"{prefix}.W_hn", H, H),
        b=init.zeros(f"{prefix}.b", 3 * H),
    )


# ==========================================
# 记忆 / 循环状态
# ==========================================

@dataclass
class MemoryState:
    """
    跨片段传递的状态

    Transformer-XL：layers[l] 是上一片段第 l 层的输入（已 detach），形状 (batch, m, hidden)，m ≤ mem_len。
    RNN：hidden[l]（以及 LSTM 的 cell[l]）形状 (batch, hidden)，同样已 detach。
    """
    layers: List[Tensor] = field(default_factory=list)
    hidden: List[Tensor] = field(default_factory=list)
    cell: List[Tensor] = field(default_factory=list)

    def arrays(self) -> Dict[str, np.ndarray]:
        """按名称导出（写入检查点用）"""
        out = {}
        for group in ("layers", "hidden", "cell"):
            for i, t in enumerate(getattr(self, group)):
                out[f"memory.{group}.{i}"] = t.data
        return out

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray]) -> "MemoryState":
        state = cls()
        for group in ("layers", "hidden", "cell"):
            i = 0
            while f"memory.{group}.{i}" in arrays:
                getattr(state, group).append(Tensor(arrays[f"memory.{group}.{i}"]))
                i += 1
        return state


def initial_memory(config: ModelConfig, batch_size: int) -> MemoryState:
    """空记忆（Transformer-XL）或全零状态（RNN）"""
    dtype = tc.get_default_dtype()
    if config.arch == "txl":
        empty = np.zeros((batch_size, 0, config.hidden), dtype=dtype)
        return MemoryState(layers=[Tensor(empty) for _ in range(config.depth)])
    zeros = [Tensor(np.zeros((batch_size, config.hidden), dtype=dtype)) for _ in range(config.depth)]
    cells = []
    if config.arch == "lstm":
        cells = [Tensor(np.zeros((batch_size, config.hidden), dtype=dtype)) for _ in range(config.depth)]
    return MemoryState(hidden=zeros, cell=cells)


# ==========================================
# Transformer-XL
# ==========================================

def causal_mask(seq_len: int, mem_len: int) -> np.ndarray:
    """(seq_len, mem_len + seq_len) 的布尔掩码：记忆全部可见，片段内只能看到自身及之前的位置"""
    query = np.arange(seq_len)[:, None]
    key = np.arange(mem_len + seq_len)[None, :]
    return key <= query + mem_len


def sinusoid_table(positions: np.ndarray, hidden: int) -> np.ndarray:
    """正余弦位置表，偶数列 sin、奇数列 cos"""
    dtype = tc.get_default_dtype()
    half = (hidden + 1) // 2
    inv_freq = 1.0 / (10000.0 ** (np.arange(half, dtype=np.float64) * 2.0 / hidden))
    angles = positions.astype(np.float64)[:, None] * inv_freq[None, :]
    table = np.zeros((len(positions), hidden), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)[:, :len(range(0, hidden, 2))]
    table[:, 1::2] = np.cos(angles)[:, :len(range(1, hidden, 2))]
    return table.astype(dtype)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    """(B, T, H) → (B, heads, T, d)"""
    B, T, H = x.shape
    return x.reshape(B, T, heads, H // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: Tensor) -> Tensor:
    """(B, heads, T, d) → (B, T, H)"""
    B, n, T, d = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, n * d)


def rel_shift(scores: Tensor) -> Tensor:
    """
    把按相对距离 (klen-1 … 0) 排列的位置得分对齐到键的位置：
    shifted[..., i, j] = scores[..., i, j + qlen - 1 - i]（被掩码的位置取值无意义）
    """
    *lead, qlen, klen = scores.shape
    zero = Tensor(np.zeros((*lead, qlen, 1), dtype=scores.dtype))
    padded = tc.concat([zero, scores], axis=-1)
    padded = padded.reshape(*lead, klen + 1, qlen)
    return padded[..., 1:, :].reshape(*lead, qlen, klen)


def self_attention(x: Tensor, mem: Optional[Tensor], p: LayerParams, config: ModelConfig,
                   mask: Optional[np.ndarray] = None) -> Tensor:
    """
    多头自注意力

    Q 只来自当前片段；K、V 来自 [SG(mem) ∥ x]。
    relative 模式下得分为 (q+u)·kᵀ + rel_shift((q+v)·rᵀ)，r 为相对距离正余弦表经 W_R 投影。

    Args:
        x: (batch, seq, hidden)
        mem: (batch, m, hidden) 或 None
        p: 本层参数
        config: 模型配置
        mask: (seq, m + seq) 布尔掩码，None 时使用因果掩码

    Raises:
        ShapeError: 掩码或记忆形状与输入不一致
    """
    B, T, H = x.shape
    if mem is not None and mem.shape[1] > 0:
        if mem.shape[0] != B or mem.shape[2] != H:
            raise ShapeError(f"记忆形状 {mem.shape} 与输入 {x.shape} 不一致")
        context = tc.concat([tc.stop_gradient(mem), x], axis=1)
    else:
        context = x
    M = context.shape[1] - T
    K = M + T
    if mask is None:
        mask = causal_mask(T, M)
    if mask.shape[-2:] != (T, K):
        raise ShapeError(f"注意力掩码形状 {mask.shape} 与得分矩阵 {(T, K)} 不一致")

    n = config.heads
    d = H // n
    scale = 1.0 / math.sqrt(d)
    q = _split_heads(x @ p.W_Q, n)
    k = _split_heads(context @ p.W_K, n)
    v = _split_heads(context @ p.W_V, n)
    k_t = k.transpose(0, 1, 3, 2)

    if config.pos_encoding == "relative":
        distances = np.arange(K - 1, -1, -1)
        r = Tensor(sinusoid_table(distances, H)) @ p.W_R  # (K, H)
        r_t = r.reshape(K, n, d).transpose(1, 2, 0)  # (n, d, K)
        content = (q + p.u.reshape(1, n, 1, d)) @ k_t
        position = rel_shift((q + p.v.reshape(1, n, 1, d)) @ r_t)
        scores = (content + position) * scale
    else:
        scores = (q @ k_t) * scale

    weights = tc.softmax(scores, axis=-1, mask=mask)
    return _merge_heads(weights @ v) @ p.W_O


def ffd(x: Tensor, p: LayerParams) -> Tensor:
    """W_2 · gelu(W_1 · x + b_1) + b_2"""
    return tc.gelu(x @ p.W_1 + p.b_1) @ p.W_2 + p.b_2


def txl_layer(x: Tensor, mem: Optional[Tensor], p: LayerParams, config: ModelConfig,
              training: bool = False, rng: Optional[np.random.Generator] = None,
              mask: Optional[np.ndarray] = None) -> Tensor:
    """
    att = SelfAttention(x); x' = layernorm(att) + x; out = layernorm(ffd(x')) + x'
    训练时在注意力与 FFD 输出之后做 dropout
    """
    att = self_attention(x, mem, p, config, mask)
    att = tc.dropout(att, config.dropout, rng, training)
    x = tc.layer_norm(att, p.norm1_gain, p.norm1_bias) + x
    f = tc.dropout(ffd(x, p), config.dropout, rng, training)
    return tc.layer_norm(f, p.norm2_gain, p.norm2_bias) + x


def _check_ids(ids: np.ndarray, vocab_size: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 2:
        raise ShapeError(f"输入 id 需要 (batch, seq) 形状，实际 {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        raise VocabularyError(f"token id 越界（词表大小 {vocab_size}）: [{ids.min()}, {ids.max()}]")
    return ids


def _embed(ids: np.ndarray, emb: EmbeddingParams, config: ModelConfig) -> Tensor:
    x = tc.embedding(emb.input, ids)
    if config.pos_encoding == "absolute":
        x = x + Tensor(sinusoid_table(np.arange(ids.shape[1]), config.hidden))
    return x


def _project(x: Tensor, emb: EmbeddingParams) -> Tensor:
    return x @ emb.output_weight + emb.output_bias


def txl_forward(ids: np.ndarray, memory: MemoryState, emb: EmbeddingParams, layers: List[LayerParams],
                config: ModelConfig, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, MemoryState]:
    """
    Transformer-XL 前向

    每层消费自己的记忆切片；new_memory[l] 为 [旧记忆 ∥ 本片段第 l 层输入] 的最后 mem_len 个位置（detach）。

    Returns:
        (logits (batch, seq, vocab), new_memory)
    """
    ids = _check_ids(ids, config.vocab_size)
    if len(memory.layers) != config.depth:
        raise ShapeError(f"记忆层数 {len(memory.layers)} 与模型深度 {config.depth} 不一致")
    x = _embed(ids, emb, config)
    new_layers = []
    for l, p in enumerate(layers):
        mem = memory.layers[l]
        new_layers.append(_update_memory(mem, x, config.mem_len))
        x = txl_layer(x, mem, p, config, training, rng)
    return _project(x, emb), MemoryState(layers=new_layers)


def _update_memory(mem: Optional[Tensor], layer_input: Tensor, mem_len: int) -> Tensor:
    B, _, H = layer_input.shape
    if mem_len == 0:
        return Tensor(np.zeros((B, 0, H), dtype=layer_input.dtype))
    if mem is None or mem.shape[1] == 0:
        combined = layer_input.data
    else:
        combined = np.concatenate([mem.data, layer_input.data], axis=1)
    return Tensor(combined[:, -mem_len:].copy())


def transformer_forward(ids: np.ndarray, emb: EmbeddingParams, layers: List[LayerParams],
                        config: ModelConfig, training: bool = False,
                        rng: Optional[np.random.Generator] = None) -> Tensor:
    """不带记忆的普通 Transformer（与 mem_len = 0 的 Transformer-XL 共享权重）"""
    ids = _check_ids(ids, config.vocab_size)
    x = _embed(ids, emb, config)
    for p in layers:
        x = txl_layer(x, None, p, config, training, rng)
    return _project(x, emb)


# ==========================================
# LSTM / GRU
# ==========================================

def lstm_cell(x_t: Optional[Tensor], h: Tensor, c: Tensor, p: LSTMParams,
              x_proj: Optional[Tensor] = None) -> Tuple[Tensor, Tensor]:
    """
    i, f, o = σ(·)，g = tanh(·)；c' = f⊙c + i⊙g；h' = o⊙tanh(c')

    x_proj 为预先算好的 x_t · W_x（整段一次矩阵乘）
    """
    if x_proj is None:
        x_proj = x_t @ p.W_x
    H = h.shape[-1]
    gates = x_proj + h @ p.W_h + p.b
    i = tc.sigmoid(gates[..., 0:H])
    f = tc.sigmoid(gates[..., H:2 * H])
    g = tc.tanh(gates[..., 2 * H:3 * H])
    o = tc.sigmoid(gates[..., 3 * H:4 * H])
    c_next = f * c + i * g
    return o * tc.tanh(c_next), c_next


def gru_cell(x_t: Optional[Tensor], h: Tensor, p: GRUParams,
             x_proj: Optional[Tensor] = None) -> Tensor:
    """
    z, r = σ(·)；h̃ = tanh(x·W_n + (r⊙h)·W_hn + b_n)；h' = (1-z)⊙h + z⊙h̃
    """
    if x_proj is None:
        x_proj = x_t @ p.W_x
    H = h.shape[-1]
    zr = tc.sigmoid(x_proj[..., 0:2 * H] + h @ p.W_hzr + p.b[0:2 * H])
    z = zr[..., 0:H]
    r = zr[..., H:2 * H]
    candidate = tc.tanh(x_proj[..., 2 * H:3 * H] + (r * h) @ p.W_hn + p.b[2 * H:3 * H])
    return (1.0 - z) * h + z * candidate


def rnn_forward(ids: np.ndarray, state: MemoryState, emb: EmbeddingParams, layers: List[RNNParams],
                config: ModelConfig, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, MemoryState]:
    """
    堆叠 LSTM/GRU，逐层在整个片段上展开；状态跨片段传递并在片段之间 detach

    Returns:
        (logits (batch, seq, vocab), new_state)
    """
    ids = _check_ids(ids, config.vocab_size)
    if len(state.hidden) != config.depth:
        raise ShapeError(f"循环状态层数 {len(state.hidden)} 与模型深度 {config.depth} 不一致")
    x = tc.embedding(emb.input, ids)
    T = ids.shape[1]
    new_hidden, new_cell = [], []
    for l, p in enumerate(layers):
        x_proj = x @ p.W_x
        h = state.hidden[l]
        c = state.cell[l] if config.arch == "lstm" else None
        outputs = []
        for t in range(T):
            if config.arch == "lstm":
                h, c = lstm_cell(None, h, c, p, x_proj=x_proj[:, t, :])
            else:
                h = gru_cell(None, h, p, x_proj=x_proj[:, t, :])
            outputs.append(h)
        x = tc.dropout(tc.stack(outputs, axis=1), config.dropout, rng, training)
        new_hidden.append(h.detach())
        if c is not None:
            new_cell.append(c.detach())
    return _project(x, emb), MemoryState(hidden=new_hidden, cell=new_cell)


# ==========================================
# 模型封装
# ==========================================

def count_parameters(params: Union["LanguageModel", Iterable[Parameter]]) -> int:
    """可训练标量总数"""
    if isinstance(params, LanguageModel):
        params = params.parameters()
    return int(sum(p.size for p in params))


class LanguageModel:
    """
    按 ModelConfig 构建的语言模型，统一 Transformer-XL 与 RNN 的调用方式

    参数按名称确定性排列：embed.input、layers.0.*、…、embed.output.*
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        init = _Initializer(np.random.default_rng(seed), config.init_std)
        self.embedding = init_embedding_params(config, init)
        if config.arch == "txl":
            self.layers = [init_layer_params(config, l, init) for l in range(config.depth)]
        else:
            self.layers = [init_rnn_params(config, l, init) for l in range(config.depth)]

    def parameters(self) -> List[Parameter]:
        params = [self.embedding.input]
        for layer in self.layers:
            params.extend(_iter_params(layer))
        params.extend([self.embedding.output_weight, self.embedding.output_bias])
        return params

    def named_parameters(self) -> Dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    def initial_memory(self, batch_size: int) -> MemoryState:
        return initial_memory(self.config, batch_size)

    def forward(self, ids: np.ndarray, memory: Optional[MemoryState] = None, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, MemoryState]:
        ids = np.asarray(ids)
        if memory is None:
            memory = self.initial_memory(ids.shape[0])
        if self.config.arch == "txl":
            return txl_forward(ids, memory, self.embedding, self.layers, self.config, training, rng)
        return rnn_forward(ids, memory, self.embedding, self.layers, self.config, training, rng)

    __call__ = forward

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {p.name: p.data for p in self.parameters()}

    def load_state_dict(self, arrays: Dict[str, np.ndarray]) -> None:
        """
        按名称载入参数（形状必须一致）

        Raises:
            CheckpointError: 缺少参数或形状不一致
        """
        for name, p in self.named_parameters().items():
            if name not in arrays:
                raise CheckpointError(f"检查点缺少参数: {name}")
            value = np.asarray(arrays[name])
            if value.shape != p.shape:
                raise CheckpointError(f"参数 {name} 形状不一致: {value.shape} vs {p.shape}")
            p.data = value.astype(p.dtype, copy=True)
            p.grad = None
