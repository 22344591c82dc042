# -*- coding: utf-8 -*-
"""
训练
线性预热 + 半余弦衰减的学习率、交叉熵目标、Adam、全局范数裁剪 0.1、
CXLM 检查点读写、指标 CSV，以及把它们串起来的 train_run。
"""

import csv
import json
import math
import os
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

import tensor_core as tc
from corpus import SegmentBatch
from define import ModelConfig, TrainSchedule
from errors import CheckpointError, ConfigError, NumericError
from models import LanguageModel, MemoryState
from tensor_core import Parameter, Tensor

CHECKPOINT_MAGIC = b"CXLM"
CHECKPOINT_VERSION = 1
METRICS_HEADER = ["iter", "epoch", "split", "loss", "bpc", "perplexity", "lr", "grad_norm", "seconds"]

_HEADER = struct.Struct("<4sII")
_DTYPES = {"float32": "<f4", "float64": "<f8"}


# ==========================================
# 学习率与损失
# ==========================================

def lr_at(iteration: int, sched: TrainSchedule) -> float:
    """
    第 iteration 次迭代的学习率

    iteration ≤ warmup：floor + (peak - floor) · iteration / warmup
    之后：floor + (peak - floor) · 0.5 · (1 + cos(π · (iteration - warmup) / (total - warmup)))
    超过 total 时保持在 floor
    """
    floor, peak = sched.lr_floor, sched.lr_peak
    if iteration >= sched.total_iters:
        return floor
    iteration = max(iteration, 0)
    if sched.warmup_iters > 0 and iteration <= sched.warmup_iters:
        return floor + (peak - floor) * iteration / sched.warmup_iters
    progress = (iteration - sched.warmup_iters) / (sched.total_iters - sched.warmup_iters)
    return floor + (peak - floor) * 0.5 * (1.0 + math.cos(math.pi * progress))


def cross_entropy(predicted: Tensor, targets: np.ndarray, from_logits: bool = True) -> Tensor:
    """
    所有 (batch, time) 位置上 -log y[target] 的均值

    Args:
        predicted: from_logits 为真时是 logits（与 softmax 融合在对数空间计算），否则是概率行
        targets: 目标 id，形状与 predicted 去掉最后一维一致
        from_logits: 输入是否为 logits

    Returns:
        标量损失（nats/token）
    """
    if from_logits:
        return tc.softmax_cross_entropy(predicted, targets)
    predicted = tc.as_tensor(predicted)
    targets = np.asarray(targets)
    floor = float(np.finfo(predicted.dtype).tiny)
    picked = tc.take_along_last(predicted, targets[..., None])
    if np.any(picked.data < floor):
        print(f"⚠ 目标概率为 0，按精度下限 {floor:.3e} 截断计算 log")
    return -tc.mean(tc.log(picked, floor=floor))


def token_nll(logits: Tensor, targets: np.ndarray) -> np.ndarray:
    """逐 token 的负对数似然（float64，不记录计算图）"""
    flat = np.asarray(logits.data, dtype=np.float64).reshape(-1, logits.shape[-1])
    shifted = flat - flat.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1))
    flat_targets = np.asarray(targets).reshape(-1)
    return log_z - shifted[np.arange(flat.shape[0]), flat_targets]


# ==========================================
# Adam
# ==========================================

@dataclass
class AdamState:
    """每个参数的一阶矩 m、二阶矩 v（按参数名索引）与步数 t"""
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: Sequence[Parameter]) -> "AdamState":
        return cls(m={p.name: np.zeros_like(p.data) for p in params},
                   v={p.name: np.zeros_like(p.data) for p in params})


def adam_step(params: Sequence[Parameter], grads: Sequence[np.ndarray], state: AdamState, lr: float) -> None:
    """
    带偏差修正的 Adam 更新（调用前梯度应已裁剪）

    m ← β1·m + (1-β1)·g；v ← β2·v + (1-β2)·g²；θ ← θ - lr·m̂ / (√v̂ + ε)
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.t
    correction2 = 1.0 - b2 ** state.t
    for p, g in zip(params, grads):
        dtype = p.data.dtype.type
        m = dtype(b1) * state.m[p.name] + dtype(1.0 - b1) * g
        v = dtype(b2) * state.v[p.name] + dtype(1.0 - b2) * (g * g)
        state.m[p.name] = m
        state.v[p.name] = v
        m_hat = m / dtype(correction1)
        v_hat = v / dtype(correction2)
        p.data = p.data - dtype(lr) * m_hat / (np.sqrt(v_hat) + dtype(state.eps))


# ==========================================
# 检查点
# ==========================================

@dataclass
class Checkpoint:
    """
    训练现场：模型配置、全部参数、Adam 状态、迭代数、随机数状态、词表指纹，
    以及恢复训练需要的记忆、下一个批次下标和最佳验证损失
    """
    model_config: ModelConfig
    params: Dict[str, np.ndarray]
    adam: AdamState
    iteration: int = 0
    rng_state: dict = field(default_factory=dict)
    vocab_hash: str = ""
    memory: Dict[str, np.ndarray] = field(default_factory=dict)
    next_batch: int = 0
    best_val_loss: float = math.inf
    run_config: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION


def _array_entries(cp: Checkpoint) -> List[Tuple[str, np.ndarray]]:
    entries = [(f"param.{name}", arr) for name, arr in cp.params.items()]
    entries += [(f"adam.m.{name}", arr) for name, arr in cp.adam.m.items()]
    entries += [(f"adam.v.{name}", arr) for name, arr in cp.adam.v.items()]
    entries += list(cp.memory.items())
    return entries


def save_checkpoint(cp: Checkpoint, path) -> None:
    """
    写出 CXLM 检查点：magic "CXLM"、u32 版本、u32 元数据长度、UTF-8 元数据（每行 key = json）、
    再按清单顺序写出小端 IEEE-754 数组。先写临时文件再原子替换。
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = _array_entries(cp)
    manifest = []
    blobs = []
    for name, arr in entries:
        arr = np.asarray(arr)
        dtype = _DTYPES.get(arr.dtype.name)
        if dtype is None:
            raise CheckpointError(f"数组 {name} 的类型 {arr.dtype} 无法写入检查点")
        manifest.append([name, dtype, list(arr.shape)])
        blobs.append(np.ascontiguousarray(arr, dtype=dtype).tobytes())
    metadata = {
        "model_config": cp.model_config.to_dict(),
        "iteration": cp.iteration,
        "next_batch": cp.next_batch,
        "best_val_loss": cp.best_val_loss,
        "vocab_hash": cp.vocab_hash,
        "rng_state": cp.rng_state,
        "adam": {"t": cp.adam.t, "beta1": cp.adam.beta1, "beta2": cp.adam.beta2, "eps": cp.adam.eps},
        "run_config": cp.run_config,
        "arrays": manifest,
    }
    meta_bytes = "".join(f"{key} = {json.dumps(value, ensure_ascii=False)}\n"
                         for key, value in metadata.items()).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_HEADER.pack(CHECKPOINT_MAGIC, cp.version, len(meta_bytes)))
        f.write(meta_bytes)
        for blob in blobs:
            f.write(blob)
    os.replace(tmp, path)


def _parse_metadata(text: str) -> dict:
    metadata = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            raise CheckpointError(f"检查点元数据格式错误: {line!r}")
        metadata[key] = json.loads(value)
    return metadata


def load_checkpoint(path) -> Checkpoint:
    """
    读取 CXLM 检查点

    Raises:
        CheckpointError: 文件不存在、magic/版本不符、元数据损坏或文件被截断
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"检查点不存在: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"检查点被截断: {path}")
    magic, version, meta_len = _HEADER.unpack_from(raw, 0)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"不是 CXLM 检查点（magic={magic!r}）: {path}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"检查点版本 {version} 不受支持（当前版本 {CHECKPOINT_VERSION}）")
    offset = _HEADER.size
    if len(raw) < offset + meta_len:
        raise CheckpointError(f"检查点被截断: {path}")
    try:
        metadata = _parse_metadata(raw[offset:offset + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"检查点元数据损坏: {e}") from e
    missing = {"model_config", "arrays", "adam", "iteration"} - metadata.keys()
    if missing:
        raise CheckpointError(f"检查点元数据缺少字段: {', '.join(sorted(missing))}")
    offset += meta_len

    arrays: Dict[str, np.ndarray] = {}
    for name, dtype, shape in metadata["arrays"]:
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * np.dtype(dtype).itemsize
        if len(raw) < offset + nbytes:
            raise CheckpointError(f"检查点被截断（数组 {name}）: {path}")
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(shape)
        arrays[name] = arr.astype(np.dtype(dtype).newbyteorder("="), copy=True)
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"检查点末尾有多余数据: {path}")

    def group(prefix: str) -> Dict[str, np.ndarray]:
        return {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}

    adam_meta = metadata["adam"]
    adam = AdamState(m=group("adam.m."), v=group("adam.v."), t=adam_meta["t"],
                     beta1=adam_meta["beta1"], beta2=adam_meta["beta2"], eps=adam_meta["eps"])
    return Checkpoint(
        model_config=ModelConfig(**metadata["model_config"]),
        params=group("param."),
        adam=adam,
        iteration=metadata["iteration"],
        rng_state=metadata.get("rng_state", {}),
        vocab_hash=metadata.get("vocab_hash", ""),
        memory={k: v for k, v in arrays.items() if k.startswith("memory.")},
        next_batch=metadata.get("next_batch", 0),
        best_val_loss=float(metadata.get("best_val_loss", math.inf)),
        run_config=metadata.get("run_config", {}),
        version=version,
    )


def model_from_checkpoint(cp: Checkpoint) -> LanguageModel:
    model = LanguageModel(cp.model_config)
    model.load_state_dict(cp.params)
    return model


# ==========================================
# 指标日志
# ==========================================

class MetricsLog:
    """
    指标 CSV：文件开头是 "# key = value" 形式的运行配置，之后是表头与逐行记录
    """

    def __init__(self, path, config_lines: Sequence[str] = (), append: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fresh = not (append and self.path.exists())
        self._file = open(self.path, "w" if fresh else "a", encoding="utf-8", newline="")
        self._writer = csv.writer(self._file, lineterminator="\n")
        if fresh:
            for line in config_lines:
                self._file.write(line.rstrip("\n") + "\n")
            self._writer.writerow(METRICS_HEADER)
            self._file.flush()

    def append(self, iteration: int, epoch: int, split: str, loss: float, lr: float,
               grad_norm: float, seconds: float) -> None:
        bpc = loss / math.log(2)
        ppl = math.exp(loss) if loss <= 700 else math.inf
        self._writer.writerow([iteration, epoch, split, f"{loss:.6f}", f"{bpc:.6f}", f"{ppl:.6f}",
                               f"{lr:.6e}", "" if grad_norm is None else f"{grad_norm:.6f}", f"{seconds:.4f}"])
        self._file.flush()

    def close(self) -> None:
        self._file.close()

    def __enter__(self) -> "MetricsLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_metrics(path) -> List[dict]:
    """读取指标 CSV（跳过 # 开头的配置行），数值列转换为 float/int"""
    with open(path, encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(line for line in f if not line.startswith("#")))
    for row in rows:
        row["iter"] = int(row["iter"])
        row["epoch"] = int(row["epoch"])
        for key in ("loss", "bpc", "perplexity", "lr", "seconds"):
            row[key] = float(row[key])
        row["grad_norm"] = float(row["grad_norm"]) if row["grad_norm"] else None
    return rows


# ==========================================
# 训练循环
# ==========================================

def stream_loss(model: LanguageModel, batches: Sequence[SegmentBatch]) -> Tuple[float, int]:
    """
    教师强制地依次处理连续片段，记忆在片段之间传递，不使用 dropout

    Returns:
        (按 token 加权的平均损失, token 数)
    """
    total = 0.0
    count = 0
    memory: Optional[MemoryState] = None
    with tc.no_grad():
        for batch in batches:
            if memory is None or batch.segment_index == 0:
                memory = model.initial_memory(batch.inputs.shape[0])
            logits, memory = model.forward(batch.inputs, memory, training=False)
            nll = token_nll(logits, batch.targets)
            total += float(nll.sum())
            count += nll.size
    if count == 0:
        return math.nan, 0
    return total / count, count


@dataclass
class TrainResult:
    iterations: int
    final_train_loss: float
    best_val_loss: float
    last_checkpoint: Path
    best_checkpoint: Path
    metrics_path: Path


def train_run(model: LanguageModel, train_batches: Sequence[SegmentBatch],
              valid_batches: Sequence[SegmentBatch], sched: TrainSchedule, out_dir,
              clip: float = 0.1, seed: int = 0, vocab_hash: str = "", run_config: Optional[dict] = None,
              config_lines: Sequence[str] = (), resume: Optional[str] = None,
              stop_after: Optional[int] = None, show_progress: bool = True) -> TrainResult:
    """
    完整训练循环

    每次迭代：取下一个片段批次（记忆沿用上一次迭代，流重新开始时清空）→ 前向 → 交叉熵 →
    反向 → 全局范数裁剪 → Adam(lr_at(iter))。每个 epoch 结束做一次完整验证，
    写一行验证指标，保存 last 检查点，验证损失更优时另存 best 检查点。

    Args:
        model: 待训练模型
        train_batches: 训练流的片段批次（循环使用）
        valid_batches: 验证流的片段批次
        sched: 学习率计划（total_iters、epoch_iters）
        out_dir: 输出目录（metrics.csv、checkpoints/）
        clip: 梯度全局范数上限
        seed: dropout 随机数种子
        vocab_hash: 词表指纹，写入检查点
        run_config: 解析后的运行配置，写入检查点
        config_lines: 写在指标 CSV 开头的配置行
        resume: 从该检查点继续训练
        stop_after: 完成该迭代数后保存检查点并停止
        show_progress: 是否显示进度条

    Returns:
        TrainResult

    Raises:
        NumericError: 某次迭代的 loss 非有限
    """
    if not train_batches:
        raise ConfigError("训练批次为空")
    if clip <= 0:
        raise ConfigError(f"clip 必须为正: {clip}")
    out_dir = Path(out_dir)
    ckpt_dir = out_dir / "checkpoints"
    last_path = ckpt_dir / "last.cxlm"
    best_path = ckpt_dir / "best.cxlm"
    params = model.parameters()
    adam = AdamState.zeros(params)
    rng = np.random.default_rng(seed)
    iteration = 0
    next_batch = 0
    best_val = math.inf
    memory: Optional[MemoryState] = None

    if resume is not None:
        cp = load_checkpoint(resume)
        if vocab_hash and cp.vocab_hash and cp.vocab_hash != vocab_hash:
            raise CheckpointError("检查点的词表指纹与当前词表不一致")
        model.load_state_dict(cp.params)
        adam = cp.adam
        rng.bit_generator.state = cp.rng_state
        iteration, next_batch, best_val = cp.iteration, cp.next_batch, cp.best_val_loss
        if cp.memory:
            memory = MemoryState.from_arrays(cp.memory)
        print(f"✅ 从检查点恢复: {resume}（已完成 {iteration} 次迭代）")

    def snapshot() -> Checkpoint:
        return Checkpoint(
            model_config=model.config, params={k: v.copy() for k, v in model.state_dict().items()},
            adam=AdamState(m=dict(adam.m), v=dict(adam.v), t=adam.t,
                           beta1=adam.beta1, beta2=adam.beta2, eps=adam.eps),
            iteration=iteration, rng_state=rng.bit_generator.state, vocab_hash=vocab_hash,
            memory=memory.arrays() if memory is not None else {}, next_batch=next_batch,
            best_val_loss=best_val, run_config=dict(run_config or {}),
        )

    last_loss = math.nan
    target = sched.total_iters if stop_after is None else min(stop_after, sched.total_iters)
    with MetricsLog(out_dir / "metrics.csv", config_lines, append=resume is not None) as metrics:
        progress = tqdm(total=target, initial=min(iteration, target), desc="训练",
                        disable=not show_progress, unit="iter")
        while iteration < target:
            batch = train_batches[next_batch]
            if memory is None or batch.segment_index == 0:
                memory = model.initial_memory(batch.inputs.shape[0])
            lr = lr_at(iteration, sched)
            start = time.perf_counter()
            logits, memory = model.forward(batch.inputs, memory, training=True, rng=rng)
            loss = cross_entropy(logits, batch.targets)
            last_loss = loss.item()
            if not math.isfinite(last_loss):
                raise NumericError(f"第 {iteration} 次迭代 loss 非有限: {last_loss}")
            tc.backward(loss, params)
            grads, grad_norm = tc.clip_global_norm(params, clip)
            adam_step(params, grads, adam, lr)
            for p in params:
                p.zero_grad()
            seconds = time.perf_counter() - start
            epoch = iteration // sched.epoch_iters + 1
            metrics.append(iteration, epoch, "train", last_loss, lr, grad_norm, seconds)
            iteration += 1
            next_batch = (next_batch + 1) % len(train_batches)
            progress.update(1)
            progress.set_postfix(loss=f"{last_loss:.4f}", lr=f"{lr:.2e}")

            if iteration % sched.epoch_iters == 0:
                if valid_batches:
                    start = time.perf_counter()
                    val_loss, _ = stream_loss(model, valid_batches)
                    metrics.append(iteration, epoch, "validation", val_loss, lr, None,
                                   time.perf_counter() - start)
                    if val_loss < best_val:
                        best_val = val_loss
                        save_checkpoint(snapshot(), best_path)
                    progress.write(f"  epoch {epoch}: 验证 loss {val_loss:.4f}（bpc {val_loss / math.log(2):.4f}）")
                save_checkpoint(snapshot(), last_path)
        progress.close()

    if iteration % sched.epoch_iters != 0 or not last_path.exists():
        save_checkpoint(snapshot(), last_path)
    if not best_path.exists():
        save_checkpoint(snapshot(), best_path)
    return TrainResult(iterations=iteration, final_train_loss=last_loss, best_val_loss=best_val,
                       last_checkpoint=last_path, best_checkpoint=best_path,
                       metrics_path=out_dir / "metrics.csv")
