# -*- coding: utf-8 -*-
"""
张量与自动求导核心
基于 numpy 的稠密张量，动态记录计算图，反向模式自动求导。
提供模型需要的全部原语：矩阵乘、softmax、层归一化、GELU、dropout、全局范数裁剪。
"""

import contextlib
import math
from typing import Callable, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import erf

from errors import ConfigError, DegenerateSliceError, NumericError, ShapeError

ArrayLike = Union[np.ndarray, float, int, Sequence]

_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True

LAYER_NORM_EPS = 1e-5


# ==========================================
# 精度与求导开关
# ==========================================

def get_default_dtype():
    """当前默认浮点精度（float32 训练，float64 梯度检查）"""
    return _DEFAULT_DTYPE


def set_default_dtype(dtype) -> None:
    """
    设置默认浮点精度

    Args:
        dtype: np.float32 / np.float64 或对应字符串
    """
    global _DEFAULT_DTYPE
    resolved = np.dtype(dtype)
    if resolved not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ConfigError(f"不支持的精度: {dtype}（仅支持 float32 / float64）")
    _DEFAULT_DTYPE = resolved.type


@contextlib.contextmanager
def default_dtype(dtype) -> Iterator[None]:
    """临时切换默认精度的上下文管理器"""
    previous = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """在此上下文中不记录计算图（验证、评估、采样使用）"""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


# ==========================================
# Tensor / Parameter
# ==========================================

class Tensor:
    """
    n 维张量，可选梯度

    data 为行优先的 numpy 数组；requires_grad 为真时参与反向传播。
    中间结果通过 _parents 与 _backward_fn 记录计算图，反向传播结束后释放。
    """

    def __init__(self, data: ArrayLike, requires_grad: bool = False,
                 _parents: Tuple["Tensor", ...] = (),
                 _backward_fn: Optional[Callable[[np.ndarray], None]] = None,
                 op: str = ""):
        if isinstance(data, Tensor):
            data = data.data
        if isinstance(data, np.floating):
            data = np.asarray(data)
        if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
            self.data = data
        else:
            self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward_fn = _backward_fn
        self.op = op

    # ---------- 基本属性 ----------
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        """前向值不变、阻断梯度的副本（stop-gradient）"""
        return Tensor(self.data, requires_grad=False, op="detach")

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # ---------- 运算符 ----------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)


class Parameter(Tensor):
    """可训练变量：requires_grad 恒为真，带唯一名称（层号 + 角色）"""

    def __init__(self, data: ArrayLike, name: str):
        super().__init__(np.array(data, dtype=_DEFAULT_DTYPE) if not isinstance(data, np.ndarray)
                         else data, requires_grad=True, op="param")
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape}, dtype={self.dtype})"


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    """把标量/数组包装为常量张量"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def stop_gradient(x: Union[Tensor, ArrayLike]) -> Tensor:
    """SG(x)：前向恒等，反向阻断所有梯度"""
    return as_tensor(x).detach()


def _make(data: np.ndarray, parents: Tuple[Tensor, ...], backward_fn, op: str) -> Tensor:
    """创建运算结果；只有存在需要梯度的输入且开启求导时才记录计算图"""
    needs_grad = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    if not needs_grad:
        return Tensor(data, requires_grad=False, op=op)
    return Tensor(data, requires_grad=True, _parents=parents, _backward_fn=backward_fn, op=op)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """把广播后的梯度求和还原到原始形状"""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _accumulate(t: Tensor, grad: np.ndarray) -> None:
    if not t.requires_grad:
        return
    grad = _unbroadcast(grad, t.shape)
    if t.grad is None:
        t.grad = grad
    else:
        t.grad = t.grad + grad


# ==========================================
# 逐元素运算
# ==========================================

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _make(a.data + b.data, (a, b), backward_fn, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _make(a.data - b.data, (a, b), backward_fn, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _make(a.data * b.data, (a, b), backward_fn, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        _accumulate(a, g / b.data)
        _accumulate(b, -g * a.data / (b.data * b.data))

    return _make(a.data / b.data, (a, b), backward_fn, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: _accumulate(a, -g), "neg")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: _accumulate(a, g * out), "exp")


def log(a, floor: Optional[float] = None) -> Tensor:
    """
    自然对数；floor 不为空时先把输入截断到 floor（截断处梯度为 0）
    """
    a = as_tensor(a)
    x = a.data if floor is None else np.maximum(a.data, floor)

    def backward_fn(g):
        grad = g / x
        if floor is not None:
            grad = np.where(a.data >= floor, grad, 0.0)
        _accumulate(a, grad)

    return _make(np.log(x), (a,), backward_fn, "log")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: _accumulate(a, g * (1.0 - out * out)), "tanh")


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    positive = x >= 0
    z = np.exp(np.where(positive, -x, x))
    return np.where(positive, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.dtype, copy=False)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _stable_sigmoid(a.data)
    return _make(out, (a,), lambda g: _accumulate(a, g * out * (1.0 - out)), "sigmoid")


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x) -> Tensor:
    """
    GELU(x) = x·Φ(x)，Φ 为标准正态分布函数（精确 erf 形式，非 tanh 近似）
    """
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = x.data * cdf

    def backward_fn(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        _accumulate(x, g * (cdf + x.data * pdf))

    return _make(out.astype(x.dtype, copy=False), (x,), backward_fn, "gelu")


# ==========================================
# 形状运算
# ==========================================

def matmul(a, b) -> Tensor:
    """
    矩阵乘（支持批量维广播，与 np.matmul 一致）

    Raises:
        ShapeError: 内维不一致
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul 维度不匹配: {a.shape} 与 {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"matmul 维度不匹配: {a.shape} 与 {b.shape}") from e

    def backward_fn(g):
        if a.requires_grad:
            _accumulate(a, np.matmul(g, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            _accumulate(b, np.matmul(np.swapaxes(a.data, -1, -2), g))

    return _make(out, (a, b), backward_fn, "matmul")


def reshape(a, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: _accumulate(a, g.reshape(a.shape)), "reshape")


def transpose(a, axes: Optional[Tuple[int, ...]] = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,),
                 lambda g: _accumulate(a, np.transpose(g, inverse)), "transpose")


def swapaxes(a, axis1: int, axis2: int) -> Tensor:
    a = as_tensor(a)
    return _make(np.swapaxes(a.data, axis1, axis2), (a,),
                 lambda g: _accumulate(a, np.swapaxes(g, axis1, axis2)), "swapaxes")


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, np.integer)) or i is None or i is Ellipsis for i in items)


def getitem(a, index) -> Tensor:
    a = as_tensor(a)

    def backward_fn(g):
        full = np.zeros_like(a.data)
        if _is_basic_index(index):
            full[index] += g
        else:
            np.add.at(full, index, g)
        _accumulate(a, full)

    return _make(a.data[index], (a,), backward_fn, "getitem")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    """沿 axis 拼接"""
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            _accumulate(t, piece)

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward_fn, "concat")


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward_fn(g):
        for i, t in enumerate(tensors):
            _accumulate(t, np.take(g, i, axis=axis))

    return _make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), backward_fn, "stack")


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward_fn, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return sum_(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    """按 id 取嵌入矩阵的行"""
    ids = np.asarray(ids)

    def backward_fn(g):
        full = np.zeros_like(weight.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, weight.shape[-1]))
        _accumulate(weight, full)

    return _make(weight.data[ids], (weight,), backward_fn, "embedding")


def take_along_last(a, index: np.ndarray) -> Tensor:
    """沿最后一维按 index 取值（index 形状与 a 除最后一维外一致，同一行内不重复）"""
    a = as_tensor(a)
    index = np.asarray(index)

    def backward_fn(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, index, g, axis=-1)
        _accumulate(a, full)

    return _make(np.take_along_axis(a.data, index, axis=-1), (a,), backward_fn, "take_along_last")


# ==========================================
# 归一化与概率
# ==========================================

def softmax(x, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    数值稳定的 softmax（先减去切片最大值）

    Args:
        x: 输入
        axis: 归一化的轴
        mask: 可选布尔数组（可广播），False 的位置视为 -∞，输出恰为 0

    Raises:
        DegenerateSliceError: 某切片全部为 -∞（输入本身或被掩码屏蔽）
    """
    x = as_tensor(x)
    scores = x.data
    if mask is not None:
        scores = np.where(np.asarray(mask, dtype=bool), scores, -np.inf)
    if np.any(np.all(np.isneginf(scores), axis=axis)):
        raise DegenerateSliceError("softmax 存在全部被屏蔽的切片")
    shifted = scores - np.max(scores, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = (e / np.sum(e, axis=axis, keepdims=True)).astype(x.dtype, copy=False)

    def backward_fn(g):
        _accumulate(x, out * (g - np.sum(g * out, axis=axis, keepdims=True)))

    return _make(out, (x,), backward_fn, "softmax")


def layer_norm(x, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """
    最后一维上的层归一化：(x - mean) / sqrt(var + eps) * gain + bias
    """
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if gain.shape[-1] != x.shape[-1] or bias.shape[-1] != x.shape[-1]:
        raise ShapeError(f"layer_norm 参数维度 {gain.shape}/{bias.shape} 与输入 {x.shape} 不一致")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv_std
    out = x_hat * gain.data + bias.data

    def backward_fn(g):
        if gain.requires_grad:
            _accumulate(gain, (g * x_hat).reshape(-1, x.shape[-1]).sum(axis=0))
        if bias.requires_grad:
            _accumulate(bias, g.reshape(-1, x.shape[-1]).sum(axis=0))
        if x.requires_grad:
            d_hat = g * gain.data
            _accumulate(x, inv_std * (d_hat - d_hat.mean(axis=-1, keepdims=True)
                                      - x_hat * (d_hat * x_hat).mean(axis=-1, keepdims=True)))

    return _make(out, (x, gain, bias), backward_fn, "layer_norm")


def dropout(x, rate: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """
    反向缩放 dropout：训练时以概率 rate 置零，幸存元素乘 1/(1-rate)；推理时恒等

    Raises:
        ConfigError: rate 不在 [0, 1)
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout 比例必须在 [0, 1) 内: {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("训练模式下 dropout 需要显式的随机数生成器")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return _make(x.data * keep, (x,), lambda g: _accumulate(x, g * keep), "dropout")


def softmax_cross_entropy(logits, targets: np.ndarray) -> Tensor:
    """
    softmax 与交叉熵融合：对所有位置取 -log softmax(logits)[target] 的均值
    梯度为 (y - z) / N
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    vocab = logits.shape[-1]
    flat = logits.data.reshape(-1, vocab)
    flat_targets = targets.reshape(-1)
    if flat.shape[0] != flat_targets.shape[0]:
        raise ShapeError(f"logits {logits.shape} 与 targets {targets.shape} 不一致")
    shifted = flat - flat.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - log_z
    rows = np.arange(flat.shape[0])
    count = flat.shape[0]
    loss = -log_probs[rows, flat_targets].sum() / count

    def backward_fn(g):
        grad = np.exp(log_probs)
        grad[rows, flat_targets] -= 1.0
        _accumulate(logits, (grad * (g / count)).reshape(logits.shape))

    return _make(np.asarray(loss, dtype=logits.dtype), (logits,), backward_fn, "softmax_cross_entropy")


# ==========================================
# 反向传播
# ==========================================

def _topological_order(root: Tensor) -> List[Tensor]:
    """迭代式后序 DFS，避免 RNN 展开后递归过深"""
    order: List[Tensor] = []
    visited = set()
    stack_: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack_.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack_.append((parent, False))
    return order


def backward(loss: Tensor, parameters: Iterable[Parameter] = ()) -> None:
    """
    从标量 loss 反向传播，填充所有可达参数的 grad

    Args:
        loss: 标量损失
        parameters: 需要保证有梯度的参数；不在计算路径上的参数得到全零梯度

    Raises:
        ShapeError: loss 不是标量
        NumericError: loss 非有限
    """
    if loss.size != 1:
        raise ShapeError(f"backward 需要标量 loss，实际形状 {loss.shape}")
    if not np.all(np.isfinite(loss.data)):
        raise NumericError(f"loss 非有限: {loss.data}")
    if loss.requires_grad:
        order = _topological_order(loss)
        loss.grad = np.ones_like(loss.data)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)
        # 释放计算图
        for node in order:
            if node._parents:
                node._parents = ()
                node._backward_fn = None
                node.grad = None
    for p in parameters:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)


def clip_global_norm(parameters: Sequence[Parameter], max_norm: float = 0.1) -> Tuple[List[np.ndarray], float]:
    """
    全局梯度范数裁剪

    Args:
        parameters: 已有梯度的参数
        max_norm: 范数上限

    Returns:
        (裁剪后的梯度列表, 裁剪前的全局范数)
    """
    grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in parameters]
    total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads))
    if not math.isfinite(total):
        raise NumericError(f"梯度范数非有限: {total}")
    if total > max_norm:
        scale = max_norm / total
        grads = [g * g.dtype.type(scale) for g in grads]
        for p, g in zip(parameters, grads):
            p.grad = g
    return grads, total


def numerical_gradient(fn: Callable[[], float], array: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """
    中心差分数值梯度（就地扰动 array 后恢复），用于梯度检查

    Args:
        fn: 无参函数，返回当前标量损失
        array: 被扰动的参数数组（float64）
        step: 差分步长

    Returns:
        与 array 同形状的数值梯度
    """
    grad = np.zeros_like(array)
    it = np.nditer(array, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        original = array[idx]
        array[idx] = original + step
        plus = fn()
        array[idx] = original - step
        minus = fn()
        array[idx] = original
        grad[idx] = (plus - minus) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """整块梯度的相对误差 ‖a-n‖ / max(‖a‖+‖n‖, 1e-12)"""
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    return float(diff / scale)
