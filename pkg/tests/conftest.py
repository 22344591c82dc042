"""
公共测试夹具：固定种子、小规模模型配置、临时语料目录
"""

import numpy as np
import pytest

import tensor_core as tc
from define import ModelConfig

# 每个非空行都带编号，不同文件之间没有相同的行
SNIPPETS = [
    "def add_{i}(a, b):\n    return a + b + {i}\n",
    "class Box{i}:\n    def __init__(self, size_{i}):\n        self.size = size_{i} * {i}\n",
    "for index in range({i}):\n    print(index, index * {i})\n",
    "values_{i} = [x ** 2 for x in range({i}) if x % 2 == 0]\n",
    "import os as os_{i}\n\npath_{i} = os_{i}.path.join('data', 'file_{i}.txt')\n",
]


@pytest.fixture
def rng():
    """固定种子的随机数生成器"""
    return np.random.default_rng(1234)


@pytest.fixture
def float64():
    """在双精度下运行（梯度检查）"""
    with tc.default_dtype(np.float64):
        yield


def tiny_config(**overrides) -> ModelConfig:
    base = dict(arch="txl", depth=2, hidden=8, heads=2, ffd_inner=16, vocab_size=11,
                seq_len=4, mem_len=4, dropout=0.0, init_std=0.3)
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def make_config():
    return tiny_config


def write_corpus(root, count: int = 20, repeat: int = 3):
    """生成 count 个内容各不相同的小 Python 文件"""
    root.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        body = "".join(SNIPPETS[(i + k) % len(SNIPPETS)].format(i=i * 7 + k) for k in range(repeat))
        sub = root / ("pkg" if i % 3 == 0 else "")
        sub.mkdir(parents=True, exist_ok=True)
        (sub / f"module_{i:02d}.py").write_text(body, encoding="utf-8")
    return root


@pytest.fixture
def corpus_dir(tmp_path):
    return write_corpus(tmp_path / "corpus")
