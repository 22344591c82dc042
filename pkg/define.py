"""
模型与训练数据结构定义
"""

from dataclasses import asdict, dataclass
from typing import Optional

from errors import ConfigError

ARCHITECTURES = ("txl", "lstm", "gru")
POS_ENCODINGS = ("relative", "absolute")


@dataclass
class ModelConfig:
    """模型结构超参数"""
    arch: str = "txl"  # txl / lstm / gru
    depth: int = 4
    hidden: int = 512
    heads: int = 8
    ffd_inner: int = 0  # 0 表示 4 × hidden
    vocab_size: int = 1000
    seq_len: int = 256
    mem_len: int = 256  # 前一个片段的长度；0 等价于普通 Transformer
    dropout: float = 0.1
    pos_encoding: str = "relative"  # relative / absolute
    init_std: float = 0.02

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ConfigError(f"未知的模型结构: {self.arch}（可选 {', '.join(ARCHITECTURES)}）")
        if self.pos_encoding not in POS_ENCODINGS:
            raise ConfigError(f"未知的位置编码: {self.pos_encoding}")
        if self.ffd_inner == 0:
            self.ffd_inner = 4 * self.hidden
        for name in ("depth", "hidden", "heads", "ffd_inner", "vocab_size", "seq_len"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} 必须为正整数: {getattr(self, name)}")
        if self.mem_len < 0:
            raise ConfigError(f"mem_len 不能为负: {self.mem_len}")
        if self.hidden % self.heads != 0:
            raise ConfigError(f"hidden ({self.hidden}) 必须能被 heads ({self.heads}) 整除")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout 必须在 [0, 1) 内: {self.dropout}")
        if self.init_std <= 0:
            raise ConfigError(f"init_std 必须为正: {self.init_std}")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    @property
    def label(self) -> str:
        """表格中使用的模型名，例如 TXL-4、GRU-4"""
        return f"{self.arch.upper()}-{self.depth}"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainSchedule:
    """学习率计划：线性预热后半余弦衰减回下限"""
    lr_floor: float = 1e-6
    lr_peak: float = 5e-4
    warmup_iters: int = 5120
    total_iters: int = 25600  # 50 epochs × 512
    epoch_iters: int = 512

    def __post_init__(self):
        if not 0 <= self.warmup_iters < self.total_iters:
            raise ConfigError(f"warmup_iters ({self.warmup_iters}) 必须小于 total_iters ({self.total_iters})")
        if not 0 < self.lr_floor < self.lr_peak:
            raise ConfigError(f"需要 0 < lr_floor ({self.lr_floor}) < lr_peak ({self.lr_peak})")
        if self.epoch_iters <= 0:
            raise ConfigError(f"epoch_iters 必须为正: {self.epoch_iters}")

    @property
    def epochs(self) -> int:
        return self.total_iters // self.epoch_iters


@dataclass
class EvalReport:
    """测试集评估结果；bpc 与 perplexity 都由 loss 精确推出"""
    model: str
    depth: int
    kind: str  # character / subword
    token_count: int
    loss: float
    bpc: float
    perplexity: float
    seconds: float
    tokens_per_second: float
    seed: Optional[int] = None
    parameters: int = 0
    checkpoint: str = ""

    @property
    def headline(self) -> float:
        """字符级报告 BPC，子词级报告困惑度"""
        return self.bpc if self.kind == "character" else self.perplexity


# 运行配置默认值（完整规模设置）；配置文件与命令行参数在此基础上覆盖
DEFAULT_RUN_CONFIG = {
    "seed": 0,
    "arch": "txl",
    "depth": 4,
    "hidden": 512,
    "heads": 8,
    "ffd_inner": 0,
    "seq_len": 256,
    "mem_len": 256,
    "pos_encoding": "relative",
    "init_std": 0.02,
    "vocab": "char",
    "vocab_size": 1000,
    "epochs": 50,
    "iters_per_epoch": 512,
    "lr_peak": 5e-4,
    "lr_floor": 1e-6,
    "warmup": 5120,
    "clip": 0.1,
    "dropout": 0.1,
    "batch": 32,
    "corpus_dir": "data/corpus",
    "out_dir": "runs/default",
    "threshold": 0.25,
    "extensions": ".py",
    "precision": "float32",
}

# 桌面规模实验设置（小语料上比较四个模型的排序）
DESK_SCALE_OVERRIDES = {
    "hidden": 128,
    "heads": 4,
    "seq_len": 128,
    "mem_len": 128,
    "batch": 16,
    "epochs": 4,
    "iters_per_epoch": 500,
    "warmup": 400,
}

# 实验网格：(arch, depth)
EXPERIMENT_MODELS = (("lstm", 4), ("gru", 4), ("txl", 4), ("txl", 8))
EXPERIMENT_SEEDS = (0, 1, 2)


def create_model_config(run_config: dict, vocab_size: int) -> ModelConfig:
    """
    由运行配置创建模型配置

    Args:
        run_config: 解析后的运行配置
        vocab_size: 实际词表大小

    Returns:
        ModelConfig
    """
    return ModelConfig(
        arch=run_config["arch"],
        depth=int(run_config["depth"]),
        hidden=int(run_config["hidden"]),
        heads=int(run_config["heads"]),
        ffd_inner=int(run_config["ffd_inner"]),
        vocab_size=vocab_size,
        seq_len=int(run_config["seq_len"]),
        mem_len=int(run_config["mem_len"]),
        dropout=float(run_config["dropout"]),
        pos_encoding=run_config["pos_encoding"],
        init_std=float(run_config["init_std"]),
    )


def create_train_schedule(run_config: dict) -> TrainSchedule:
    """由运行配置创建学习率计划（total = epochs × iters_per_epoch）"""
    epoch_iters = int(run_config["iters_per_epoch"])
    return TrainSchedule(
        lr_floor=float(run_config["lr_floor"]),
        lr_peak=float(run_config["lr_peak"]),
        warmup_iters=int(run_config["warmup"]),
        total_iters=int(run_config["epochs"]) * epoch_iters,
        epoch_iters=epoch_iters,
    )
