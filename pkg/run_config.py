# -*- coding: utf-8 -*-
"""
运行配置
默认值 ← 配置文件（每行 key = value，# 开头为注释）← 命令行参数，逐层覆盖。
"""

import os
from pathlib import Path
from typing import Dict, List, Optional

from define import DEFAULT_RUN_CONFIG
from errors import ConfigError

RUN_CONFIG_FILE = "run_config.txt"


def _normalize_key(key: str) -> str:
    return key.strip().replace("-", "_")


def _coerce(key: str, value, default):
    """按默认值的类型转换取值"""
    if isinstance(value, str):
        value = value.strip()
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            lowered = str(value).lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"配置项 {key} 的取值无效: {value!r}（需要 {type(default).__name__}）") from None
    return str(value)


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """
    解析 key = value 文本

    Raises:
        ConfigError: 行格式错误或出现未知配置项
    """
    values = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source} 第 {line_no} 行缺少 '=': {raw!r}")
        key = _normalize_key(key)
        if key not in DEFAULT_RUN_CONFIG:
            raise ConfigError(f"{source} 第 {line_no} 行: 未知配置项 {key}")
        values[key] = value.strip()
    return values


def load_run_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> dict:
    """
    加载运行配置

    Args:
        path: 配置文件路径（可选）
        overrides: 命令行覆盖项，值为 None 的项忽略

    Returns:
        含全部配置项的字典

    Raises:
        ConfigError: 配置文件不存在、未知配置项或取值无效
    """
    config = dict(DEFAULT_RUN_CONFIG)
    layers: List[Dict] = []
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"配置文件不存在: {path}")
        with open(path, "r", encoding="utf-8") as f:
            layers.append(parse_config_text(f.read(), source=str(path)))
    if overrides:
        layers.append({_normalize_key(k): v for k, v in overrides.items() if v is not None})
    for layer in layers:
        for key, value in layer.items():
            if key not in DEFAULT_RUN_CONFIG:
                raise ConfigError(f"未知配置项: {key}")
            config[key] = _coerce(key, value, DEFAULT_RUN_CONFIG[key])
    if config["vocab"] not in ("char", "bpe"):
        raise ConfigError(f"vocab 只能是 char 或 bpe: {config['vocab']}")
    if config["precision"] not in ("float32", "float64"):
        raise ConfigError(f"precision 只能是 float32 或 float64: {config['precision']}")
    if not 0.0 <= config["threshold"] <= 1.0:
        raise ConfigError(f"threshold 必须在 [0, 1] 内: {config['threshold']}")
    return config


def format_run_config(config: dict) -> List[str]:
    """渲染为 "# key = value" 行（写在指标 CSV 开头）"""
    return [f"# {key} = {config[key]}" for key in sorted(config)]


def save_run_config(config: dict, out_dir) -> Path:
    """把解析后的配置写到 out_dir/run_config.txt（可直接作为 --config 再次使用）"""
    path = Path(out_dir) / RUN_CONFIG_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{key} = {config[key]}\n" for key in sorted(config)), encoding="utf-8")
    return path


def extensions_of(config: dict) -> List[str]:
    """extensions 配置项以逗号分隔"""
    return [e.strip() for e in str(config["extensions"]).split(",") if e.strip()]


def run_paths(config: dict) -> Dict[str, Path]:
    """输出目录下的派生路径"""
    out = Path(config["out_dir"])
    return {
        "out_dir": out,
        "manifest": out / "split_manifest.tsv",
        "vocab": out / "vocab.txt",
        "checkpoints": out / "checkpoints",
        "last": out / "checkpoints" / "last.cxlm",
        "best": out / "checkpoints" / "best.cxlm",
        "metrics": out / "metrics.csv",
        "eval_reports": out / "eval_reports.csv",
        "bench": out / "bench.csv",
    }
