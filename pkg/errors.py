# -*- coding: utf-8 -*-
"""
异常定义
所有模块抛出的错误都归入以下几类，命令行按类别映射为退出码
"""


class CodeLMError(Exception):
    """本项目所有错误的基类"""
    exit_code = 1


class UsageError(CodeLMError, ValueError):
    """命令行用法错误（未知参数、缺少子命令等）"""
    exit_code = 1


class ConfigError(CodeLMError, ValueError):
    """配置错误：未知配置项、取值非法、超参数越界"""
    exit_code = 1


class DataError(CodeLMError, ValueError):
    """数据错误：语料缺失、文件损坏、数据量不足"""
    exit_code = 2


class VocabularyError(DataError):
    """词表错误：id 越界、词表文件损坏、词表与检查点不匹配"""


class CheckpointError(DataError):
    """检查点错误：magic/版本不符、文件被截断"""


class NumericError(CodeLMError, ArithmeticError):
    """数值错误：出现 NaN/Inf 等"""
    exit_code = 3


class ShapeError(NumericError, ValueError):
    """张量维度不匹配"""


class DegenerateSliceError(NumericError):
    """softmax 的某个切片全部被屏蔽"""


def exit_code_for(error: BaseException) -> int:
    """
    根据异常类型返回命令行退出码

    Args:
        error: 捕获到的异常

    Returns:
        退出码（1 用法/配置错误，2 数据错误，3 数值错误）
    """
    if isinstance(error, CodeLMError):
        return error.exit_code
    return 1
