# -*- coding: utf-8 -*-
"""
实验结果导出为 Excel 工作簿
三张表：summary（各模型多种子测试结果）、timing（归一化训练耗时）、curves（最佳种子的验证曲线）
"""

import argparse
import csv
import os
from pathlib import Path
from typing import Dict, List, Sequence

from openpyxl import Workbook, load_workbook
from openpyxl.styles import Font
from openpyxl.worksheet.worksheet import Worksheet

SHEET_COLUMNS = {
    "summary": ["模型", "分词", "运行次数", "参数量", "BPC均值", "BPC标准差", "困惑度均值", "困惑度标准差"],
    "timing": ["模型", "层数", "参数量", "单次迭代中位耗时(秒)", "归一化耗时"],
    "curves": ["模型", "epoch", "iter", "bpc", "perplexity"],
}

# CSV 列名 → 表格列
CSV_FIELDS = {
    "summary": ["model", "kind", "runs", "parameters", "bpc_mean", "bpc_std", "perplexity_mean", "perplexity_std"],
    "timing": ["model", "depth", "parameters", "median_seconds", "normalized"],
    "curves": ["model", "epoch", "iter", "bpc", "perplexity"],
}


def _coerce(value: str):
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value


def load_csv_rows(path, sheet: str) -> List[list]:
    """读取 evaluation 写出的 CSV，按表格列顺序返回数值化后的行"""
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        missing = [name for name in CSV_FIELDS[sheet] if name not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path} 缺少列: {', '.join(missing)}")
        return [[_coerce(row[name]) for name in CSV_FIELDS[sheet]] for row in reader]


def fill_sheet(ws: Worksheet, columns: Sequence[str], rows: Sequence[Sequence]) -> None:
    """写表头（加粗）与数据行"""
    for col, name in enumerate(columns, start=1):
        ws.cell(row=1, column=col, value=name).font = Font(bold=True)
        ws.column_dimensions[ws.cell(row=1, column=col).column_letter].width = max(12, len(name) * 2)
    for r, values in enumerate(rows, start=2):
        for col, value in enumerate(values, start=1):
            ws.cell(row=r, column=col, value=value)


def export_results_workbook(tables: Dict[str, Sequence[Sequence]], excel_filename) -> Path:
    """
    把实验结果写入一个 .xlsx 文件，每类结果一张表

    Args:
        tables: {"summary" | "timing" | "curves": 行列表}，缺少的表不创建
        excel_filename: 输出路径；已存在时覆盖同名表、保留其他表

    Returns:
        工作簿路径
    """
    excel_filename = Path(excel_filename)
    excel_filename.parent.mkdir(parents=True, exist_ok=True)
    if excel_filename.exists():
        wb = load_workbook(excel_filename)
    else:
        wb = Workbook()
        wb.remove(wb.active)
    for sheet, rows in tables.items():
        if sheet not in SHEET_COLUMNS:
            raise ValueError(f"未知的表: {sheet}")
        if sheet in wb.sheetnames:
            wb.remove(wb[sheet])
        fill_sheet(wb.create_sheet(sheet), SHEET_COLUMNS[sheet], rows)
    wb.save(excel_filename)
    print(f"✅ 已写入工作簿: {excel_filename}")
    return excel_filename


def main():
    """主函数"""
    parser = argparse.ArgumentParser(
        description="把实验结果 CSV 合并导出为 Excel 工作簿",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
    使用示例:
      # 导出 experiment 子命令生成的结果
      python report_workbook.py runs/experiment --output runs/experiment/results.xlsx
            """
    )
    parser.add_argument("result_dir", help="包含 summary.csv / timing.csv / curves.csv 的目录")
    parser.add_argument("--output", help="输出工作簿路径（默认 result_dir/results.xlsx）")
    args = parser.parse_args()

    tables = {}
    for sheet in SHEET_COLUMNS:
        path = os.path.join(args.result_dir, f"{sheet}.csv")
        if os.path.exists(path):
            tables[sheet] = load_csv_rows(path, sheet)
        else:
            print(f"未找到文件：{path}")
    if not tables:
        print("❌ 没有可导出的结果")
        return 2
    export_results_workbook(tables, args.output or os.path.join(args.result_dir, "results.xlsx"))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
