"""
Excel 工作簿导出测试
"""

import sys

import pytest
from openpyxl import load_workbook

import report_workbook
from report_workbook import SHEET_COLUMNS, export_results_workbook, load_csv_rows

SUMMARY_ROW = ["TXL-4", "character", 3, 1234, 1.2, 0.1, 2.3, 0.2]


class TestExport:
    """结果表写入"""

    def test_creates_sheets_with_headers(self, tmp_path):
        path = export_results_workbook({"summary": [SUMMARY_ROW]}, tmp_path / "out" / "results.xlsx")
        wb = load_workbook(path)
        assert wb.sheetnames == ["summary"]
        ws = wb["summary"]
        assert [c.value for c in ws[1]] == SHEET_COLUMNS["summary"]
        assert ws["A1"].font.bold
        assert [c.value for c in ws[2]] == SUMMARY_ROW

    def test_replaces_only_named_sheets(self, tmp_path):
        path = tmp_path / "results.xlsx"
        export_results_workbook({"summary": [SUMMARY_ROW], "timing": [["TXL-4", 4, 10, 0.5, 1.0]]}, path)
        export_results_workbook({"summary": [["GRU-4", "character", 1, 99, 2.0, 0.0, 4.0, 0.0]]}, path)
        wb = load_workbook(path)
        assert set(wb.sheetnames) == {"summary", "timing"}
        assert wb["summary"].max_row == 2
        assert wb["summary"]["A2"].value == "GRU-4"
        assert wb["timing"]["A2"].value == "TXL-4"

    def test_unknown_sheet(self, tmp_path):
        with pytest.raises(ValueError):
            export_results_workbook({"other": []}, tmp_path / "x.xlsx")


class TestCsv:
    """从结果 CSV 读取"""

    def test_load_rows(self, tmp_path):
        path = tmp_path / "curves.csv"
        path.write_text("model,epoch,iter,bpc,perplexity\nTXL-4,1,512,1.5,2.8\n", encoding="utf-8")
        assert load_csv_rows(path, "curves") == [["TXL-4", 1, 512, 1.5, 2.8]]

    def test_missing_column(self, tmp_path):
        path = tmp_path / "curves.csv"
        path.write_text("model,epoch\nTXL-4,1\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_csv_rows(path, "curves")

    def test_main(self, tmp_path, monkeypatch):
        (tmp_path / "timing.csv").write_text(
            "model,depth,parameters,median_seconds,normalized\nTXL-4,4,100,0.2,1.0\n", encoding="utf-8")
        monkeypatch.setattr(sys, "argv", ["report_workbook.py", str(tmp_path)])
        assert report_workbook.main() == 0
        assert load_workbook(tmp_path / "results.xlsx").sheetnames == ["timing"]

    def test_main_without_results(self, tmp_path, monkeypatch):
        monkeypatch.setattr(sys, "argv", ["report_workbook.py", str(tmp_path)])
        assert report_workbook.main() == 2
