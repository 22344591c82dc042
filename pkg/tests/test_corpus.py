"""
语料处理测试：读取、划分、按行去重、划分清单、token 流与片段批次
"""

import numpy as np
import pytest

from conftest import write_corpus
from corpus import (DatasetSplit, ManifestRecord, SourceFile, build_line_index, build_token_stream,
                    dedup_filter, fit_batch_size, line_overlap_ratio, load_source_dir, read_split_manifest,
                    segment_stream, split_corpus, write_split_manifest)
from errors import DataError
from tokenizer import build_char_vocab


def make_files(count):
    return [SourceFile(path=f"f{i:03d}.py", text=f"x_{i} = {i}\nprint(x_{i})\n") for i in range(count)]


def lines_file(path, lines):
    return SourceFile(path=path, text="\n".join(lines) + "\n")


TRAIN_LINES = [f"shared_line_{i} = {i}" for i in range(10)]


class TestLoad:
    """目录扫描"""

    def test_recursive_sorted_posix_paths(self, corpus_dir):
        files = load_source_dir(corpus_dir)
        paths = [f.path for f in files]
        assert len(files) == 20
        assert paths == sorted(paths)
        assert "pkg/module_00.py" in paths

    def test_extension_filter(self, corpus_dir):
        (corpus_dir / "notes.txt").write_text("not code\n", encoding="utf-8")
        assert all(f.path.endswith(".py") for f in load_source_dir(corpus_dir, ["py"]))
        assert [f.path for f in load_source_dir(corpus_dir, [".txt"])] == ["notes.txt"]

    def test_missing_or_empty(self, tmp_path):
        with pytest.raises(DataError):
            load_source_dir(tmp_path / "missing")
        (tmp_path / "empty").mkdir()
        with pytest.raises(DataError):
            load_source_dir(tmp_path / "empty")

    def test_lines_keep_trailing_newline(self):
        f = SourceFile("a.py", "a\n\nb\n")
        assert f.lines == ["a", "", "b"]
        assert "\n".join(f.lines) + ("\n" if f.trailing_newline else "") == f.text


class TestSplit:
    """训练/验证/测试划分"""

    def test_counts(self):
        split = split_corpus(make_files(100), seed=3)
        assert (len(split.train), len(split.validation), len(split.test)) == (80, 10, 10)

    def test_same_seed_same_split(self):
        a = split_corpus(make_files(40), seed=7)
        b = split_corpus(make_files(40), seed=7)
        assert [f.path for f in a.test] == [f.path for f in b.test]
        assert [f.path for f in a.train] == [f.path for f in b.train]

    def test_partition(self):
        split = split_corpus(make_files(37), seed=1)
        names = [f.path for f in split.train + split.validation + split.test]
        assert sorted(names) == sorted(f.path for f in make_files(37))

    def test_exact_duplicates_kept_once(self):
        files = make_files(20) + [SourceFile("zz_copy.py", make_files(20)[5].text)]
        split = split_corpus(files, seed=0)
        survivors = split.train + split.validation + split.test
        assert len(survivors) == 20
        assert "zz_copy.py" not in [f.path for f in survivors]
        assert ManifestRecord("duplicate", "zz_copy.py", files[5].content_hash, None, "duplicate") in split.records

    def test_too_few_files(self):
        with pytest.raises(DataError):
            split_corpus(make_files(9))
        dup = make_files(9) + [SourceFile("copy.py", make_files(9)[0].text)]
        with pytest.raises(DataError):
            split_corpus(dup)

    def test_bad_ratios(self):
        with pytest.raises(DataError):
            split_corpus(make_files(20), ratios=(0.5, 0.5, 0.5))


class TestOverlap:
    """按行重合率"""

    def test_ratios(self):
        index = build_line_index([lines_file("train.py", TRAIN_LINES)])
        assert line_overlap_ratio(lines_file("a.py", ["other = 1", "more = 2"]), index) == 0.0
        assert line_overlap_ratio(lines_file("b.py", TRAIN_LINES), index) == 1.0
        candidate = lines_file("c.py", TRAIN_LINES[:3] + [f"fresh_{i} = 0" for i in range(7)])
        assert line_overlap_ratio(candidate, index) == pytest.approx(0.3)

    def test_blank_lines_ignored(self):
        index = build_line_index([lines_file("train.py", TRAIN_LINES)])
        assert line_overlap_ratio(SourceFile("blank.py", "\n   \n\n"), index) == 0.0
        padded = lines_file("p.py", ["", "  " + TRAIN_LINES[0] + "  ", "", "fresh = 1"])
        assert line_overlap_ratio(padded, index) == 0.5

    @pytest.mark.parametrize("shared, total, removed", [(3, 10, True), (1, 5, False), (1, 4, False)])
    def test_threshold_is_strict(self, shared, total, removed):
        candidate = lines_file("valid.py", TRAIN_LINES[:shared] + [f"own_{i} = 1" for i in range(total - shared)])
        split = DatasetSplit(train=[lines_file("train.py", TRAIN_LINES)], validation=[candidate], test=[], seed=0)
        filtered = dedup_filter(split, threshold=0.25, verbose=False)
        assert (filtered.validation == []) is removed
        record = [r for r in filtered.records if r.path == "valid.py"][0]
        assert record.status == ("removed" if removed else "kept")
        assert record.overlap_ratio == pytest.approx(shared / total)

    def test_survivors_under_threshold(self, corpus_dir):
        split = dedup_filter(split_corpus(load_source_dir(corpus_dir), seed=0), verbose=False)
        index = build_line_index(split.train)
        for f in split.validation + split.test:
            assert line_overlap_ratio(f, index) <= 0.25

    def test_train_untouched(self):
        split = DatasetSplit(train=[lines_file("train.py", TRAIN_LINES)],
                             validation=[lines_file("v.py", TRAIN_LINES)], test=[], seed=0)
        filtered = dedup_filter(split, verbose=False)
        assert filtered.train == split.train
        assert filtered.validation == []


class TestManifest:
    """划分清单"""

    def test_roundtrip(self, corpus_dir, tmp_path):
        split = dedup_filter(split_corpus(load_source_dir(corpus_dir), seed=2), verbose=False)
        path = tmp_path / "split_manifest.tsv"
        write_split_manifest(split, path, corpus_dir)
        loaded = read_split_manifest(path)
        assert loaded.seed == 2
        assert loaded.threshold == 0.25
        for name in ("train", "validation", "test"):
            assert loaded.files_of(name) == split.files_of(name)

    def test_hash_mismatch(self, corpus_dir, tmp_path):
        split = split_corpus(load_source_dir(corpus_dir), seed=0)
        path = tmp_path / "split_manifest.tsv"
        write_split_manifest(split, path, corpus_dir)
        (corpus_dir / split.train[0].path).write_text("changed = True\n", encoding="utf-8")
        with pytest.raises(DataError):
            read_split_manifest(path)

    def test_missing_file(self, corpus_dir, tmp_path):
        split = split_corpus(load_source_dir(corpus_dir), seed=0)
        path = tmp_path / "split_manifest.tsv"
        write_split_manifest(split, path, corpus_dir)
        (corpus_dir / split.test[0].path).unlink()
        with pytest.raises(DataError):
            read_split_manifest(path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError):
            read_split_manifest(tmp_path / "none.tsv")


class TestSegments:
    """token 流与片段批次"""

    def test_single_segment(self):
        batches = segment_stream(np.arange(512), seq_len=256, batch_size=1)
        assert len(batches) == 1
        np.testing.assert_array_equal(batches[0].inputs[0], np.arange(256))
        np.testing.assert_array_equal(batches[0].targets[0], np.arange(1, 257))

    def test_floor_arithmetic(self):
        batches = segment_stream(np.arange(1000), seq_len=100, batch_size=2)
        assert len(batches) == 4
        used = sum(b.inputs.size for b in batches)
        assert 1000 - used == 200

    def test_contiguity(self):
        ids = np.arange(1000)
        batches = segment_stream(ids, seq_len=30, batch_size=3)
        per_stream = 1000 // 3
        for row in range(3):
            joined = np.concatenate([b.inputs[row] for b in batches])
            np.testing.assert_array_equal(joined, ids[row * per_stream:row * per_stream + len(joined)])
        for prev, nxt in zip(batches, batches[1:]):
            np.testing.assert_array_equal(prev.targets[:, -1], nxt.inputs[:, 0])
        assert batches[0].is_stream_start.all() and not batches[1].is_stream_start.any()
        assert [b.segment_index for b in batches] == list(range(len(batches)))

    def test_too_short(self):
        with pytest.raises(DataError):
            segment_stream(np.arange(10), seq_len=10, batch_size=1)

    def test_fit_batch_size(self):
        assert fit_batch_size(1000, 99, 32) == 10
        assert fit_batch_size(50, 99, 32) == 0
        assert fit_batch_size(10_000, 9, 4) == 4

    def test_token_stream_boundaries(self):
        files = [SourceFile("b.py", "bb"), SourceFile("a.py", "a")]
        vocab = build_char_vocab(["ab\n"])
        stream = build_token_stream(files, vocab)
        assert stream.source_boundaries == [0, 2]
        assert stream.ids.tolist() == [vocab.id_of(c) for c in "a\nbb"]

    def test_bundled_style_corpus_streams(self, tmp_path):
        root = write_corpus(tmp_path / "c", count=12, repeat=2)
        files = load_source_dir(root)
        vocab = build_char_vocab([f.text for f in files])
        stream = build_token_stream(files, vocab)
        assert len(stream) == sum(len(f.text) for f in files) + len(files) - 1
