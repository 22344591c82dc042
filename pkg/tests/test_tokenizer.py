"""
分词测试：字符词表、BPE 训练、无损编解码与词表文件
"""

from pathlib import Path

import numpy as np
import pytest

from corpus import load_source_dir
from errors import DataError, VocabularyError
from tokenizer import (CHARACTER, PAD_ID, REPLACEMENT_CHAR, SPECIAL_TOKENS, SUBWORD, UNK_ID, Vocabulary,
                       build_char_vocab, build_vocab, decode, encode, pretokenize, train_bpe)

BUNDLED_CORPUS = Path(__file__).resolve().parent.parent / "data" / "corpus"
EXAMPLE = "print(x + 3 if x == 0)"
CODE = "def area(w, h):\n    # 矩形面积\n\treturn  w * h\n\n\nprint(area(3, 4))  \n"


class TestCharacterVocab:
    """字符级词表"""

    def test_specials_plus_alphabet(self):
        vocab = build_char_vocab(["aab"])
        assert vocab.tokens == SPECIAL_TOKENS + ("a", "b")
        assert vocab.kind == CHARACTER
        assert vocab.id_of("<pad>") == PAD_ID and vocab.id_of("<unk>") == UNK_ID

    def test_deterministic(self):
        assert build_char_vocab([CODE, "xyz"]) == build_char_vocab([CODE, "xyz"])

    def test_unknown_character(self):
        vocab = build_char_vocab(["abc"])
        stream = encode("abz", vocab)
        assert stream.ids.tolist() == [vocab.id_of("a"), vocab.id_of("b"), UNK_ID]
        assert decode(stream, vocab) == "ab" + REPLACEMENT_CHAR

    def test_roundtrip(self):
        vocab = build_char_vocab([CODE])
        assert decode(encode(CODE, vocab), vocab) == CODE

    def test_empty_corpus(self):
        with pytest.raises(DataError):
            build_char_vocab([])
        with pytest.raises(DataError):
            build_char_vocab([""])


class TestBPE:
    """BPE 训练与编码"""

    def test_single_merge(self):
        base = train_bpe(["abababab"], vocab_budget=0)
        assert base.merges == ()
        vocab = train_bpe(["abababab"], vocab_budget=base.size + 1)
        assert vocab.merges == (("a", "b"),)
        assert vocab.size == base.size + 1
        assert "ab" in vocab.tokens

    def test_budget_below_alphabet_means_no_merges(self):
        vocab = train_bpe([CODE], vocab_budget=5)
        assert vocab.merges == ()
        assert decode(encode(CODE, vocab), vocab) == CODE

    def test_example_statement_tokens(self):
        vocab = train_bpe([EXAMPLE + "\n"] * 5, vocab_budget=1000)
        stream = encode(EXAMPLE, vocab)
        pieces = [vocab.token_of(i).replace(vocab.marker, "") for i in stream.ids]
        assert pieces == ["print", "(", "x", "+", "3", "if", "x", "==", "0", ")"]
        assert decode(stream, vocab) == EXAMPLE

    def test_pretokenize_is_lossless(self):
        assert "".join(pretokenize(CODE)) == CODE

    def test_roundtrip_keeps_whitespace(self):
        vocab = train_bpe([CODE] * 3, vocab_budget=200)
        text = "    return  area(w,\th) \n\n  w*h\n"
        assert decode(encode(text, vocab), vocab) == text
        assert decode(encode(CODE, vocab), vocab) == CODE

    def test_deterministic(self):
        assert train_bpe([CODE, EXAMPLE], 120) == train_bpe([CODE, EXAMPLE], 120)

    def test_build_vocab_kinds(self):
        assert build_vocab("char", [CODE]).kind == CHARACTER
        assert build_vocab("bpe", [CODE], vocab_budget=80).kind == SUBWORD
        with pytest.raises(VocabularyError):
            build_vocab("word", [CODE])


@pytest.fixture(scope="module")
def bundled():
    """自带语料的全部文件与在其上训练的两种词表"""
    files = load_source_dir(BUNDLED_CORPUS)
    texts = [f.text for f in files]
    return files, build_char_vocab(texts), train_bpe(texts, vocab_budget=1000)


class TestBundledCorpus:
    """自带语料上的词表规模与无损编解码"""

    def test_bpe_reaches_budget(self, bundled):
        _, _, bpe = bundled
        assert bpe.size == 1000
        assert len(set(bpe.tokens)) == 1000

    @pytest.mark.parametrize("scheme", ["char", "bpe"])
    def test_roundtrip_every_file(self, bundled, scheme):
        files, char, bpe = bundled
        vocab = char if scheme == "char" else bpe
        failed = [f.path for f in files if decode(encode(f.text, vocab), vocab) != f.text]
        assert failed == []

    def test_subword_streams_not_longer(self, bundled):
        files, char, bpe = bundled
        char_total = bpe_total = 0
        for f in files:
            n_char = len(encode(f.text, char).ids)
            n_bpe = len(encode(f.text, bpe).ids)
            assert n_bpe <= n_char, f.path
            char_total += n_char
            bpe_total += n_bpe
        assert char_total == sum(len(f.text) for f in files)
        assert bpe_total < char_total


class TestDecode:
    """解码"""

    def test_empty(self):
        vocab = build_char_vocab(["abc"])
        assert decode([], vocab) == ""
        assert len(encode("", vocab)) == 0

    def test_pad_is_dropped(self):
        vocab = build_char_vocab(["abc"])
        assert decode([vocab.id_of("a"), PAD_ID, vocab.id_of("c")], vocab) == "ac"

    def test_out_of_range(self):
        vocab = build_char_vocab(["abc"])
        with pytest.raises(VocabularyError):
            decode([vocab.size], vocab)
        with pytest.raises(VocabularyError):
            decode(np.array([-1]), vocab)


class TestVocabularyFile:
    """词表文件读写与指纹"""

    def test_save_load(self, tmp_path):
        vocab = train_bpe([CODE] * 2, vocab_budget=150)
        path = tmp_path / "vocab.txt"
        vocab.save(path)
        loaded = Vocabulary.load(path)
        assert loaded == vocab
        assert loaded.fingerprint() == vocab.fingerprint()
        assert decode(encode(CODE, loaded), loaded) == CODE

    def test_control_characters_escaped(self):
        vocab = build_char_vocab(["a\tb\n\\c\r"])
        assert Vocabulary.from_text(vocab.to_text()) == vocab

    def test_fingerprint_changes_with_tokens(self):
        assert build_char_vocab(["ab"]).fingerprint() != build_char_vocab(["abc"]).fingerprint()

    def test_missing_file(self, tmp_path):
        with pytest.raises(VocabularyError):
            Vocabulary.load(tmp_path / "missing.txt")

    def test_invalid_tokens(self):
        with pytest.raises(VocabularyError):
            Vocabulary(kind=CHARACTER, tokens=("a", "b"))
        with pytest.raises(VocabularyError):
            Vocabulary(kind=CHARACTER, tokens=SPECIAL_TOKENS + ("a", "a"))
