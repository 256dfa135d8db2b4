import numpy as np
import pytest

from slicelm import (BaseLogitsSource, FrameworkClass, bbpe_tokenize, classify_framework,
                     validate_graph)
from slicelm.synth import (MAX_WORDS, BigramLM, build_embedding_table,
                           build_tokenizer_tables, export_desk_corpus,
                           generate_synthetic_corpus)


@pytest.fixture(scope="module")
def corpus():
    return generate_synthetic_corpus(17, 60)


class TestGenerator:
    def test_deterministic(self):
        a = generate_synthetic_corpus(3, 5)
        b = generate_synthetic_corpus(3, 5)
        assert [s.text for s in a] == [s.text for s in b]
        assert [s.constituency for s in a] == [s.constituency for s in b]
        assert [s.dependency for s in a] == [s.dependency for s in b]

    def test_needs_at_least_one(self):
        with pytest.raises(ValueError):
            generate_synthetic_corpus(0, 0)

    def test_all_graphs_valid(self, corpus):
        for s in corpus:
            assert validate_graph(s.constituency).ok, s.id
            assert validate_graph(s.dependency).ok, s.id

    def test_framework_classification(self, corpus):
        assert classify_framework([s.constituency for s in corpus]) \
            is FrameworkClass.CONSTITUENCY
        assert classify_framework([s.dependency for s in corpus]) \
            is FrameworkClass.DEPENDENCY

    def test_length_cap(self, corpus):
        assert all(len(s.words) <= MAX_WORDS for s in corpus)

    def test_tags_align_with_words(self, corpus):
        assert all(len(s.tags) == len(s.words) for s in corpus)

    def test_constituency_root_is_node_zero_and_deeper_ids_grow(self, corpus):
        for s in corpus:
            g = s.constituency
            assert g.tops == (0,)
            for e in g.edges:
                assert e.source < e.target  # breadth-first numbering

    def test_dependency_nodes_are_words(self, corpus):
        for s in corpus:
            g = s.dependency
            assert len(g.nodes) == len(s.words)
            for n in g.nodes:
                f, t = n.anchors[0]
                assert g.text.encode()[f:t].decode() == s.words[n.id]


class TestTokenizerTables:
    def test_small_vocab(self):
        tables = build_tokenizer_tables()
        assert tables.size <= 200

    def test_covers_generated_text(self, corpus):
        tables = build_tokenizer_tables()
        for s in corpus:
            tokens = bbpe_tokenize(s.text, tables)
            assert len(tokens) == len(s.words)

    def test_deterministic(self):
        a = build_tokenizer_tables()
        b = build_tokenizer_tables()
        assert a.vocab == b.vocab
        assert a.merge_ranks == b.merge_ranks


class TestEmbeddings:
    def test_shape_and_dtype(self):
        mat = build_embedding_table(50, 16)
        assert mat.shape == (50, 16)
        assert mat.dtype == np.float32

    def test_seeded(self):
        assert build_embedding_table(10, 4).tobytes() == build_embedding_table(10, 4).tobytes()


class TestBigram:
    def test_rows_are_log_distributions(self):
        lm = BigramLM(5).fit([[0, 1, 2], [2, 1]])
        rows = lm.logits_for([0, 1, 2])
        sums = np.exp(rows.astype(np.float64)).sum(axis=1)
        np.testing.assert_allclose(sums, 1.0, atol=1e-6)

    def test_first_row_conditions_on_bos(self):
        lm = BigramLM(3).fit([[0, 1], [0, 2]])
        row = np.exp(lm.logits_for([1]).astype(np.float64)[0])
        assert row[0] == row.max()  # both sentences start with token 0

    def test_bigram_statistics_respected(self):
        lm = BigramLM(3).fit([[0, 1], [0, 1], [0, 2]])
        after_zero = np.exp(lm.logits_for([0, 9999 % 3]).astype(np.float64)[1])
        assert after_zero[1] > after_zero[2] > after_zero[0]

    def test_export_lgt1(self, tmp_path):
        lm = BigramLM(4).fit([[0, 1, 2]])
        lm.export_lgt1(tmp_path / "b.lgt", [("s0", [0, 1, 2]), ("s1", [3])])
        src = BaseLogitsSource(tmp_path / "b.lgt")
        assert src.total_rows == 4
        assert src.rows_for("s0").shape == (3, 4)
        assert src.rows_for("s1").shape == (1, 4)


class TestDeskCorpus:
    def test_export_is_complete_and_loadable(self, tmp_path):
        paths = export_desk_corpus(tmp_path / "c", n_train=8, n_eval=3, seed=2, dim=8)
        from slicelm import EmbeddingTable, TokenizerTables, read_mrp_file
        tables = TokenizerTables.load(paths["vocab"], paths["merges"])
        emb = EmbeddingTable.load(paths["embeddings"])
        assert emb.vocab_size == tables.size
        assert emb.dim == 8
        assert len(read_mrp_file(paths["train_const"])) == 8
        assert len(read_mrp_file(paths["eval_dep"])) == 3
        base = BaseLogitsSource(paths["base_logits"])
        for g in read_mrp_file(paths["eval_const"]):
            rows = base.rows_for(g.id)
            assert rows.shape[0] == len(bbpe_tokenize(g.text, tables))
        with open(paths["eval_tags"]) as fh:
            assert len(fh.read().splitlines()) == 3
