import numpy as np
import pytest

from slicelm import (EmbeddingTable, EncoderConfig, LabelVocabulary, encode_slice,
                     slot_layout, vector_dim)
from slicelm.encoding import (EMB_MAGIC, SVC_MAGIC, encode_relative, partition_resolution,
                              read_float32_matrix, write_float32_matrix)
from slicelm.errors import ConfigError, TokenizerTableError, VocabularyError
from slicelm.slicing import REL_ORDER, Relative, RelativeType, Slice


def make_slice(relatives_by_type=None, context=()):
    rels = {rel: () for rel in REL_ORDER}
    rels.update(relatives_by_type or {})
    return Slice(position=3, anchor=0, relatives=rels, context_token_ids=tuple(context))


def rel(node, label, rel_type=RelativeType.PARENT, token_ids=(), masked=False, disc=0):
    return Relative(node=node, rel_type=rel_type, label=label, discovery_index=disc,
                    accessible_token_ids=tuple(token_ids), anchors_masked=masked)


@pytest.fixture
def emb():
    rng = np.random.default_rng(0)
    return EmbeddingTable(rng.standard_normal((11, 4)).astype(np.float32))


@pytest.fixture
def labels():
    return LabelVocabulary(["a", "b", "c"])  # + dummy -> |L| = 4


@pytest.fixture
def cfg(emb, labels):
    return EncoderConfig(embedding_dim=emb.dim, num_labels=len(labels))


class TestDimensions:
    def test_slot_count_is_16_with_default_capacities(self, cfg):
        assert cfg.num_slots == 16

    def test_vector_dim_formula(self):
        for num_labels in (10, 38, 39, 59, 72, 90, 537):
            cfg = EncoderConfig(embedding_dim=768, num_labels=num_labels)
            assert vector_dim(cfg) == 16 * num_labels + 17 * 768

    def test_layout_offsets_cover_vector_exactly(self, cfg):
        layout = slot_layout(cfg)
        starts = sorted([off for offs in layout.hi_res.values() for off in offs]
                        + list(layout.lo_res.values()))
        expected = [k * layout.slot_width for k in range(16)]
        assert starts == expected
        assert layout.context == 16 * layout.slot_width
        assert layout.length == vector_dim(cfg)

    def test_slot_order_follows_rel_order(self, cfg):
        layout = slot_layout(cfg)
        firsts = [layout.hi_res[rel_type][0] for rel_type in REL_ORDER]
        assert firsts == sorted(firsts)


class TestPartition:
    def test_split(self):
        hi, lo = partition_resolution([1, 2, 3, 4, 5], 2)
        assert hi == [1, 2]
        assert lo == {3, 4, 5}

    def test_underfull(self):
        hi, lo = partition_resolution([1], 3)
        assert hi == [1]
        assert lo == set()


class TestEncodeRelative:
    def test_one_hot_and_mean_embedding(self, emb, labels):
        r = rel(0, "b", token_ids=(1, 3))
        vec = encode_relative(r, emb, labels)
        assert vec.shape == (len(labels) + emb.dim,)
        one_hot = vec[:len(labels)]
        assert one_hot[labels["b"]] == 1.0
        assert one_hot.sum() == 1.0
        expected = emb.matrix[[1, 3]].astype(np.float64).mean(axis=0)
        np.testing.assert_allclose(vec[len(labels):], expected, rtol=0, atol=0)

    def test_masked_relative_has_zero_embedding(self, emb, labels):
        vec = encode_relative(rel(0, "a", token_ids=(1,), masked=True), emb, labels)
        assert np.all(vec[len(labels):] == 0.0)
        assert vec[labels["a"]] == 1.0

    def test_anchorless_relative_has_zero_embedding(self, emb, labels):
        vec = encode_relative(rel(0, "a"), emb, labels)
        assert np.all(vec[len(labels):] == 0.0)

    def test_unknown_label(self, emb, labels):
        with pytest.raises(VocabularyError):
            encode_relative(rel(0, "zzz"), emb, labels)


class TestEncodeSlice:
    def test_empty_slice_is_zero_vector(self, cfg, emb, labels):
        vec = encode_slice(make_slice(), cfg, emb, labels)
        assert vec.data.shape == (vector_dim(cfg),)
        assert np.all(vec.data == 0.0)

    def test_hi_res_slots_keep_rank_order(self, cfg, emb, labels):
        rels = (rel(0, "a", disc=0, token_ids=(1,)), rel(1, "b", disc=1, token_ids=(2,)))
        s = make_slice({RelativeType.PARENT: rels})
        vec = encode_slice(s, cfg, emb, labels)
        layout = vec.layout
        s0, s1 = layout.hi_res[RelativeType.PARENT]
        assert vec.data[s0 + labels["a"]] == 1.0
        assert vec.data[s1 + labels["b"]] == 1.0
        assert np.all(vec.data[layout.lo_res[RelativeType.PARENT]:
                               layout.lo_res[RelativeType.PARENT] + layout.slot_width] == 0)

    def test_lo_res_slot_averages_overflow(self, cfg, emb, labels):
        rels = tuple(rel(k, "a", disc=k, token_ids=(k,)) for k in range(5))
        s = make_slice({RelativeType.PARENT: rels})
        vec = encode_slice(s, cfg, emb, labels)
        layout = vec.layout
        lo = layout.lo_res[RelativeType.PARENT]
        got = vec.data[lo:lo + layout.slot_width]
        overflow = [encode_relative(r, emb, labels) for r in rels[2:]]
        np.testing.assert_allclose(got, np.mean(overflow, axis=0), atol=1e-15)

    def test_context_slot_mean_embedding(self, cfg, emb, labels):
        vec = encode_slice(make_slice(context=(2, 5)), cfg, emb, labels)
        layout = vec.layout
        got = vec.data[layout.context:layout.context + emb.dim]
        expected = emb.matrix[[2, 5]].astype(np.float64).mean(axis=0)
        np.testing.assert_allclose(got, expected, atol=0)

    def test_config_mismatch_errors(self, emb, labels):
        bad_labels = EncoderConfig(embedding_dim=emb.dim, num_labels=99)
        with pytest.raises(ConfigError):
            encode_slice(make_slice(), bad_labels, emb, labels)
        bad_dim = EncoderConfig(embedding_dim=99, num_labels=len(labels))
        with pytest.raises(ConfigError):
            encode_slice(make_slice(), bad_dim, emb, labels)

    def test_custom_capacities_change_layout(self, emb, labels):
        caps = {rel_type: 1 for rel_type in REL_ORDER}
        cfg = EncoderConfig(embedding_dim=emb.dim, num_labels=len(labels), capacities=caps)
        assert cfg.num_slots == 12
        assert vector_dim(cfg) == 12 * (len(labels) + emb.dim) + emb.dim

    def test_deterministic_across_runs(self, cfg, emb, labels):
        rels = tuple(rel(k, "ab"[k % 2], disc=k, token_ids=(k,)) for k in range(7))
        s = make_slice({RelativeType.SIBLING: rels}, context=(1, 2, 3))
        a = encode_slice(s, cfg, emb, labels).data
        b = encode_slice(s, cfg, emb, labels).data
        assert a.tobytes() == b.tobytes()


class TestBinaryFormats:
    def test_emb1_round_trip(self, tmp_path, emb):
        path = tmp_path / "e.emb"
        emb.save(path)
        loaded = EmbeddingTable.load(path)
        assert loaded.matrix.tobytes() == emb.matrix.tobytes()
        with open(path, "rb") as fh:
            assert fh.read(4) == EMB_MAGIC

    def test_svc1_round_trip(self, tmp_path):
        mat = np.arange(12, dtype=np.float32).reshape(3, 4)
        path = tmp_path / "m.svc"
        write_float32_matrix(path, SVC_MAGIC, mat)
        out = read_float32_matrix(path, SVC_MAGIC)
        assert out.tobytes() == mat.tobytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "m.svc"
        write_float32_matrix(path, SVC_MAGIC, np.zeros((1, 1), dtype=np.float32))
        with pytest.raises(TokenizerTableError):
            read_float32_matrix(path, EMB_MAGIC)

    def test_header_is_little_endian_u32(self, tmp_path):
        path = tmp_path / "m.svc"
        write_float32_matrix(path, SVC_MAGIC, np.zeros((258, 7), dtype=np.float32))
        with open(path, "rb") as fh:
            raw = fh.read(12)
        assert raw[4:8] == (258).to_bytes(4, "little")
        assert raw[8:12] == (7).to_bytes(4, "little")
