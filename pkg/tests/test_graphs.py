import json

import pytest

from slicelm import (Edge, FrameworkClass, Graph, LabelVocabulary, Node,
                     classify_framework, convert_ptb_node_labels, ensure_nonempty_edges,
                     parse_mrp_line, serialize_graph, validate_graph)
from slicelm.errors import (EmptyGraphError, MrpParseError, NotATreeError, SchemaError,
                            VocabularyError)
from slicelm.graphs import DUMMY_LABEL, TERMINAL_LABEL, read_mrp_file, word_spans, write_mrp_file


def mrp_line(**overrides):
    obj = {
        "id": "s1",
        "input": "a b",
        "nodes": [{"id": 0, "anchors": [{"from": 0, "to": 1}]},
                  {"id": 1, "anchors": [{"from": 2, "to": 3}]}],
        "edges": [{"source": 1, "target": 0, "label": "det"}],
    }
    obj.update(overrides)
    return json.dumps(obj)


class TestParsing:
    def test_basic(self):
        g = parse_mrp_line(mrp_line())
        assert g.id == "s1"
        assert g.text == "a b"
        assert g.nodes[0].anchors == ((0, 1),)
        assert g.edges[0] == Edge(source=1, target=0, label="det")

    def test_malformed_json_reports_position(self):
        with pytest.raises(MrpParseError) as exc:
            parse_mrp_line('{"id": "x", "input": }')
        assert exc.value.position is not None

    @pytest.mark.parametrize("missing", ["id", "input", "nodes", "edges"])
    def test_missing_required_field(self, missing):
        obj = json.loads(mrp_line())
        del obj[missing]
        with pytest.raises(SchemaError) as exc:
            parse_mrp_line(json.dumps(obj))
        assert exc.value.field == missing

    def test_dangling_edge_endpoint(self):
        line = mrp_line(edges=[{"source": 7, "target": 0, "label": "x"}])
        with pytest.raises(SchemaError) as exc:
            parse_mrp_line(line)
        assert exc.value.field == "source"

    def test_char_offsets_become_byte_offsets(self):
        # two-byte e-acute shifts later anchors by one byte
        line = json.dumps({
            "id": "u", "input": "café bar",
            "nodes": [{"id": 0, "anchors": [{"from": 0, "to": 4}]},
                      {"id": 1, "anchors": [{"from": 5, "to": 8}]}],
            "edges": [],
        })
        g = parse_mrp_line(line)
        assert g.nodes[0].anchors == ((0, 5),)
        assert g.nodes[1].anchors == ((6, 9),)

    def test_round_trip(self):
        line = json.dumps({
            "id": "u", "input": "café bar",
            "nodes": [{"id": 0, "anchors": [{"from": 0, "to": 4}]},
                      {"id": 1, "anchors": [{"from": 5, "to": 8}], "label": "n"}],
            "edges": [{"source": 0, "target": 1, "label": "e"}],
            "tops": [0],
        })
        g = parse_mrp_line(line)
        assert json.loads(serialize_graph(g)) == json.loads(line)

    def test_file_round_trip(self, tmp_path):
        graphs = [parse_mrp_line(mrp_line(id=f"s{k}")) for k in range(3)]
        path = tmp_path / "c.mrp"
        write_mrp_file(path, graphs)
        assert read_mrp_file(path) == graphs


class TestValidation:
    def test_clean_graph(self):
        assert validate_graph(parse_mrp_line(mrp_line())).ok

    def test_cycle(self):
        g = Graph(id="c", text="a b", nodes=(Node(0), Node(1)),
                  edges=(Edge(0, 1, "x"), Edge(1, 0, "y")))
        kinds = {v.kind for v in validate_graph(g).violations}
        assert "cycle" in kinds

    def test_self_loop_and_span(self):
        g = Graph(id="c", text="ab", nodes=(Node(0, anchors=((0, 9),)),),
                  edges=(Edge(0, 0, "x"),))
        kinds = {v.kind for v in validate_graph(g).violations}
        assert kinds == {"self-loop", "span"}

    def test_unsorted_anchors(self):
        g = Graph(id="c", text="abcd", nodes=(Node(0, anchors=((2, 3), (0, 1))),), edges=())
        kinds = {v.kind for v in validate_graph(g).violations}
        assert "anchor-order" in kinds


class TestPtbConversion:
    def test_labels_move_to_edges(self):
        g = Graph(id="p", text="a b",
                  nodes=(Node(0, label="S"), Node(1, label="NP"),
                         Node(2, anchors=((0, 1),), label="DT")),
                  edges=(Edge(0, 1, "?"), Edge(1, 2, "?")))
        out = convert_ptb_node_labels(g)
        assert [e.label for e in out.edges] == ["NP", TERMINAL_LABEL]
        assert all(n.label is None for n in out.nodes)

    def test_reentrancy_rejected(self):
        g = Graph(id="p", text="a",
                  nodes=(Node(0, label="S"), Node(1, label="X"), Node(2, label="Y")),
                  edges=(Edge(0, 2, "?"), Edge(1, 2, "?")))
        with pytest.raises(NotATreeError):
            convert_ptb_node_labels(g)


class TestEnsureNonemptyEdges:
    def test_adds_dummy_root(self):
        g = Graph(id="e", text="a", nodes=(Node(5, anchors=((0, 1),)), Node(9)), edges=())
        out = ensure_nonempty_edges(g)
        assert len(out.edges) == 1
        e = out.edges[0]
        assert e.label == DUMMY_LABEL
        assert e.source == 10  # max id + 1
        assert e.target == 5  # lowest existing id

    def test_noop_when_edges_exist(self):
        g = parse_mrp_line(mrp_line())
        assert ensure_nonempty_edges(g) is g

    def test_empty_graph(self):
        with pytest.raises(EmptyGraphError):
            ensure_nonempty_edges(Graph(id="e", text="", nodes=(), edges=()))


class TestFrameworkClassification:
    def test_dependency(self):
        g = parse_mrp_line(mrp_line())
        assert classify_framework([g]) is FrameworkClass.DEPENDENCY

    def test_multiword_anchor_is_constituency(self):
        g = Graph(id="c", text="a b",
                  nodes=(Node(0, anchors=((0, 3),)),), edges=(Edge(0, 0, "x"),))
        assert classify_framework([g]) is FrameworkClass.CONSTITUENCY

    def test_unanchored_is_constituency(self):
        g = Graph(id="c", text="a b", nodes=(Node(0), Node(1, anchors=((0, 1),))),
                  edges=(Edge(0, 1, "x"),))
        assert classify_framework([g]) is FrameworkClass.CONSTITUENCY

    def test_root_nodes_exempt(self):
        g = Graph(id="c", text="a b",
                  nodes=(Node(0, label="ROOT"), Node(1, anchors=((0, 1),)),
                         Node(2, anchors=((2, 3),))),
                  edges=(Edge(0, 1, "root"), Edge(1, 2, "dep")))
        assert classify_framework([g]) is FrameworkClass.DEPENDENCY

    def test_dummy_root_exempt(self):
        g = ensure_nonempty_edges(
            Graph(id="c", text="a", nodes=(Node(0, anchors=((0, 1),)),), edges=()))
        assert classify_framework([g]) is FrameworkClass.DEPENDENCY


class TestLabelVocabulary:
    def test_dummy_always_present(self):
        vocab = LabelVocabulary(["a", "b"])
        assert DUMMY_LABEL in vocab
        assert len(vocab) == 3

    def test_sorted_and_stable(self):
        g1 = parse_mrp_line(mrp_line())
        g2 = parse_mrp_line(mrp_line(edges=[{"source": 0, "target": 1, "label": "amod"}]))
        vocab = LabelVocabulary.from_graphs([g1, g2])
        assert vocab.labels[:2] == ["amod", "det"]

    def test_unknown_label(self):
        with pytest.raises(VocabularyError):
            LabelVocabulary(["a"])["zzz"]


def test_word_spans_multibyte():
    assert word_spans("café  bar") == [(0, 5), (7, 10)]
