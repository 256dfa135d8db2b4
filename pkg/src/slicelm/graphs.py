"""Anchored labeled DAGs and the MRP JSON-lines interchange format.

Graphs are parsed from one-JSON-object-per-line files. Anchors arrive as
character offsets into the raw sentence and are normalized to byte offsets
into its UTF-8 encoding at parse time; serialization converts back, so
parse/serialize round-trips on the supported field subset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import EmptyGraphError, MrpParseError, NotATreeError, SchemaError, VocabularyError

DUMMY_LABEL = "__DUMMY__"
TERMINAL_LABEL = "TERM"


@dataclass(frozen=True)
class Node:
    id: int
    anchors: tuple[tuple[int, int], ...] = ()
    label: str | None = None


@dataclass(frozen=True)
class Edge:
    source: int
    target: int
    label: str


@dataclass(frozen=True)
class Graph:
    id: str
    text: str
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    tops: tuple[int, ...] = ()

    def node_by_id(self, node_id: int) -> Node:
        return self._index()[node_id]

    def _index(self) -> dict[int, Node]:
        # cached on first use; frozen dataclass, so stash via __dict__
        idx = self.__dict__.get("_node_index")
        if idx is None:
            idx = {n.id: n for n in self.nodes}
            self.__dict__["_node_index"] = idx
        return idx

    def text_bytes(self) -> bytes:
        return self.text.encode("utf-8")


@dataclass(frozen=True)
class Violation:
    kind: str  # "cycle" | "span" | "endpoint" | "anchor-order" | "self-loop"
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


class FrameworkClass(Enum):
    DEPENDENCY = "dependency"
    CONSTITUENCY = "constituency"


class LabelVocabulary:
    """Bijective mapping between edge labels and [0, |L|)."""

    def __init__(self, labels):
        self.labels = list(labels)
        if DUMMY_LABEL not in self.labels:
            self.labels.append(DUMMY_LABEL)
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        if len(self.index) != len(self.labels):
            raise VocabularyError("duplicate labels in vocabulary")

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self.index

    def __getitem__(self, label):
        try:
            return self.index[label]
        except KeyError:
            raise VocabularyError(f"unknown edge label: {label!r}") from None

    @classmethod
    def from_graphs(cls, graphs) -> "LabelVocabulary":
        seen = sorted({e.label for g in graphs for e in g.edges})
        return cls(seen)


def _char_to_byte_offsets(text: str) -> list[int]:
    """offsets[c] = byte offset of character c; one extra entry for end."""
    offsets = [0]
    total = 0
    for ch in text:
        total += len(ch.encode("utf-8"))
        offsets.append(total)
    return offsets


def _byte_to_char_map(text: str) -> dict[int, int]:
    mapping = {}
    total = 0
    for c, ch in enumerate(text):
        mapping[total] = c
        total += len(ch.encode("utf-8"))
    mapping[total] = len(text)
    return mapping


def parse_mrp_line(line: str) -> Graph:
    """Parse one MRP-style JSON object into a Graph.

    Unknown fields are ignored. Anchors are converted from character to
    byte offsets. Edge endpoints must reference existing node ids.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MrpParseError(f"malformed JSON at position {exc.pos}: {exc.msg}", position=exc.pos) from exc
    if not isinstance(obj, dict):
        raise SchemaError("graph line must be a JSON object")

    for req in ("id", "input", "nodes", "edges"):
        if req not in obj:
            raise SchemaError(f"missing required field: {req!r}", field=req)

    text = obj["input"]
    if not isinstance(text, str):
        raise SchemaError("field 'input' must be a string", field="input")
    offsets = _char_to_byte_offsets(text)

    nodes = []
    for raw in obj["nodes"]:
        if "id" not in raw:
            raise SchemaError("node without 'id'", field="id")
        anchors = []
        for a in raw.get("anchors") or []:
            if "from" not in a or "to" not in a:
                raise SchemaError("anchor without 'from'/'to'", field="anchors")
            f, t = a["from"], a["to"]
            if 0 <= f <= len(text) and 0 <= t <= len(text):
                anchors.append((offsets[f], offsets[t]))
            else:
                # keep raw values so validation can flag out-of-range spans
                anchors.append((f, t))
        nodes.append(Node(id=raw["id"], anchors=tuple(anchors), label=raw.get("label")))

    node_ids = {n.id for n in nodes}
    edges = []
    for raw in obj["edges"]:
        for req in ("source", "target", "label"):
            if req not in raw:
                raise SchemaError(f"edge without {req!r}", field=req)
        if raw["source"] not in node_ids:
            raise SchemaError(f"edge source references missing node {raw['source']}", field="source")
        if raw["target"] not in node_ids:
            raise SchemaError(f"edge target references missing node {raw['target']}", field="target")
        edges.append(Edge(source=raw["source"], target=raw["target"], label=raw["label"]))

    tops = tuple(obj.get("tops") or ())
    return Graph(id=str(obj["id"]), text=text, nodes=tuple(nodes), edges=tuple(edges), tops=tops)


def serialize_graph(g: Graph) -> str:
    """Emit the same JSON subset that parse_mrp_line reads (char offsets)."""
    byte_to_char = _byte_to_char_map(g.text)
    nodes = []
    for n in g.nodes:
        raw = {"id": n.id}
        if n.anchors:
            raw["anchors"] = [
                {"from": byte_to_char.get(f, f), "to": byte_to_char.get(t, t)} for f, t in n.anchors
            ]
        if n.label is not None:
            raw["label"] = n.label
        nodes.append(raw)
    obj = {
        "id": g.id,
        "input": g.text,
        "nodes": nodes,
        "edges": [{"source": e.source, "target": e.target, "label": e.label} for e in g.edges],
    }
    if g.tops:
        obj["tops"] = list(g.tops)
    return json.dumps(obj, ensure_ascii=False)


def read_mrp_file(path) -> list[Graph]:
    graphs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                graphs.append(parse_mrp_line(line))
    return graphs


def write_mrp_file(path, graphs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(serialize_graph(g) + "\n")


def validate_graph(g: Graph) -> ValidationReport:
    """Collect invariant violations; an empty report means the graph is valid."""
    violations = []
    node_ids = {n.id for n in g.nodes}
    text_len = len(g.text_bytes())

    for e in g.edges:
        for end in (e.source, e.target):
            if end not in node_ids:
                violations.append(Violation("endpoint", f"edge {e.source}->{e.target} references missing node {end}"))
        if e.source == e.target:
            violations.append(Violation("self-loop", f"self-loop on node {e.source}"))

    for n in g.nodes:
        prev_to = None
        for f, t in n.anchors:
            if not (0 <= f < t <= text_len):
                violations.append(Violation("span", f"node {n.id} anchor [{f},{t}) out of bounds"))
            if prev_to is not None and f < prev_to:
                violations.append(Violation("anchor-order", f"node {n.id} anchors overlap or are unsorted"))
            prev_to = t

    # Kahn's algorithm over well-formed, non-loop edges
    clean = [e for e in g.edges if e.source != e.target and e.source in node_ids and e.target in node_ids]
    indeg = {nid: 0 for nid in node_ids}
    out = {nid: [] for nid in node_ids}
    for e in clean:
        indeg[e.target] += 1
        out[e.source].append(e.target)
    queue = [nid for nid, d in indeg.items() if d == 0]
    seen = 0
    while queue:
        nid = queue.pop()
        seen += 1
        for tgt in out[nid]:
            indeg[tgt] -= 1
            if indeg[tgt] == 0:
                queue.append(tgt)
    if seen < len(node_ids):
        violations.append(Violation("cycle", "directed edge relation contains a cycle"))

    return ValidationReport(tuple(violations))


def convert_ptb_node_labels(g: Graph) -> Graph:
    """Move PTB node labels onto each node's single incoming edge.

    Anchored leaves are treated as preterminals: their POS label is
    discarded and the word-attachment edge is labeled TERM so the token
    stays reachable. Raises NotATreeError on reentrant nodes.
    """
    incoming: dict[int, list[Edge]] = {n.id: [] for n in g.nodes}
    for e in g.edges:
        incoming[e.target].append(e)
    for nid, edges_in in incoming.items():
        if len(edges_in) >= 2:
            raise NotATreeError(f"node {nid} has {len(edges_in)} incoming edges")

    labels = {n.id: n.label for n in g.nodes}
    new_edges = []
    for e in g.edges:
        target = g.node_by_id(e.target)
        if target.anchors:
            new_edges.append(replace(e, label=TERMINAL_LABEL))
        else:
            new_edges.append(replace(e, label=labels[e.target] if labels[e.target] is not None else e.label))
    new_nodes = tuple(replace(n, label=None) for n in g.nodes)
    return replace(g, nodes=new_nodes, edges=tuple(new_edges))


def ensure_nonempty_edges(g: Graph) -> Graph:
    """Guarantee at least one edge by attaching a dummy-labeled synthetic root."""
    if not g.nodes:
        raise EmptyGraphError(f"graph {g.id!r} has no nodes")
    if g.edges:
        return g
    root_id = max(n.id for n in g.nodes) + 1
    lowest = min(n.id for n in g.nodes)
    root = Node(id=root_id)
    edge = Edge(source=root_id, target=lowest, label=DUMMY_LABEL)
    return replace(g, nodes=g.nodes + (root,), edges=(edge,))


def word_spans(text: str) -> list[tuple[int, int]]:
    """Byte spans of whitespace-delimited words."""
    data = text.encode("utf-8")
    spans = []
    start = None
    for i, b in enumerate(data):
        if bytes([b]).isspace():
            if start is not None:
                spans.append((start, i))
                start = None
        elif start is None:
            start = i
    if start is not None:
        spans.append((start, len(data)))
    return spans


def _is_exempt(g: Graph, node: Node) -> bool:
    # synthetic dummy roots and UD-style "ROOT" nodes don't count
    if node.label == "ROOT":
        return True
    return any(e.label == DUMMY_LABEL and e.source == node.id for e in g.edges)


def classify_framework(corpus) -> FrameworkClass:
    """Dependency iff every (non-exempt) node is anchored in exactly one word."""
    for g in corpus:
        words = word_spans(g.text)
        for n in g.nodes:
            if _is_exempt(g, n):
                continue
            if not n.anchors:
                return FrameworkClass.CONSTITUENCY
            covered = set()
            for f, t in n.anchors:
                for w, (wf, wt) in enumerate(words):
                    if max(f, wf) < min(t, wt):
                        covered.add(w)
            if len(covered) != 1:
                return FrameworkClass.CONSTITUENCY
    return FrameworkClass.DEPENDENCY
