"""Per-token subgraph slices: typed relatives, future masking, ranking.

For each token position the slice collects the anchor node's relatives
(parents, siblings, grandparents, aunts, children, coparents), drops
everything that is only reachable through nodes anchored strictly in the
future, and ranks what remains by sequential proximity to the target.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .tokenization import AlignedSentence


class RelativeType(Enum):
    PARENT = "parent"
    SIBLING = "sibling"
    GRANDPARENT = "grandparent"
    AUNT = "aunt"
    CHILD = "child"
    COPARENT = "coparent"


REL_ORDER = (
    RelativeType.PARENT,
    RelativeType.SIBLING,
    RelativeType.GRANDPARENT,
    RelativeType.AUNT,
    RelativeType.CHILD,
    RelativeType.COPARENT,
)

DEFAULT_CAPACITIES = {
    RelativeType.PARENT: 2,
    RelativeType.SIBLING: 2,
    RelativeType.GRANDPARENT: 1,
    RelativeType.AUNT: 2,
    RelativeType.CHILD: 2,
    RelativeType.COPARENT: 1,
}


@dataclass(frozen=True)
class Relative:
    node: int
    rel_type: RelativeType
    label: str  # label of the edge that selected this relative
    via: tuple[tuple[int, ...], ...] = ((),)  # intermediate nodes, per discovery path
    discovery_index: int = 0
    accessible_positions: tuple[int, ...] = ()
    accessible_token_ids: tuple[int, ...] = ()
    anchors_masked: bool = False  # anchors stripped (overlaps the target)


@dataclass(frozen=True)
class Slice:
    position: int
    anchor: int | None
    relatives: dict[RelativeType, tuple[Relative, ...]]
    context_token_ids: tuple[int, ...] = ()

    def all_relatives(self):
        for rel_type in REL_ORDER:
            yield from self.relatives[rel_type]


def _empty_relatives() -> dict[RelativeType, tuple[Relative, ...]]:
    return {rel_type: () for rel_type in REL_ORDER}


def collect_relatives(g, anchor: int) -> dict[RelativeType, list[Relative]]:
    """Gather typed relatives of the anchor node in edge-list order.

    Within each type, duplicates with identical (node, label) are kept only
    once; self-loops are ignored.
    """
    edges = [e for e in g.edges if e.source != e.target]
    out: dict[RelativeType, list[Relative]] = {rel_type: [] for rel_type in REL_ORDER}
    # (node, label) -> list of discovery-path via chains, mutated in place
    seen: dict[RelativeType, dict] = {rel_type: {} for rel_type in REL_ORDER}

    def add(rel_type, node, label, via):
        key = (node, label)
        vias = seen[rel_type].get(key)
        if vias is not None:
            if via not in vias:
                vias.append(via)
            return
        seen[rel_type][key] = [via]
        out[rel_type].append(
            Relative(node=node, rel_type=rel_type, label=label,
                     discovery_index=len(out[rel_type]))
        )

    def finish():
        return {
            rel_type: [replace(r, via=tuple(seen[rel_type][(r.node, r.label)]))
                       for r in rel_list]
            for rel_type, rel_list in out.items()
        }

    parents = []
    for e in edges:
        if e.target == anchor:
            add(RelativeType.PARENT, e.source, e.label, ())
            parents.append(e.source)
    children = []
    for e in edges:
        if e.source == anchor:
            add(RelativeType.CHILD, e.target, e.label, ())
            children.append(e.target)

    grandparents = []  # (grandparent, parent) pairs in discovery order
    for p in dict.fromkeys(parents):
        for e in edges:
            if e.source == p and e.target != anchor:
                add(RelativeType.SIBLING, e.target, e.label, (p,))
            if e.target == p:
                add(RelativeType.GRANDPARENT, e.source, e.label, (p,))
                grandparents.append((e.source, p))
    for o, p in grandparents:
        for e in edges:
            if e.source == o and e.target != p:  # a parent is trivially o's child
                add(RelativeType.AUNT, e.target, e.label, (p, o))
    for c in dict.fromkeys(children):
        for e in edges:
            if e.target == c and e.source != anchor:
                add(RelativeType.COPARENT, e.source, e.label, (c,))
    return finish()


def _node_access(aligned: AlignedSentence, node: int, i: int):
    """Classify a node at target position i.

    Returns (dropped, masked, accessible_positions). A node anchored only in
    future tokens is dropped; one whose anchors cover position i is kept with
    anchors stripped; otherwise its strictly-past positions stay accessible.
    """
    positions = aligned.node_token_positions(node)
    if not positions:
        return False, False, ()
    if i in positions:
        return False, True, ()
    past = tuple(p for p in positions if p < i)
    if not past:
        return True, False, ()
    return False, False, past


def apply_future_mask(relatives, aligned: AlignedSentence, i: int):
    """Drop future-only relatives (and anything discovered through them).

    A relative survives if at least one of its discovery paths avoids
    dropped intermediate nodes.
    """
    node_info = {}

    def info(node):
        if node not in node_info:
            node_info[node] = _node_access(aligned, node, i)
        return node_info[node]

    masked: dict[RelativeType, list[Relative]] = {}
    for rel_type, rel_list in relatives.items():
        kept = []
        for r in rel_list:
            dropped, is_masked, past = info(r.node)
            if dropped:
                continue
            if not any(all(not info(v)[0] for v in chain) for chain in r.via):
                continue
            token_ids = tuple(aligned.tokens[p].id for p in past)
            kept.append(replace(r, accessible_positions=past,
                                accessible_token_ids=token_ids, anchors_masked=is_masked))
        masked[rel_type] = kept
    return masked


def rank_relatives(relatives, aligned: AlignedSentence, i: int):
    """Stable sort each type by distance to the nearest past anchor token."""

    def key(r: Relative):
        if r.accessible_positions:
            return (0, i - max(r.accessible_positions), r.discovery_index)
        return (1, r.discovery_index, 0)

    return {rel_type: tuple(sorted(rel_list, key=key)) for rel_type, rel_list in relatives.items()}


def _slice_for_anchor(aligned: AlignedSentence, i: int, anchor: int) -> Slice:
    relatives = collect_relatives(aligned.graph, anchor)
    relatives = apply_future_mask(relatives, aligned, i)
    relatives = rank_relatives(relatives, aligned, i)
    return Slice(position=i, anchor=anchor, relatives=relatives)


def slice_sentence(aligned: AlignedSentence) -> list[Slice]:
    """Slices for every token position, left to right.

    Unanalyzable tokens copy the preceding slice, with the tokens since the
    last analyzable position contributed as extra context.
    """
    slices: list[Slice] = []
    last_analyzable = None
    for i, al in enumerate(aligned.alignments):
        if not al.unanalyzable:
            slices.append(_slice_for_anchor(aligned, i, al.anchor_node))
            last_analyzable = i
        elif i == 0:
            slices.append(Slice(position=0, anchor=None, relatives=_empty_relatives()))
        else:
            prev = slices[i - 1]
            start = last_analyzable if last_analyzable is not None else 0
            context = tuple(aligned.tokens[j].id for j in range(start, i))
            slices.append(replace(prev, position=i, context_token_ids=context))
    return slices


def extract_slice(aligned: AlignedSentence, i: int) -> Slice:
    return slice_sentence(aligned)[i]
