"""Ablation perturbations: shuffled edge labels and shuffled anchorings.

Both shuffles permute a multiset within one graph and leave everything
else byte-identical; they can be applied at training time, test time, or
both.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .graphs import Graph

PHASES = ("training", "testing", "both")


@dataclass(frozen=True)
class PerturbSpec:
    shuffle_labels: bool = False
    shuffle_anchors: bool = False
    phase: str = "both"
    seed: int = 0

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ConfigError(f"phase must be one of {PHASES}")
        if not (self.shuffle_labels or self.shuffle_anchors):
            raise ConfigError("at least one shuffle flag must be set")

    def applies_to(self, phase: str) -> bool:
        return self.phase == "both" or self.phase == phase


def shuffle_labels(g: Graph, rng: np.random.Generator) -> Graph:
    """Randomly permute the multiset of edge labels across g's edges."""
    if len(g.edges) < 2:
        return g
    labels = [e.label for e in g.edges]
    perm = rng.permutation(len(labels))
    new_edges = tuple(replace(e, label=labels[perm[k]]) for k, e in enumerate(g.edges))
    return replace(g, edges=new_edges)


def shuffle_anchors(g: Graph, rng: np.random.Generator) -> Graph:
    """Randomly permute the multiset of anchor-span lists across g's nodes."""
    if len(g.nodes) < 2:
        return g
    anchors = [n.anchors for n in g.nodes]
    perm = rng.permutation(len(anchors))
    new_nodes = tuple(replace(n, anchors=anchors[perm[k]]) for k, n in enumerate(g.nodes))
    return replace(g, nodes=new_nodes)


def perturb_graph(g: Graph, spec: PerturbSpec, sentence_index: int) -> Graph:
    """Apply the configured shuffles with a per-graph derived seed.

    Label and anchor shuffles draw from disjoint seeded streams so their
    composition is exactly order-independent.
    """
    if spec.shuffle_labels:
        g = shuffle_labels(g, np.random.default_rng((spec.seed ^ sentence_index, 1)))
    if spec.shuffle_anchors:
        g = shuffle_anchors(g, np.random.default_rng((spec.seed ^ sentence_index, 2)))
    return g


def perturb_corpus(graphs, spec: PerturbSpec | None, phase: str):
    if spec is None or not spec.applies_to(phase):
        return list(graphs)
    return [perturb_graph(g, spec, i) for i, g in enumerate(graphs)]
