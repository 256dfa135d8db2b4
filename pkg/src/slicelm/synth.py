"""Synthetic PCFG corpus with oracle graphs, plus desk-scale LM assets.

Samples sentences from a small built-in probabilistic grammar and emits,
per sentence, a constituency graph (the derivation tree as an anchored
DAG with category edge labels), a head-percolated dependency projection,
and word-level UPOS tags. Also provides a corpus-trained BPE table
builder, a random embedding table, and a smoothed bigram base LM that
exports incremental logits in the LGT1 format.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .graphs import Edge, Graph, Node
from .neural import write_base_logits
from .tokenization import TokenizerTables, byte_to_unicode

# (lhs, rhs, weight, head child index); upper-case symbols are nonterminals
_RULES = [
    ("S", ("NP", "VP", "PUNC"), 1.0, 1),
    ("NP", ("DT", "NN"), 0.45, 1),
    ("NP", ("DT", "AP", "NN"), 0.20, 2),
    ("NP", ("NNP",), 0.15, 0),
    ("NP", ("PRP",), 0.10, 0),
    ("NP", ("NP", "PP"), 0.10, 0),
    ("AP", ("JJ",), 0.70, 0),
    ("AP", ("RB", "JJ"), 0.30, 1),
    ("VP", ("VBI",), 0.30, 0),
    ("VP", ("VBT", "NP"), 0.40, 0),
    ("VP", ("VBT", "NP", "PP"), 0.10, 0),
    ("VP", ("AUX", "VBB"), 0.10, 1),
    ("VP", ("VP", "RB"), 0.10, 0),
    ("PP", ("IN", "NP"), 1.0, 0),
]
_RECURSIVE = {("NP", ("NP", "PP")), ("VP", ("VP", "RB"))}

_LEXICON = {
    "DT": ["the", "a", "every", "some", "this"],
    "NN": ["cat", "dog", "bird", "horse", "garden", "house",
           "river", "story", "teacher", "child", "apple", "song"],
    "NNP": ["alice", "robert", "paris", "tokyo"],
    "PRP": ["it", "she", "he", "they"],
    "JJ": ["big", "small", "quiet", "bright", "old", "happy"],
    "RB": ["very", "quite", "softly", "often"],
    "VBI": ["sleeps", "runs", "sings", "falls", "waits"],
    "VBT": ["sees", "finds", "likes", "follows", "carries"],
    "AUX": ["will", "may"],
    "VBB": ["sleep", "run", "sing", "wait"],
    "IN": ["in", "near", "with", "behind"],
    "PUNC": ["."],
}

_UPOS = {
    "DT": "DET", "NN": "NOUN", "NNP": "PROPN", "PRP": "PRON", "JJ": "ADJ",
    "RB": "ADV", "VBI": "VERB", "VBT": "VERB", "VBB": "VERB", "AUX": "AUX",
    "IN": "ADP", "PUNC": "PUNCT",
}

MAX_WORDS = 18


@dataclass
class _TreeNode:
    symbol: str
    children: list  # list of _TreeNode for internal nodes, [] for preterminals
    word: str | None = None
    head_index: int = 0
    span: tuple[int, int] = (0, 0)  # word index span [from, to)


def _sample_tree(symbol: str, rng: np.random.Generator, depth: int) -> _TreeNode:
    if symbol in _LEXICON:
        words = _LEXICON[symbol]
        return _TreeNode(symbol, [], word=words[rng.integers(len(words))])
    options = [r for r in _RULES if r[0] == symbol]
    weights = np.array([
        w * (0.5 ** depth if (lhs, rhs) in _RECURSIVE else 1.0)
        for lhs, rhs, w, _ in options
    ])
    weights /= weights.sum()
    lhs, rhs, _, head = options[rng.choice(len(options), p=weights)]
    children = [_sample_tree(child, rng, depth + 1) for child in rhs]
    return _TreeNode(symbol, children, head_index=head)


def _leaves(tree: _TreeNode) -> list[_TreeNode]:
    if tree.word is not None:
        return [tree]
    return [leaf for c in tree.children for leaf in _leaves(c)]


def _assign_spans(tree: _TreeNode, start: int) -> int:
    if tree.word is not None:
        tree.span = (start, start + 1)
        return start + 1
    pos = start
    for c in tree.children:
        pos = _assign_spans(c, pos)
    tree.span = (start, pos)
    return pos


def _lexical_head(tree: _TreeNode) -> int:
    """Word index of the constituent's lexical head."""
    while tree.word is None:
        tree = tree.children[tree.head_index]
    return tree.span[0]


@dataclass
class SynthSentence:
    id: str
    text: str
    words: list[str]
    tags: list[str]
    constituency: Graph
    dependency: Graph


def _word_byte_spans(words) -> list[tuple[int, int]]:
    spans = []
    pos = 0
    for w in words:
        spans.append((pos, pos + len(w)))
        pos += len(w) + 1
    return spans


def _constituency_graph(tree: _TreeNode, sid: str, text: str, spans) -> Graph:
    # BFS numbering from the root, so deeper nodes get higher ids
    order = []
    queue = [tree]
    while queue:
        node = queue.pop(0)
        order.append(node)
        queue.extend(node.children)
    ids = {id(node): k for k, node in enumerate(order)}
    nodes = []
    edges = []
    for node in order:
        f, t = node.span
        anchors = ((spans[f][0], spans[t - 1][1]),)
        nodes.append(Node(id=ids[id(node)], anchors=anchors))
        for c in node.children:
            edges.append(Edge(source=ids[id(node)], target=ids[id(c)], label=c.symbol))
    return Graph(id=sid, text=text, nodes=tuple(nodes), edges=tuple(edges), tops=(0,))


def _dependency_graph(tree: _TreeNode, sid: str, text: str, spans) -> Graph:
    n_words = tree.span[1]
    nodes = tuple(Node(id=i, anchors=(spans[i],)) for i in range(n_words))
    edges = []

    def walk(node: _TreeNode):
        if node.word is not None:
            return
        head = _lexical_head(node.children[node.head_index])
        for k, c in enumerate(node.children):
            if k != node.head_index:
                edges.append(Edge(source=head, target=_lexical_head(c), label=c.symbol))
            walk(c)

    walk(tree)
    return Graph(id=sid, text=text, nodes=nodes, edges=tuple(edges),
                 tops=(_lexical_head(tree),))


def generate_synthetic_corpus(seed: int, n: int) -> list[SynthSentence]:
    if n < 1:
        raise ValueError("need at least one sentence")
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        while True:
            tree = _sample_tree("S", rng, 0)
            leaves = _leaves(tree)
            if len(leaves) <= MAX_WORDS:
                break
        _assign_spans(tree, 0)
        words = [leaf.word for leaf in leaves]
        tags = [_UPOS[leaf.symbol] for leaf in leaves]
        text = " ".join(words)
        spans = _word_byte_spans(words)
        sid = f"synth-{i}"
        out.append(SynthSentence(
            id=sid, text=text, words=words, tags=tags,
            constituency=_constituency_graph(tree, sid, text, spans),
            dependency=_dependency_graph(tree, sid, text, spans),
        ))
    return out


def build_tokenizer_tables() -> TokenizerTables:
    """Word-level BPE tables covering the built-in lexicon.

    Trains merges over all lexicon words (bare and space-prefixed) until
    each variant is a single token; the vocab holds the byte characters
    plus the full-word tokens only.
    """
    encoder = byte_to_unicode()
    space = encoder[ord(" ")]
    words = sorted({w for ws in _LEXICON.values() for w in ws})
    variants = [tuple(encoder[b] for b in w.encode()) for w in words]
    variants += [(space,) + tuple(encoder[b] for b in w.encode()) for w in words]

    sequences = [list(v) for v in variants]
    merges = []
    while True:
        counts = Counter()
        for seq in sequences:
            counts.update(zip(seq, seq[1:]))
        if not counts:
            break
        best = max(sorted(counts), key=lambda pair: counts[pair])
        merges.append(best)
        joined = best[0] + best[1]
        for seq in sequences:
            k = 0
            while k < len(seq) - 1:
                if (seq[k], seq[k + 1]) == best:
                    seq[k:k + 2] = [joined]
                else:
                    k += 1
        if all(len(seq) == 1 for seq in sequences):
            break

    chars = sorted({c for v in variants for c in v})
    tokens = chars + sorted({seq[0] for seq in sequences})
    vocab = {}
    for tok in tokens:
        if tok not in vocab:
            vocab[tok] = len(vocab)
    return TokenizerTables(vocab, merges)


def build_embedding_table(vocab_size: int, dim: int, seed: int = 7) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return (rng.standard_normal((vocab_size, dim)) * 0.1).astype(np.float32)


class BigramLM:
    """Add-alpha smoothed bigram model over BPE token ids (BOS-initial)."""

    def __init__(self, vocab_size: int, alpha: float = 0.1):
        self.vocab_size = vocab_size
        self.alpha = alpha
        # row 0 of the count table is the BOS context
        self.counts = np.zeros((vocab_size + 1, vocab_size), dtype=np.float64)

    def fit(self, sentences) -> "BigramLM":
        for ids in sentences:
            prev = 0
            for tid in ids:
                self.counts[prev, tid] += 1
                prev = tid + 1
        return self

    def logits_for(self, ids) -> np.ndarray:
        """Row i: log P(. | token i-1); row 0 conditions on BOS."""
        rows = np.empty((len(ids), self.vocab_size), dtype=np.float32)
        prev = 0
        for i, tid in enumerate(ids):
            row = self.counts[prev] + self.alpha
            rows[i] = np.log(row / row.sum())
            prev = tid + 1
        return rows

    def export_lgt1(self, path, sentences) -> None:
        """sentences: iterable of (sentence_id, token ids)."""
        write_base_logits(path, self.vocab_size,
                          ((sid, self.logits_for(ids)) for sid, ids in sentences))


def export_desk_corpus(out_dir, n_train: int = 400, n_eval: int = 100,
                       seed: int = 0, dim: int = 32) -> dict:
    """Write a complete self-contained corpus under out_dir.

    Emits train/eval graph files for both formalisms, word-level tag files,
    tokenizer tables, a random embedding table, and bigram base logits for
    every sentence (the bigram model is fit on the training split only).
    Returns a dict of the written paths.
    """
    import os

    from .encoding import EmbeddingTable
    from .graphs import write_mrp_file
    from .tokenization import bbpe_tokenize

    os.makedirs(out_dir, exist_ok=True)
    sents = generate_synthetic_corpus(seed, n_train + n_eval)
    train, dev = sents[:n_train], sents[n_train:]

    paths = {name: os.path.join(out_dir, fname) for name, fname in [
        ("train_const", "train.const.mrp"), ("eval_const", "eval.const.mrp"),
        ("train_dep", "train.dep.mrp"), ("eval_dep", "eval.dep.mrp"),
        ("train_tags", "train.tags.txt"), ("eval_tags", "eval.tags.txt"),
        ("vocab", "vocab.json"), ("merges", "merges.txt"),
        ("embeddings", "embeddings.emb"), ("base_logits", "base.lgt"),
    ]}

    write_mrp_file(paths["train_const"], [s.constituency for s in train])
    write_mrp_file(paths["eval_const"], [s.constituency for s in dev])
    write_mrp_file(paths["train_dep"], [s.dependency for s in train])
    write_mrp_file(paths["eval_dep"], [s.dependency for s in dev])
    for key, split in (("train_tags", train), ("eval_tags", dev)):
        with open(paths[key], "w", encoding="utf-8") as fh:
            for s in split:
                fh.write(" ".join(s.tags) + "\n")

    tables = build_tokenizer_tables()
    tables.save(paths["vocab"], paths["merges"])
    EmbeddingTable(build_embedding_table(tables.size, dim)).save(paths["embeddings"])

    token_ids = {s.id: bbpe_tokenize(s.text, tables).ids() for s in sents}
    lm = BigramLM(tables.size).fit([token_ids[s.id] for s in train])
    lm.export_lgt1(paths["base_logits"], [(s.id, token_ids[s.id]) for s in sents])
    return paths
