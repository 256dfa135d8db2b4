import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from slicelm import Edge, Graph, Node, TokenizerTables
from slicelm.tokenization import byte_to_unicode

SAMPLE_TEXT = "Numerous injuries were reported"
# word char spans: Numerous 0-8, injuries 9-17, were 18-22, reported 23-31


def make_tables_for_words(words) -> TokenizerTables:
    """Tokenizer tables whose merges build each given word as one token.

    Each word is compiled to a left-to-right prefix merge chain; the vocab
    holds all 256 byte characters plus the finished word tokens.
    """
    encoder = byte_to_unicode()
    merges = []
    finished = []
    for word in words:
        units = [encoder[b] for b in word.encode("utf-8")]
        prefix = units[0]
        for ch in units[1:]:
            if (prefix, ch) not in merges:  # words may share prefixes
                merges.append((prefix, ch))
            prefix += ch
            finished.append(prefix)  # keep intermediates reachable too
    vocab = {}
    for ch in sorted(encoder.values()):
        vocab[ch] = len(vocab)
    for tok in finished:
        if tok not in vocab:
            vocab[tok] = len(vocab)
    return TokenizerTables(vocab, merges)


@pytest.fixture(scope="session")
def sample_tables() -> TokenizerTables:
    return make_tables_for_words(["umerous", " injuries", " were", " reported"])


@pytest.fixture(scope="session")
def eds_graph() -> Graph:
    # 0: quantifier over "Numerous injuries"; 1: modifier "Numerous";
    # 2: noun "injuries"; 3: verb "reported"; "were" is unanchored
    return Graph(
        id="sample-eds",
        text=SAMPLE_TEXT,
        nodes=(
            Node(id=0, anchors=((0, 17),)),
            Node(id=1, anchors=((0, 8),)),
            Node(id=2, anchors=((9, 17),)),
            Node(id=3, anchors=((23, 31),)),
        ),
        edges=(
            Edge(source=3, target=2, label="ARG2"),
            Edge(source=1, target=2, label="ARG1"),
            Edge(source=0, target=2, label="BV"),
        ),
        tops=(3,),
    )


@pytest.fixture(scope="session")
def ud_graph() -> Graph:
    # one node per word; edges point head -> dependent
    return Graph(
        id="sample-ud",
        text=SAMPLE_TEXT,
        nodes=(
            Node(id=0, anchors=((0, 8),)),
            Node(id=1, anchors=((9, 17),)),
            Node(id=2, anchors=((18, 22),)),
            Node(id=3, anchors=((23, 31),)),
        ),
        edges=(
            Edge(source=1, target=0, label="amod"),
            Edge(source=3, target=1, label="nsubj:pass"),
            Edge(source=3, target=2, label="aux:pass"),
        ),
        tops=(3,),
    )
