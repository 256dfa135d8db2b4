"""Byte-level BPE tokenization and token-to-anchor alignment.

The tokenizer consumes externally supplied tables (a token->id vocab and a
ranked merge list) in the usual byte-level BPE formats. Token spans are
byte offsets into the original text, partition it exactly, and detokenize
back to the input bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import regex as re

from .errors import AlignmentError, TokenizerTableError
from .graphs import Graph

# standard byte-level BPE pre-tokenization pattern
_PRETOKEN_PATTERN = re.compile(
    r"""'(?:[sdmt]|ll|ve|re)| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"""
)


def byte_to_unicode() -> dict[int, str]:
    """Invertible map from byte values to printable unicode characters."""
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(0xA1, 0xAD)) + list(range(0xAE, 0x100))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, (chr(c) for c in cs)))


@dataclass(frozen=True)
class Token:
    id: int
    surface: str  # byte-unicode characters, one per original byte
    span: tuple[int, int]  # byte offsets into the original text


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[Token, ...]

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    def ids(self) -> list[int]:
        return [t.id for t in self.tokens]


class TokenizerTables:
    """Vocab, ranked merges, and the byte<->unicode maps."""

    def __init__(self, vocab: dict[str, int], merges: list[tuple[str, str]]):
        self.vocab = dict(vocab)
        ids = sorted(self.vocab.values())
        if ids != list(range(len(ids))):
            raise TokenizerTableError("vocab ids are not dense in [0, V)")
        self.merge_ranks = {pair: rank for rank, pair in enumerate(merges)}
        if len(self.merge_ranks) != len(merges):
            raise TokenizerTableError("duplicate merge pair in merges list")
        self.byte_encoder = byte_to_unicode()
        self.byte_decoder = {c: b for b, c in self.byte_encoder.items()}

    @property
    def size(self) -> int:
        return len(self.vocab)

    @classmethod
    def load(cls, vocab_path, merges_path) -> "TokenizerTables":
        with open(vocab_path, encoding="utf-8") as fh:
            vocab = json.load(fh)
        merges = []
        with open(merges_path, encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                line = line.rstrip("\n")
                if i == 0 and line.startswith("#"):
                    continue
                if not line.strip():
                    continue
                parts = line.split(" ")
                if len(parts) != 2:
                    raise TokenizerTableError(f"bad merge line {i + 1}: {line!r}")
                merges.append((parts[0], parts[1]))
        return cls(vocab, merges)

    def save(self, vocab_path, merges_path) -> None:
        with open(vocab_path, "w", encoding="utf-8") as fh:
            json.dump(self.vocab, fh, ensure_ascii=False)
        ordered = sorted(self.merge_ranks.items(), key=lambda kv: kv[1])
        with open(merges_path, "w", encoding="utf-8") as fh:
            fh.write("#version: slicelm\n")
            for (a, b), _ in ordered:
                fh.write(f"{a} {b}\n")


def _apply_merges(units: list[str], ranks: dict[tuple[str, str], int]) -> list[str]:
    while len(units) > 1:
        best = None
        best_rank = None
        for pair in zip(units, units[1:]):
            r = ranks.get(pair)
            if r is not None and (best_rank is None or r < best_rank):
                best, best_rank = pair, r
        if best is None:
            break
        merged = []
        i = 0
        while i < len(units):
            if i < len(units) - 1 and (units[i], units[i + 1]) == best:
                merged.append(units[i] + units[i + 1])
                i += 2
            else:
                merged.append(units[i])
                i += 1
        units = merged
    return units


def bbpe_tokenize(text: str, tables: TokenizerTables) -> TokenSequence:
    """Tokenize text and record each token's byte span."""
    if not text:
        return TokenSequence(())
    tokens = []
    byte_pos = 0
    pieces = _PRETOKEN_PATTERN.findall(text)
    if "".join(pieces) != text:  # pattern covers all inputs; guard anyway
        pieces = [text]
    for piece in pieces:
        data = piece.encode("utf-8")
        units = [tables.byte_encoder[b] for b in data]
        for unit in _apply_merges(units, tables.merge_ranks):
            token_id = tables.vocab.get(unit)
            if token_id is None:
                raise TokenizerTableError(f"merged token {unit!r} missing from vocab")
            width = len(unit)  # one unicode char per original byte
            tokens.append(Token(id=token_id, surface=unit, span=(byte_pos, byte_pos + width)))
            byte_pos += width
    return TokenSequence(tuple(tokens))


def detokenize(tokens: TokenSequence, tables: TokenizerTables) -> bytes:
    return bytes(tables.byte_decoder[ch] for tok in tokens for ch in tok.surface)


def select_anchor_node(candidates, g: Graph) -> int:
    """Pick the candidate with the most incident edges; ties -> highest id."""
    if not candidates:
        raise AlignmentError("empty anchor candidate set")
    degree = {nid: 0 for nid in candidates}
    for e in g.edges:
        if e.source in degree:
            degree[e.source] += 1
        if e.target in degree:
            degree[e.target] += 1
    return max(sorted(candidates), key=lambda nid: (degree[nid], nid))


@dataclass(frozen=True)
class TokenAlignment:
    anchor_node: int | None
    unanalyzable: bool
    group_index: int  # position within the run of tokens sharing one anchor
    candidates: frozenset[int]


@dataclass(frozen=True)
class AlignedSentence:
    graph: Graph
    tokens: TokenSequence
    alignments: tuple[TokenAlignment, ...]

    def __len__(self):
        return len(self.tokens)

    def node_token_positions(self, node_id: int) -> tuple[int, ...]:
        """Token positions whose spans overlap the node's anchors."""
        cache = self.__dict__.setdefault("_pos_cache", {})
        if node_id not in cache:
            node = self.graph.node_by_id(node_id)
            positions = []
            for i, tok in enumerate(self.tokens):
                f, t = tok.span
                if any(max(f, af) < min(t, at) for af, at in node.anchors):
                    positions.append(i)
            cache[node_id] = tuple(positions)
        return cache[node_id]


def align_tokens_to_anchors(tokens: TokenSequence, g: Graph) -> AlignedSentence:
    """Resolve each token to an anchor node and flag unanalyzable tokens.

    A token is unanalyzable when it is unanchored, a non-initial subword of
    a single anchor, or a continuation of a multi-token anchor group; the
    latter two are detected by the previous token's anchor node overlapping
    the current token's span.
    """
    anchored = []
    for tok in tokens:
        f, t = tok.span
        cands = frozenset(
            n.id for n in g.nodes if any(max(f, af) < min(t, at) for af, at in n.anchors)
        )
        anchored.append(cands)

    alignments = []
    prev: TokenAlignment | None = None
    for cands in anchored:
        if prev is not None and prev.anchor_node is not None and prev.anchor_node in cands:
            cur = TokenAlignment(prev.anchor_node, True, prev.group_index + 1, cands)
        elif not cands:
            cur = TokenAlignment(None, True, 0, cands)
        else:
            cur = TokenAlignment(select_anchor_node(cands, g), False, 0, cands)
        alignments.append(cur)
        prev = cur
    return AlignedSentence(graph=g, tokens=tokens, alignments=tuple(alignments))
