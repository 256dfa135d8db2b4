"""Deterministic projection of slices into fixed-length vectors.

Each relative type owns a block of high-resolution slots (capacity gamma,
order-preserving) plus one low-resolution slot holding the average of the
overflow; a final slot carries the mean embedding of the slice's context
tokens. With the default capacities the layout has 16 typed slots, so the
vector length is 16*|L| + 17*E.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TokenizerTableError, VocabularyError
from .graphs import LabelVocabulary
from .slicing import DEFAULT_CAPACITIES, REL_ORDER, Relative, RelativeType, Slice

EMB_MAGIC = b"EMB1"
SVC_MAGIC = b"SVC1"


@dataclass(frozen=True)
class EncoderConfig:
    embedding_dim: int
    num_labels: int
    capacities: dict[RelativeType, int] = field(default_factory=lambda: dict(DEFAULT_CAPACITIES))

    @property
    def slot_width(self) -> int:
        return self.num_labels + self.embedding_dim

    @property
    def num_slots(self) -> int:
        return sum(self.capacities[rel] + 1 for rel in REL_ORDER)


def vector_dim(cfg: EncoderConfig) -> int:
    return cfg.num_slots * cfg.slot_width + cfg.embedding_dim


@dataclass(frozen=True)
class SlotLayout:
    """Byte-for-byte fixed slot offsets for one encoder configuration."""

    hi_res: dict[RelativeType, tuple[int, ...]]
    lo_res: dict[RelativeType, int]
    context: int
    slot_width: int
    length: int


def slot_layout(cfg: EncoderConfig) -> SlotLayout:
    hi: dict[RelativeType, tuple[int, ...]] = {}
    lo: dict[RelativeType, int] = {}
    offset = 0
    for rel in REL_ORDER:
        slots = []
        for _ in range(cfg.capacities[rel]):
            slots.append(offset)
            offset += cfg.slot_width
        hi[rel] = tuple(slots)
        lo[rel] = offset
        offset += cfg.slot_width
    context = offset
    offset += cfg.embedding_dim
    return SlotLayout(hi_res=hi, lo_res=lo, context=context, slot_width=cfg.slot_width, length=offset)


class EmbeddingTable:
    """V x E matrix of pretrained token embeddings."""

    def __init__(self, matrix: np.ndarray):
        if matrix.ndim != 2:
            raise ConfigError("embedding matrix must be 2-dimensional")
        self.matrix = np.asarray(matrix, dtype=np.float32)

    @property
    def vocab_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def mean_of(self, token_ids) -> np.ndarray:
        if not token_ids:
            return np.zeros(self.dim, dtype=np.float64)
        rows = self.matrix[np.asarray(token_ids, dtype=np.int64)].astype(np.float64)
        return rows.mean(axis=0)

    def save(self, path) -> None:
        write_float32_matrix(path, EMB_MAGIC, self.matrix)

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        return cls(read_float32_matrix(path, EMB_MAGIC))


def write_float32_matrix(path, magic: bytes, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.astype("<f4").tobytes())


def read_float32_matrix(path, magic: bytes) -> np.ndarray:
    with open(path, "rb") as fh:
        got = fh.read(4)
        if got != magic:
            raise TokenizerTableError(f"bad magic in {path}: expected {magic!r}, got {got!r}")
        rows, cols = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(rows * cols * 4), dtype="<f4")
    if data.size != rows * cols:
        raise TokenizerTableError(f"truncated matrix file: {path}")
    return data.reshape(rows, cols)


@dataclass(frozen=True)
class SliceVector:
    data: np.ndarray  # float64, length = vector_dim(cfg)
    layout: SlotLayout


def partition_resolution(relatives, capacity: int):
    """First `capacity` relatives keep order; the rest become an unordered set."""
    ordered = list(relatives)
    return ordered[:capacity], set(ordered[capacity:])


def encode_relative(r: Relative, emb: EmbeddingTable, labels: LabelVocabulary) -> np.ndarray:
    """one-hot(label) ++ mean embedding of the accessible anchor tokens."""
    if r.label not in labels:
        raise VocabularyError(f"unknown edge label: {r.label!r}")
    vec = np.zeros(len(labels) + emb.dim, dtype=np.float64)
    vec[labels[r.label]] = 1.0
    if r.accessible_token_ids and not r.anchors_masked:
        vec[len(labels):] = emb.mean_of(list(r.accessible_token_ids))
    return vec


def encode_slice(s: Slice, cfg: EncoderConfig, emb: EmbeddingTable,
                 labels: LabelVocabulary) -> SliceVector:
    if cfg.num_labels != len(labels):
        raise ConfigError(f"config expects {cfg.num_labels} labels, vocabulary has {len(labels)}")
    if cfg.embedding_dim != emb.dim:
        raise ConfigError(f"config expects dim {cfg.embedding_dim}, embeddings have {emb.dim}")
    layout = slot_layout(cfg)
    out = np.zeros(layout.length, dtype=np.float64)
    width = layout.slot_width
    for rel in REL_ORDER:
        hi, lo = partition_resolution(s.relatives[rel], cfg.capacities[rel])
        for slot_offset, r in zip(layout.hi_res[rel], hi):
            out[slot_offset:slot_offset + width] = encode_relative(r, emb, labels)
        if lo:
            acc = np.zeros(width, dtype=np.float64)
            # fixed summation order so the result is bit-identical across runs
            for r in sorted(lo, key=lambda r: (r.discovery_index, r.node, r.label)):
                acc += encode_relative(r, emb, labels)
            out[layout.lo_res[rel]:layout.lo_res[rel] + width] = acc / len(lo)
    if s.context_token_ids:
        out[layout.context:layout.context + cfg.embedding_dim] = emb.mean_of(list(s.context_token_ids))
    return SliceVector(data=out, layout=layout)


def encode_sentence(slices, token_ids, cfg, emb, labels):
    """(X, y) arrays for one sentence: slice vectors and gold next tokens."""
    X = np.stack([encode_slice(s, cfg, emb, labels).data for s in slices]).astype(np.float32)
    y = np.asarray(token_ids, dtype=np.int64)
    return X, y
