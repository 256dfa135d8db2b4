"""Token-emission MLP with tied output embedding, AdamW, training loop.

Two ReLU hidden layers (the second sized to the embedding dim) project a
slice vector into logits through the transpose of the frozen embedding
matrix. Logits can be ensembled with a base LM's logits by elementwise
addition before the softmax. All computation is numpy, deterministic
given the configured seed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AlignmentError, ConfigError, DataError, NumericError

LGT_MAGIC = b"LGT1"
CKPT_MAGIC = b"CKPT"
CKPT_VERSION = 1


@dataclass
class ModelParams:
    w1: np.ndarray  # (input_dim, hidden_dim)
    b1: np.ndarray
    w2: np.ndarray  # (hidden_dim, emb_dim)
    b2: np.ndarray
    emb: np.ndarray  # (vocab, emb_dim); output projection is emb.T
    dropout: float = 0.2
    train_embedding: bool = False

    @property
    def input_dim(self):
        return self.w1.shape[0]

    @property
    def vocab_size(self):
        return self.emb.shape[0]

    def trainable(self) -> dict[str, np.ndarray]:
        out = {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}
        if self.train_embedding:
            out["emb"] = self.emb
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(),
                           self.emb.copy(), self.dropout, self.train_embedding)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    dev_fraction: float = 0.1
    seed: int = 0
    hidden_dim: int = 1024
    dropout: float = 0.2
    train_embedding: bool = False

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0 or self.learning_rate < 0:
            raise ConfigError("epochs/batch size must be positive, learning rate non-negative")
        if not 0 < self.dev_fraction < 1:
            raise ConfigError("dev fraction must lie in (0, 1)")


def init_params(input_dim: int, emb: np.ndarray, cfg: TrainConfig) -> ModelParams:
    """He-style uniform fan-in init, seeded."""
    rng = np.random.default_rng(cfg.seed)
    h, e = cfg.hidden_dim, emb.shape[1]

    def he(fan_in, shape):
        limit = np.sqrt(6.0 / fan_in)
        return rng.uniform(-limit, limit, size=shape).astype(np.float64)

    return ModelParams(
        w1=he(input_dim, (input_dim, h)),
        b1=np.zeros(h, dtype=np.float64),
        w2=he(h, (h, e)),
        b2=np.zeros(e, dtype=np.float64),
        emb=emb.astype(np.float64).copy(),
        dropout=cfg.dropout,
        train_embedding=cfg.train_embedding,
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def cross_entropy(dist: np.ndarray, target: int) -> float:
    """-ln p(target), in nats."""
    return float(-np.log(dist[..., target]))


def ensemble_logits(slr: np.ndarray, lm: np.ndarray) -> np.ndarray:
    slr = np.asarray(slr)
    lm = np.asarray(lm)
    if slr.shape != lm.shape:
        raise ConfigError(f"logit shape mismatch: {slr.shape} vs {lm.shape}")
    return slr + lm


def _dropout_mask(rng, shape, rate):
    keep = 1.0 - rate
    return (rng.random(shape) < keep).astype(np.float64) / keep


def mlp_forward(x: np.ndarray, p: ModelParams, train_mode: bool = False, rng=None,
                return_cache: bool = False):
    """Logits for a single vector or a batch of slice vectors."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != p.input_dim:
        raise ConfigError(f"input dim {x.shape[1]} != model dim {p.input_dim}")
    a1 = x @ p.w1 + p.b1
    h1 = np.maximum(a1, 0.0)
    m1 = 1.0
    if train_mode and p.dropout > 0:
        m1 = _dropout_mask(rng, h1.shape, p.dropout)
        h1 = h1 * m1
    a2 = h1 @ p.w2 + p.b2
    h2 = np.maximum(a2, 0.0)
    m2 = 1.0
    if train_mode and p.dropout > 0:
        m2 = _dropout_mask(rng, h2.shape, p.dropout)
        h2 = h2 * m2
    logits = h2 @ p.emb.T
    if return_cache:
        return logits, (x, a1, h1, m1, a2, h2, m2)
    return logits[0] if single else logits


def loss_and_grads(p: ModelParams, x: np.ndarray, y: np.ndarray, base_logits=None,
                   train_mode: bool = False, rng=None):
    """Mean cross-entropy over the batch and exact gradients."""
    y = np.asarray(y, dtype=np.int64)
    logits, cache = mlp_forward(x, p, train_mode=train_mode, rng=rng, return_cache=True)
    if base_logits is not None:
        logits = ensemble_logits(logits, np.asarray(base_logits, dtype=np.float64))
    xb, a1, h1, m1, a2, h2, m2 = cache
    n = xb.shape[0]
    probs = softmax(logits)
    nll = -np.log(probs[np.arange(n), y])
    loss = float(nll.mean())

    dz = probs.copy()
    dz[np.arange(n), y] -= 1.0
    dz /= n
    grads = {}
    if p.train_embedding:
        grads["emb"] = dz.T @ h2
    dh2 = dz @ p.emb
    dh2 = dh2 * m2
    da2 = dh2 * (a2 > 0)
    grads["w2"] = h1.T @ da2
    grads["b2"] = da2.sum(axis=0)
    dh1 = da2 @ p.w2.T
    dh1 = dh1 * m1
    da1 = dh1 * (a1 > 0)
    grads["w1"] = xb.T @ da1
    grads["b1"] = da1.sum(axis=0)
    return loss, grads


def backward(batch, p: ModelParams):
    """Gradients of mean batch cross-entropy, eval-mode (no dropout).

    batch is (x, y) or (x, y, base_logits).
    """
    x, y = batch[0], batch[1]
    base = batch[2] if len(batch) > 2 else None
    _, grads = loss_and_grads(p, x, y, base_logits=base, train_mode=False)
    return grads


class AdamWState:
    def __init__(self, params: dict[str, np.ndarray]):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               state: AdamWState, cfg: TrainConfig, t: int) -> None:
    """In-place decoupled-weight-decay Adam update with bias correction."""
    lr, b1, b2 = cfg.learning_rate, cfg.beta1, cfg.beta2
    for k, w in params.items():
        g = grads[k]
        state.m[k] = b1 * state.m[k] + (1 - b1) * g
        state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
        m_hat = state.m[k] / (1 - b1 ** t)
        v_hat = state.v[k] / (1 - b2 ** t)
        w -= lr * cfg.weight_decay * w
        w -= lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


@dataclass
class EncodedDataset:
    """Per-sentence encoded slices: ids aligned with (X, y) pairs."""
    sentence_ids: list[str]
    sentences: list[tuple[np.ndarray, np.ndarray]]  # (n_tokens x D, n_tokens)

    def __len__(self):
        return len(self.sentences)


class BaseLogitsSource:
    """Memory-mapped LGT1 file of per-token base-LM logits with a JSON index."""

    def __init__(self, path):
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != LGT_MAGIC:
                raise DataError(f"bad magic in {path}: {magic!r}")
            self.vocab_size, self.total_rows = struct.unpack("<II", fh.read(8))
        self.rows = np.memmap(path, dtype="<f4", mode="r", offset=12,
                              shape=(self.total_rows, self.vocab_size))
        with open(str(path) + ".index.json", encoding="utf-8") as fh:
            self.index = json.load(fh)

    def rows_for(self, sentence_id: str) -> np.ndarray:
        try:
            entry = self.index[sentence_id]
        except KeyError:
            raise AlignmentError(f"no base logits for sentence {sentence_id!r}") from None
        off, count = entry["offset"], entry["count"]
        return np.asarray(self.rows[off:off + count], dtype=np.float32)


def write_base_logits(path, vocab_size: int, sentences) -> None:
    """sentences: iterable of (sentence_id, rows array of shape (n, V))."""
    index = {}
    offset = 0
    with open(path, "wb") as fh:
        fh.write(LGT_MAGIC)
        fh.write(struct.pack("<II", vocab_size, 0))  # row count patched below
        for sid, rows in sentences:
            rows = np.asarray(rows, dtype="<f4")
            if rows.shape[1] != vocab_size:
                raise DataError(f"row length {rows.shape[1]} != vocab size {vocab_size}")
            fh.write(rows.tobytes())
            index[sid] = {"offset": offset, "count": int(rows.shape[0])}
            offset += rows.shape[0]
        fh.seek(8)
        fh.write(struct.pack("<I", offset))
    with open(str(path) + ".index.json", "w", encoding="utf-8") as fh:
        json.dump(index, fh, sort_keys=True)


def _dataset_nll(p: ModelParams, sentences, base: BaseLogitsSource | None, ids) -> float:
    total, count = 0.0, 0
    for sid, (x, y) in zip(ids, sentences):
        logits = mlp_forward(x, p, train_mode=False)
        if base is not None:
            rows = base.rows_for(sid)
            if rows.shape[0] != x.shape[0]:
                raise AlignmentError(f"sentence {sid!r}: {rows.shape[0]} base rows vs {x.shape[0]} tokens")
            logits = ensemble_logits(logits, rows.astype(np.float64))
        probs = softmax(logits)
        total += float(-np.log(probs[np.arange(len(y)), y]).sum())
        count += len(y)
    return total / max(count, 1)


@dataclass
class TrainResult:
    params: ModelParams
    log: list[dict]
    best_epoch: int


def train(dataset: EncodedDataset, base: BaseLogitsSource | None, cfg: TrainConfig,
          params: ModelParams | None = None, emb: np.ndarray | None = None) -> TrainResult:
    """Train the head, early-stopping on dev perplexity.

    The dev split is the last `dev_fraction` of sentences in corpus order;
    the snapshot with the best dev perplexity is returned.
    """
    if not dataset.sentences:
        raise DataError("empty training dataset")
    n = len(dataset.sentences)
    n_dev = max(1, int(n * cfg.dev_fraction)) if n > 1 else 0
    train_sents = dataset.sentences[: n - n_dev]
    train_ids = dataset.sentence_ids[: n - n_dev]
    dev_sents = dataset.sentences[n - n_dev:] or train_sents
    dev_ids = dataset.sentence_ids[n - n_dev:] or train_ids

    if params is None:
        if emb is None:
            raise ConfigError("train() needs either initialized params or an embedding matrix")
        params = init_params(train_sents[0][0].shape[1], emb, cfg)

    x_all = np.concatenate([x for x, _ in train_sents]).astype(np.float64)
    y_all = np.concatenate([y for _, y in train_sents])
    base_all = None
    if base is not None:
        rows = []
        for sid, (x, _) in zip(train_ids, train_sents):
            r = base.rows_for(sid)
            if r.shape[0] != x.shape[0]:
                raise AlignmentError(f"sentence {sid!r}: base logits misaligned")
            rows.append(r)
        base_all = np.concatenate(rows).astype(np.float64)

    rng = np.random.default_rng(cfg.seed)
    state = AdamWState(params.trainable())
    best = params.copy()
    best_ppl = float("inf")
    best_epoch = 0
    log = []
    t = 0
    n_rows = x_all.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n_rows)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n_rows, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = x_all[idx], y_all[idx]
            bb = base_all[idx] if base_all is not None else None
            loss, grads = loss_and_grads(params, xb, yb, base_logits=bb,
                                         train_mode=True, rng=rng)
            t += 1
            adamw_step(params.trainable(), grads, state, cfg, t)
            epoch_loss += loss
            n_batches += 1
        dev_nll = _dataset_nll(params, dev_sents, base, dev_ids)
        dev_ppl = float(np.exp(dev_nll))
        log.append({"epoch": epoch, "train_loss": epoch_loss / max(n_batches, 1),
                    "dev_ppl": dev_ppl})
        if dev_ppl < best_ppl:
            best_ppl = dev_ppl
            best = params.copy()
            best_epoch = epoch
    return TrainResult(params=best, log=log, best_epoch=best_epoch)


def save_checkpoint(path, params: ModelParams, meta: dict | None = None) -> None:
    tensors = {"w1": params.w1, "b1": params.b1, "w2": params.w2, "b2": params.b2,
               "emb": params.emb}
    header = {
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in tensors.items()],
        "meta": dict(meta or {}, dropout=params.dropout, train_embedding=params.train_embedding),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(blob)))
        fh.write(blob)
        for v in tensors.values():
            fh.write(np.asarray(v, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    with open(path, "rb") as fh:
        if fh.read(4) != CKPT_MAGIC:
            raise DataError(f"bad checkpoint magic in {path}")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != CKPT_VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        tensors = {}
        for spec in header["tensors"]:
            size = int(np.prod(spec["shape"])) if spec["shape"] else 1
            data = np.frombuffer(fh.read(size * 4), dtype="<f4").astype(np.float64)
            tensors[spec["name"]] = data.reshape(spec["shape"])
    meta = header["meta"]
    params = ModelParams(w1=tensors["w1"], b1=tensors["b1"], w2=tensors["w2"],
                         b2=tensors["b2"], emb=tensors["emb"],
                         dropout=meta.get("dropout", 0.2),
                         train_embedding=meta.get("train_embedding", False))
    return params, meta
