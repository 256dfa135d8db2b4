"""End-to-end pipeline: ingest -> align -> slice -> encode -> train -> eval.

Every stage writes a cache file keyed by a content hash of its inputs, so
rerunning with an identical config reuses the caches and reproduces the
report byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import neural
from .encoding import EmbeddingTable, EncoderConfig, encode_sentence
from .errors import ConfigError, DataError
from .graphs import LabelVocabulary, ensure_nonempty_edges, read_mrp_file, validate_graph
from .metrics import evaluate, pos_breakdown, project_word_tags
from .perturb import PerturbSpec, perturb_corpus
from .slicing import DEFAULT_CAPACITIES, RelativeType, slice_sentence
from .tokenization import TokenizerTables, align_tokens_to_anchors, bbpe_tokenize


@dataclass
class PipelineConfig:
    train_graphs: str
    eval_graphs: str
    vocab: str
    merges: str
    embeddings: str
    out_dir: str
    base_logits: str | None = None
    tags: str | None = None  # word-level UPOS lines aligned with eval sentences
    capacities: dict[str, int] | None = None
    train: dict = field(default_factory=dict)
    perturb: dict | None = None
    threads: int = 1

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def validate_paths(self):
        for name in ("train_graphs", "eval_graphs", "vocab", "merges", "embeddings",
                     "base_logits", "tags"):
            path = getattr(self, name)
            if path is not None and not os.path.exists(path):
                raise ConfigError(f"{name} file does not exist: {path}")

    def encoder_capacities(self) -> dict[RelativeType, int]:
        caps = dict(DEFAULT_CAPACITIES)
        for name, value in (self.capacities or {}).items():
            caps[RelativeType(name)] = int(value)
        return caps

    def train_config(self) -> neural.TrainConfig:
        return neural.TrainConfig(**self.train)

    def perturb_spec(self) -> PerturbSpec | None:
        return PerturbSpec(**self.perturb) if self.perturb else None


def _hash_files(*paths) -> str:
    h = hashlib.sha256()
    for path in paths:
        if path is None:
            h.update(b"\0none")
            continue
        h.update(os.path.basename(str(path)).encode())
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


def _hash_config(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def load_and_prepare_graphs(path) -> list:
    graphs = [ensure_nonempty_edges(g) for g in read_mrp_file(path)]
    problems = []
    for g in graphs:
        report = validate_graph(g)
        if not report.ok:
            problems.append((g.id, [v.message for v in report.violations]))
    if problems:
        lines = "; ".join(f"{gid}: {msgs}" for gid, msgs in problems[:5])
        raise DataError(f"{len(problems)} invalid graphs ({lines} ...)")
    return graphs


def encode_corpus(graphs, tables: TokenizerTables, emb: EmbeddingTable,
                  labels: LabelVocabulary, capacities, threads: int = 1) -> neural.EncodedDataset:
    cfg = EncoderConfig(embedding_dim=emb.dim, num_labels=len(labels), capacities=dict(capacities))

    def one(g):
        tokens = bbpe_tokenize(g.text, tables)
        aligned = align_tokens_to_anchors(tokens, g)
        slices = slice_sentence(aligned)
        return encode_sentence(slices, tokens.ids(), cfg, emb, labels)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pairs = list(pool.map(one, graphs))
    else:
        pairs = [one(g) for g in graphs]
    return neural.EncodedDataset(sentence_ids=[g.id for g in graphs], sentences=pairs)


def save_encoded(path, dataset: neural.EncodedDataset) -> None:
    offsets = np.cumsum([0] + [len(y) for _, y in dataset.sentences])
    np.savez_compressed(
        path,
        x=np.concatenate([x for x, _ in dataset.sentences]),
        y=np.concatenate([y for _, y in dataset.sentences]),
        offsets=offsets,
        ids=np.array(dataset.sentence_ids),
    )


def load_encoded(path) -> neural.EncodedDataset:
    with np.load(path, allow_pickle=False) as data:
        x, y, offsets, ids = data["x"], data["y"], data["offsets"], data["ids"]
        sentences = [(x[offsets[k]:offsets[k + 1]], y[offsets[k]:offsets[k + 1]])
                     for k in range(len(ids))]
        return neural.EncodedDataset(sentence_ids=[str(s) for s in ids], sentences=sentences)


def _posteriors(params, dataset, base) -> tuple[np.ndarray, np.ndarray]:
    rows, golds = [], []
    for sid, (x, y) in zip(dataset.sentence_ids, dataset.sentences):
        logits = neural.mlp_forward(x, params, train_mode=False)
        if base is not None:
            logits = neural.ensemble_logits(logits, base.rows_for(sid).astype(np.float64))
        rows.append(neural.softmax(logits))
        golds.append(y)
    return np.concatenate(rows), np.concatenate(golds)


def _base_only_posteriors(dataset, base) -> tuple[np.ndarray, np.ndarray]:
    rows = [neural.softmax(base.rows_for(sid).astype(np.float64))
            for sid in dataset.sentence_ids]
    golds = np.concatenate([y for _, y in dataset.sentences])
    return np.concatenate(rows), golds


def _round_floats(obj, digits=10):
    if isinstance(obj, float):
        return round(obj, digits)
    if isinstance(obj, dict):
        return {k: _round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_round_floats(v, digits) for v in obj]
    return obj


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run all stages; returns the report dict (also written to disk)."""
    cfg.validate_paths()
    os.makedirs(cfg.out_dir, exist_ok=True)
    cache_dir = os.path.join(cfg.out_dir, "cache")
    os.makedirs(cache_dir, exist_ok=True)

    tables = TokenizerTables.load(cfg.vocab, cfg.merges)
    emb = EmbeddingTable.load(cfg.embeddings)
    train_graphs = load_and_prepare_graphs(cfg.train_graphs)
    eval_graphs = load_and_prepare_graphs(cfg.eval_graphs)
    labels = LabelVocabulary.from_graphs(train_graphs + eval_graphs)

    spec = cfg.perturb_spec()
    train_graphs = perturb_corpus(train_graphs, spec, "training")
    eval_graphs = perturb_corpus(eval_graphs, spec, "testing")

    input_hash = _hash_files(cfg.train_graphs, cfg.eval_graphs, cfg.vocab, cfg.merges,
                             cfg.embeddings, cfg.base_logits)
    stage_key = _hash_config({
        "inputs": input_hash,
        "capacities": {k.value: v for k, v in cfg.encoder_capacities().items()},
        "perturb": cfg.perturb,
    })

    caps = cfg.encoder_capacities()
    manifest = {"config_hash": stage_key, "stages": {}}

    train_cache = os.path.join(cache_dir, f"encoded-train-{stage_key[:16]}.npz")
    eval_cache = os.path.join(cache_dir, f"encoded-eval-{stage_key[:16]}.npz")
    if os.path.exists(train_cache) and os.path.exists(eval_cache):
        train_data = load_encoded(train_cache)
        eval_data = load_encoded(eval_cache)
        manifest["stages"]["encode"] = "cached"
    else:
        train_data = encode_corpus(train_graphs, tables, emb, labels, caps, cfg.threads)
        eval_data = encode_corpus(eval_graphs, tables, emb, labels, caps, cfg.threads)
        save_encoded(train_cache, train_data)
        save_encoded(eval_cache, eval_data)
        manifest["stages"]["encode"] = "computed"

    base = neural.BaseLogitsSource(cfg.base_logits) if cfg.base_logits else None
    train_cfg = cfg.train_config()

    train_key = _hash_config({"stage": stage_key, "train": cfg.train})
    ckpt_path = os.path.join(cfg.out_dir, "model.ckpt")
    ckpt_cache = os.path.join(cache_dir, f"model-{train_key[:16]}.ckpt")
    if os.path.exists(ckpt_cache):
        params, meta = neural.load_checkpoint(ckpt_cache)
        train_log = meta.get("log", [])
        manifest["stages"]["train"] = "cached"
    else:
        result = neural.train(train_data, base, train_cfg, emb=emb.matrix)
        params, train_log = result.params, result.log
        neural.save_checkpoint(ckpt_cache, params,
                               meta={"log": _round_floats(train_log), "seed": train_cfg.seed})
        manifest["stages"]["train"] = "computed"
    # float32 round-trip keeps report identical between cached and fresh runs
    params, _ = (neural.load_checkpoint(ckpt_cache))
    with open(ckpt_cache, "rb") as src, open(ckpt_path, "wb") as dst:
        dst.write(src.read())

    posteriors, golds = _posteriors(params, eval_data, base)
    report_obj = evaluate(posteriors, golds)
    report = {"metrics": report_obj.summary(), "train_log": train_log,
              "config_hash": stage_key, "seed": train_cfg.seed}

    if base is not None:
        base_post, base_golds = _base_only_posteriors(eval_data, base)
        report["base_only"] = evaluate(base_post, base_golds).summary()

    if cfg.tags:
        with open(cfg.tags, encoding="utf-8") as fh:
            tag_lines = [line.split() for line in fh.read().splitlines() if line.strip()]
        if len(tag_lines) != len(eval_graphs):
            raise DataError(f"{len(tag_lines)} tag lines for {len(eval_graphs)} eval sentences")
        token_tags = []
        for g, line in zip(eval_graphs, tag_lines):
            tokens = bbpe_tokenize(g.text, tables)
            token_tags.extend(project_word_tags(tokens, g.text, line))
        per_class, unknown = pos_breakdown(list(report_obj.tokens), token_tags)
        report["pos_breakdown"] = {cls: rep.summary() for cls, rep in per_class.items()}
        report["unknown_tags"] = unknown

    nll_path = os.path.join(cfg.out_dir, "eval.nll.txt")
    with open(nll_path, "w") as fh:
        for tok in report_obj.tokens:
            fh.write(f"{tok.nll:.12g}\n")

    report = _round_floats(report)
    report_path = os.path.join(cfg.out_dir, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)

    manifest["artifacts"] = {
        "report": os.path.basename(report_path),
        "checkpoint": os.path.basename(ckpt_path),
        "eval_nll": os.path.basename(nll_path),
        "checkpoint_sha256": _hash_files(ckpt_path),
        "report_sha256": _hash_files(report_path),
    }
    with open(os.path.join(cfg.out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
    return report
