"""One-shot exporter from a causal LM to the slice-LM file formats.

Emits the tokenizer tables (vocab.json + merges.txt), the input-embedding
matrix (EMB1), and per-token incremental logits (LGT1 + JSON index), plus a
manifest recording settings and a SHA-256 hash of every file written.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

log = logging.getLogger(__name__)

EMB_MAGIC = b"EMB1"
LGT_MAGIC = b"LGT1"


class ExportError(Exception):
    pass


@dataclass
class ExportManifest:
    model: str
    out_dir: str
    corpus: str | None = None
    vocab_size: int | None = None
    embedding_dim: int | None = None
    finetune: bool = False
    finetune_lr: float = 1e-6
    finetune_epochs: int = 10
    finetune_batch_size: int = 8
    seed: int = 0
    files: dict[str, dict] = field(default_factory=dict)

    def record(self, name: str, path: Path) -> None:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.files[name] = {"path": str(path), "sha256": digest}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)


def load_model_and_tokenizer(name_or_path: str):
    from transformers import AutoModelForCausalLM, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(name_or_path)
        model = AutoModelForCausalLM.from_pretrained(name_or_path)
    except OSError as exc:
        raise ExportError(f"cannot load model assets from {name_or_path!r}: {exc}") from exc
    model.eval()
    return model, tokenizer


def _source_table_paths(tokenizer) -> tuple[Path, Path]:
    kwargs = getattr(tokenizer, "init_kwargs", {}) or {}
    vocab = kwargs.get("vocab_file") or getattr(tokenizer, "vocab_file", None)
    merges = kwargs.get("merges_file") or getattr(tokenizer, "_merges", None)
    if not vocab or not merges:
        raise ExportError("cannot locate the tokenizer's vocab/merges source files")
    return Path(vocab), Path(merges)


def export_tokenizer_tables(tokenizer, manifest: ExportManifest) -> tuple[Path, Path]:
    """Copy the tokenizer's vocab and ranked merges in their native formats."""
    import shutil

    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    src_vocab, src_merges = _source_table_paths(tokenizer)
    vocab_path = out / "vocab.json"
    merges_path = out / "merges.txt"
    shutil.copyfile(src_vocab, vocab_path)
    shutil.copyfile(src_merges, merges_path)
    with open(vocab_path, encoding="utf-8") as fh:
        manifest.vocab_size = len(json.load(fh))
    manifest.record("vocab", vocab_path)
    manifest.record("merges", merges_path)
    return vocab_path, merges_path


def export_embeddings(model, manifest: ExportManifest) -> Path:
    """Write the input-embedding matrix as an EMB1 float32 file."""
    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    matrix = model.get_input_embeddings().weight.detach().cpu().numpy()
    if manifest.vocab_size is not None and matrix.shape[0] != manifest.vocab_size:
        raise ExportError(
            f"embedding rows {matrix.shape[0]} != tokenizer vocab {manifest.vocab_size}")
    manifest.embedding_dim = int(matrix.shape[1])
    path = out / "embeddings.emb"
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<II", matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.astype("<f4").tobytes())
    manifest.record("embeddings", path)
    return path


def read_corpus(path) -> list[tuple[str, str]]:
    """(sentence id, text) pairs: JSON lines with id/input, or plain lines."""
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for k, line in enumerate(fh):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            sid, text = f"line-{k}", line
            if line.lstrip().startswith("{"):
                try:
                    obj = json.loads(line)
                    sid, text = str(obj["id"]), obj["input"]
                except (json.JSONDecodeError, KeyError):
                    pass
            sentences.append((sid, text))
    if not sentences:
        raise ExportError(f"corpus {path} is empty")
    return sentences


def incremental_logits(model, tokenizer, text: str) -> np.ndarray:
    """Row i: the model's logits for token i given tokens < i.

    Row 0 is computed from the beginning-of-text state, so each sentence is
    scored independently of its neighbours.
    """
    ids = tokenizer.encode(text)
    if not ids:
        raise ExportError(f"sentence tokenizes to nothing: {text!r}")
    bos = tokenizer.bos_token_id
    if bos is None:
        bos = tokenizer.eos_token_id
    inputs = [bos] + ids[:-1]
    limit = int(model.config.max_position_embeddings)
    if len(inputs) > limit:
        raise ExportError(
            f"sentence has {len(ids)} tokens, over the model context of {limit}; "
            "refusing to truncate")
    with torch.no_grad():
        out = model(torch.tensor([inputs], dtype=torch.long))
    return out.logits[0].to(torch.float32).cpu().numpy()


def export_incremental_logits(model, tokenizer, sentences, manifest: ExportManifest) -> Path:
    """Write one LGT1 logits row per corpus token, plus the sentence index."""
    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "base.lgt"
    vocab = int(model.config.vocab_size)
    index = {}
    offset = 0
    with open(path, "wb") as fh:
        fh.write(LGT_MAGIC)
        fh.write(struct.pack("<II", vocab, 0))  # row count patched below
        for sid, text in sentences:
            rows = incremental_logits(model, tokenizer, text)
            fh.write(rows.astype("<f4").tobytes())
            index[sid] = {"offset": offset, "count": int(rows.shape[0])}
            offset += rows.shape[0]
        fh.seek(8)
        fh.write(struct.pack("<I", offset))
    with open(str(path) + ".index.json", "w", encoding="utf-8") as fh:
        json.dump(index, fh, sort_keys=True)
    manifest.record("base_logits", path)
    manifest.record("base_logits_index", Path(str(path) + ".index.json"))
    return path


def finetune_base(model, tokenizer, sentences, manifest: ExportManifest):
    """Causal-LM finetuning; dev = last 10% of sentences, early stopping.

    Keeps the best-dev snapshot. Aborts if the loss turns non-finite.
    """
    torch.manual_seed(manifest.seed)
    n_dev = max(1, len(sentences) // 10)
    train_set = sentences[:-n_dev] or sentences
    dev_set = sentences[-n_dev:]

    def batch_loss(batch):
        losses = []
        for _, text in batch:
            ids = tokenizer.encode(text)
            bos = tokenizer.bos_token_id or tokenizer.eos_token_id
            x = torch.tensor([[bos] + ids], dtype=torch.long)
            out = model(x, labels=x)
            losses.append(out.loss)
        return torch.stack(losses).mean()

    def dev_loss():
        model.eval()
        with torch.no_grad():
            return float(batch_loss(dev_set))

    optim = torch.optim.AdamW(model.parameters(), lr=manifest.finetune_lr)
    best = dev_loss()
    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    bs = manifest.finetune_batch_size
    for epoch in range(manifest.finetune_epochs):
        model.train()
        for k in range(0, len(train_set), bs):
            optim.zero_grad()
            loss = batch_loss(train_set[k:k + bs])
            if not torch.isfinite(loss):
                log.error("non-finite training loss at epoch %d; aborting", epoch)
                raise ExportError("finetuning diverged (non-finite loss)")
            loss.backward()
            optim.step()
        current = dev_loss()
        log.info("epoch %d dev loss %.6f", epoch, current)
        if current < best:
            best = current
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        else:
            log.info("dev loss stopped improving; early stop at epoch %d", epoch)
            break
    model.load_state_dict(best_state)
    model.eval()
    return model


def run_export(manifest: ExportManifest) -> ExportManifest:
    """Full export: tables, embeddings, optional finetune, logits, manifest."""
    model, tokenizer = load_model_and_tokenizer(manifest.model)
    export_tokenizer_tables(tokenizer, manifest)
    export_embeddings(model, manifest)
    if manifest.corpus is not None:
        sentences = read_corpus(manifest.corpus)
        if manifest.finetune:
            model = finetune_base(model, tokenizer, sentences, manifest)
            export_embeddings(model, manifest)  # refresh post-finetune weights
        export_incremental_logits(model, tokenizer, sentences, manifest)
    manifest_path = Path(manifest.out_dir) / "manifest.json"
    manifest.save(manifest_path)
    return manifest
