"""Walkthrough: train the slice-conditioned head and compare against the
base language model alone.

Everything is synthetic and seeded, so the numbers are reproducible. The
final comparison uses the paired approximate-randomization test on
per-token negative log probabilities.
"""

import tempfile
from pathlib import Path

import numpy as np

from slicelm import (BaseLogitsSource, EmbeddingTable, LabelVocabulary,
                     TokenizerTables, TrainConfig, approx_randomization_test,
                     ensemble_logits, evaluate, mlp_forward, read_mrp_file, softmax,
                     train)
from slicelm.graphs import ensure_nonempty_edges
from slicelm.pipeline import encode_corpus
from slicelm.slicing import DEFAULT_CAPACITIES
from slicelm.synth import export_desk_corpus

work = Path(tempfile.mkdtemp(prefix="slicelm-demo-"))
paths = export_desk_corpus(work, n_train=800, n_eval=150, seed=11, dim=32)

# --- load the exported artifacts -------------------------------------------
tables = TokenizerTables.load(paths["vocab"], paths["merges"])
emb = EmbeddingTable.load(paths["embeddings"])
base = BaseLogitsSource(paths["base_logits"])
train_graphs = [ensure_nonempty_edges(g) for g in read_mrp_file(paths["train_const"])]
eval_graphs = [ensure_nonempty_edges(g) for g in read_mrp_file(paths["eval_const"])]
labels = LabelVocabulary.from_graphs(train_graphs + eval_graphs)
print(f"vocab {tables.size}, {len(labels)} edge labels, "
      f"{len(train_graphs)} train / {len(eval_graphs)} eval sentences")

# --- encode and train -------------------------------------------------------
train_data = encode_corpus(train_graphs, tables, emb, labels, DEFAULT_CAPACITIES)
eval_data = encode_corpus(eval_graphs, tables, emb, labels, DEFAULT_CAPACITIES)
cfg = TrainConfig(epochs=3, batch_size=32, learning_rate=3e-4, hidden_dim=128, seed=0)
result = train(train_data, base, cfg, emb=emb.matrix)
print(f"trained; best epoch {result.best_epoch}")


def token_nll(params):
    out = []
    for sid, (x, y) in zip(eval_data.sentence_ids, eval_data.sentences):
        logits = base.rows_for(sid).astype(np.float64)
        if params is not None:
            logits = ensemble_logits(mlp_forward(x, params), logits)
        probs = softmax(logits)
        out.append(-np.log(probs[np.arange(len(y)), y]))
    return np.concatenate(out)


def report(params, name):
    posts, golds = [], []
    for sid, (x, y) in zip(eval_data.sentence_ids, eval_data.sentences):
        logits = base.rows_for(sid).astype(np.float64)
        if params is not None:
            logits = ensemble_logits(mlp_forward(x, params), logits)
        posts.append(softmax(logits))
        golds.append(y)
    r = evaluate(np.concatenate(posts), np.concatenate(golds))
    print(f"{name:>10}: ppl {r.ppl:7.3f}  acc {r.accuracy:.3f}  mrr {r.mrr:.3f}")
    return r


# --- compare -----------------------------------------------------------------
report(None, "base only")
report(result.params, "ensemble")
p = approx_randomization_test(token_nll(result.params), token_nll(None),
                              shuffles=1000, seed=0)
print(f"paired randomization test: p = {p:.4f}")
