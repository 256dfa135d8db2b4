"""Walkthrough: what happens when the graph structure is noise?

Shuffling node anchors within each graph keeps every label and every span
in play but destroys their correspondence. Applying the shuffle only at
test time should hurt a model trained on real structure; applying it at
train and test time should push the ensemble back toward the base LM.
"""

import tempfile
from pathlib import Path

import numpy as np

from slicelm import (BaseLogitsSource, EmbeddingTable, LabelVocabulary, PerturbSpec,
                     TokenizerTables, TrainConfig, ensemble_logits, evaluate,
                     mlp_forward, perturb_corpus, read_mrp_file, softmax, train)
from slicelm.graphs import ensure_nonempty_edges
from slicelm.pipeline import encode_corpus
from slicelm.slicing import DEFAULT_CAPACITIES
from slicelm.synth import export_desk_corpus

work = Path(tempfile.mkdtemp(prefix="slicelm-ablate-"))
paths = export_desk_corpus(work, n_train=800, n_eval=150, seed=11, dim=32)

tables = TokenizerTables.load(paths["vocab"], paths["merges"])
emb = EmbeddingTable.load(paths["embeddings"])
base = BaseLogitsSource(paths["base_logits"])
train_graphs = [ensure_nonempty_edges(g) for g in read_mrp_file(paths["train_const"])]
eval_graphs = [ensure_nonempty_edges(g) for g in read_mrp_file(paths["eval_const"])]
labels = LabelVocabulary.from_graphs(train_graphs + eval_graphs)

spec = PerturbSpec(shuffle_anchors=True, phase="both", seed=99)
variants = {
    "full": (train_graphs, eval_graphs),
    "test shuffle": (train_graphs, perturb_corpus(eval_graphs, spec, "testing")),
    "both shuffle": (perturb_corpus(train_graphs, spec, "training"),
                     perturb_corpus(eval_graphs, spec, "testing")),
}

cfg = TrainConfig(epochs=3, batch_size=32, learning_rate=3e-4, hidden_dim=128, seed=0)
enc = lambda gs: encode_corpus(gs, tables, emb, labels, DEFAULT_CAPACITIES)


def ppl(params, eval_data):
    posts, golds = [], []
    for sid, (x, y) in zip(eval_data.sentence_ids, eval_data.sentences):
        logits = base.rows_for(sid).astype(np.float64)
        if params is not None:
            logits = ensemble_logits(mlp_forward(x, params), logits)
        posts.append(softmax(logits))
        golds.append(y)
    return evaluate(np.concatenate(posts), np.concatenate(golds)).ppl


print(f"{'base only':>13}: ppl {ppl(None, enc(eval_graphs)):7.3f}")

full_model = None
for name, (tr, ev) in variants.items():
    if name == "test shuffle":
        params = full_model  # reuse the model trained on real structure
    else:
        params = train(enc(tr), base, cfg, emb=emb.matrix).params
        if name == "full":
            full_model = params
    print(f"{name:>13}: ppl {ppl(params, enc(ev)):7.3f}")
