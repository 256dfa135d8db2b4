"""Walkthrough: from a sentence and its graph to per-token slices.

Generates a tiny synthetic corpus, tokenizes one sentence with the
corpus-trained byte-level BPE tables, aligns tokens to graph anchors, and
prints the slice extracted for each token position.
"""

from slicelm import bbpe_tokenize, extract_slice
from slicelm.slicing import RelativeType
from slicelm.synth import build_tokenizer_tables, generate_synthetic_corpus
from slicelm.tokenization import align_tokens_to_anchors

# --- a sentence with its constituency graph -------------------------------
sentence = generate_synthetic_corpus(seed=7, n=3)[2]
print("text:       ", sentence.text)
print("gold tags:  ", " ".join(sentence.tags))

graph = sentence.constituency
print("graph nodes:", len(graph.nodes), " edges:", len(graph.edges))

# --- tokenize and align ----------------------------------------------------
tables = build_tokenizer_tables()
tokens = bbpe_tokenize(sentence.text, tables)
print("tokens:     ", [t.surface for t in tokens])

aligned = align_tokens_to_anchors(tokens, graph)
for i, a in enumerate(aligned.alignments):
    flag = " (unanalyzable)" if a.unanalyzable else ""
    print(f"  token {i}: anchor node {a.anchor_node}{flag}")

# --- slices -----------------------------------------------------------------
# A slice collects the anchor's graph neighbourhood (parents, siblings,
# grandparents, aunts, children, coparents), restricted to what is visible
# from tokens strictly before the one being predicted.
for i in range(len(tokens)):
    s = extract_slice(aligned, i)
    parts = []
    for rel_type in RelativeType:
        for r in s.relatives[rel_type]:
            masked = "*" if r.anchors_masked else ""
            parts.append(f"{rel_type.value}:{r.label}{masked}@{r.node}")
    print(f"slice at token {i} (anchor {s.anchor}): {', '.join(parts) or '<empty>'}")
