"""Command-line interface.

Exit codes: 0 success, 1 data/input problems, 2 configuration problems.
Subcommands that produce multiple artifacts write them under an output
directory together with a small manifest JSON.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import neural, pipeline
from .encoding import (EmbeddingTable, EncoderConfig, SVC_MAGIC, encode_slice,
                       write_float32_matrix)
from .errors import ConfigError, SliceLMError
from .graphs import (LabelVocabulary, classify_framework, convert_ptb_node_labels,
                     ensure_nonempty_edges, read_mrp_file, validate_graph, write_mrp_file)
from .metrics import approx_randomization_test, evaluate, pos_breakdown
from .perturb import PHASES, PerturbSpec, perturb_corpus
from .slicing import DEFAULT_CAPACITIES, REL_ORDER, Relative, RelativeType, Slice, slice_sentence
from .synth import export_desk_corpus
from .tokenization import TokenizerTables, align_tokens_to_anchors, bbpe_tokenize


def _emit(obj, out=None):
    text = json.dumps(obj, sort_keys=True, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load_graphs(path, ptb=False):
    graphs = read_mrp_file(path)
    if ptb:
        graphs = [convert_ptb_node_labels(g) for g in graphs]
    return [ensure_nonempty_edges(g) for g in graphs]


def cmd_ingest(args):
    graphs = _load_graphs(args.graphs, ptb=args.ptb)
    bad = {}
    for g in graphs:
        report = validate_graph(g)
        if not report.ok:
            bad[g.id] = [v.message for v in report.violations]
    summary = {
        "graphs": len(graphs),
        "framework": classify_framework(graphs).value,
        "invalid": bad,
    }
    _emit(summary, args.out)
    if args.validate and bad:
        return 1
    return 0


def cmd_tokenize(args):
    tables = TokenizerTables.load(args.vocab, args.merges)
    if args.graphs:
        items = [(g.id, g.text) for g in read_mrp_file(args.graphs)]
    else:
        with open(args.text, encoding="utf-8") as fh:
            items = [(str(i), line) for i, line in enumerate(fh.read().splitlines())]
    out = sys.stdout if not args.out else open(args.out, "w", encoding="utf-8")
    try:
        for sid, text in items:
            tokens = bbpe_tokenize(text, tables)
            out.write(json.dumps({
                "id": sid,
                "tokens": [{"id": t.id, "surface": t.surface, "span": list(t.span)}
                           for t in tokens],
            }, sort_keys=True) + "\n")
    finally:
        if args.out:
            out.close()
    return 0


def _slice_to_json(s: Slice, gold: int) -> dict:
    return {
        "position": s.position,
        "anchor": s.anchor,
        "gold": gold,
        "context_token_ids": list(s.context_token_ids),
        "relatives": {
            rel.value: [{"node": r.node, "label": r.label, "masked": r.anchors_masked,
                         "token_ids": list(r.accessible_token_ids)}
                        for r in s.relatives[rel]]
            for rel in REL_ORDER
        },
    }


def _slice_from_json(obj) -> tuple[Slice, int]:
    relatives = {}
    for rel in REL_ORDER:
        rels = []
        for k, raw in enumerate(obj["relatives"].get(rel.value, [])):
            rels.append(Relative(
                node=raw["node"], rel_type=rel, label=raw["label"],
                discovery_index=k,
                accessible_token_ids=tuple(raw.get("token_ids", [])),
                anchors_masked=bool(raw.get("masked", False)),
            ))
        relatives[rel] = tuple(rels)
    s = Slice(position=obj["position"], anchor=obj.get("anchor"), relatives=relatives,
              context_token_ids=tuple(obj.get("context_token_ids", [])))
    return s, int(obj["gold"])


def cmd_slice(args):
    tables = TokenizerTables.load(args.vocab, args.merges)
    graphs = _load_graphs(args.graphs, ptb=args.ptb)
    out = sys.stdout if not args.out else open(args.out, "w", encoding="utf-8")
    try:
        for g in graphs:
            tokens = bbpe_tokenize(g.text, tables)
            aligned = align_tokens_to_anchors(tokens, g)
            slices = slice_sentence(aligned)
            out.write(json.dumps({
                "sentence": g.id,
                "slices": [_slice_to_json(s, tokens[i].id) for i, s in enumerate(slices)],
            }, sort_keys=True) + "\n")
    finally:
        if args.out:
            out.close()
    return 0


def _capacities(arg) -> dict[RelativeType, int]:
    caps = dict(DEFAULT_CAPACITIES)
    if arg:
        for name, value in json.loads(arg).items():
            caps[RelativeType(name)] = int(value)
    return caps


def cmd_encode(args):
    emb = EmbeddingTable.load(args.embeddings)
    with open(args.labels, encoding="utf-8") as fh:
        labels = LabelVocabulary(json.load(fh))
    caps = _capacities(args.capacities)
    cfg = EncoderConfig(embedding_dim=emb.dim, num_labels=len(labels), capacities=caps)

    ids, sent_x, sent_y = [], [], []
    with open(args.slices, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            pairs = [_slice_from_json(raw) for raw in obj["slices"]]
            x = np.stack([encode_slice(s, cfg, emb, labels).data for s, _ in pairs])
            ids.append(str(obj["sentence"]))
            sent_x.append(x.astype(np.float32))
            sent_y.append(np.array([g for _, g in pairs], dtype=np.int64))

    write_float32_matrix(args.out, SVC_MAGIC, np.concatenate(sent_x))
    if args.out_npz:
        dataset = neural.EncodedDataset(sentence_ids=ids,
                                        sentences=list(zip(sent_x, sent_y)))
        pipeline.save_encoded(args.out_npz, dataset)
    return 0


def cmd_train(args):
    dataset = pipeline.load_encoded(args.encoded)
    emb = EmbeddingTable.load(args.embeddings)
    base = neural.BaseLogitsSource(args.base_logits) if args.base_logits else None
    cfg = neural.TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                             learning_rate=args.learning_rate, seed=args.seed,
                             hidden_dim=args.hidden_dim, dropout=args.dropout,
                             train_embedding=args.train_embedding)
    result = neural.train(dataset, base, cfg, emb=emb.matrix)
    neural.save_checkpoint(args.out, result.params,
                           meta={"log": result.log, "seed": cfg.seed,
                                 "best_epoch": result.best_epoch})
    _emit({"checkpoint": args.out, "best_epoch": result.best_epoch, "log": result.log})
    return 0


def cmd_eval(args):
    params, _ = neural.load_checkpoint(args.checkpoint)
    dataset = pipeline.load_encoded(args.encoded)
    base = neural.BaseLogitsSource(args.base_logits) if args.base_logits else None
    posteriors, golds = pipeline._posteriors(params, dataset, base)
    report = evaluate(posteriors, golds)
    out = {"metrics": report.summary()}
    if args.pos_classes:
        with open(args.pos_classes, encoding="utf-8") as fh:
            tags = fh.read().split()
        per_class, unknown = pos_breakdown(list(report.tokens), tags)
        out["pos_breakdown"] = {cls: r.summary() for cls, r in per_class.items()}
        out["unknown_tags"] = unknown
    if args.nll_out:
        with open(args.nll_out, "w") as fh:
            for tok in report.tokens:
                fh.write(f"{tok.nll:.12g}\n")
    _emit(out, args.out)
    return 0


def cmd_ablate(args):
    spec = PerturbSpec(shuffle_labels=args.shuffle_labels,
                       shuffle_anchors=args.shuffle_anchors,
                       phase=args.phase, seed=args.seed)
    graphs = read_mrp_file(args.graphs)
    write_mrp_file(args.out, perturb_corpus(graphs, spec, spec.phase if spec.phase != "both"
                                            else "training"))
    return 0


def _read_scores(path):
    with open(path, encoding="utf-8") as fh:
        return [float(x) for x in fh.read().split()]


def cmd_sigtest(args):
    p = approx_randomization_test(_read_scores(args.a), _read_scores(args.b),
                                  shuffles=args.shuffles, seed=args.seed)
    _emit({"p_value": p, "shuffles": args.shuffles,
           "significant": p < args.alpha, "alpha": args.alpha}, args.out)
    return 0


def cmd_synth(args):
    paths = export_desk_corpus(args.out, n_train=args.n_train, n_eval=args.n_eval,
                               seed=args.seed, dim=args.dim)
    _emit(paths, os.path.join(args.out, "manifest.json"))
    return 0


def cmd_run(args):
    cfg = pipeline.PipelineConfig.from_file(args.config)
    if args.out:
        cfg.out_dir = args.out
    if args.threads:
        cfg.threads = args.threads
    report = pipeline.run_pipeline(cfg)
    _emit(report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slicelm")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and validate a graph file")
    p.add_argument("--graphs", required=True)
    p.add_argument("--validate", action="store_true")
    p.add_argument("--ptb", action="store_true",
                   help="move node labels onto incoming edges first")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("tokenize", help="byte-level BPE tokenization")
    p.add_argument("--vocab", required=True)
    p.add_argument("--merges", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--text", help="plain text, one sentence per line")
    group.add_argument("--graphs", help="graph file; tokenizes each sentence")
    p.add_argument("--out")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("slice", help="per-token graph slices as JSON lines")
    p.add_argument("--graphs", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--merges", required=True)
    p.add_argument("--ptb", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("encode", help="slices to fixed-length vectors (SVC1)")
    p.add_argument("--slices", required=True, help="output of the slice subcommand")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", required=True, help="JSON list of edge labels")
    p.add_argument("--capacities", help="JSON object of per-type capacity overrides")
    p.add_argument("--out", required=True)
    p.add_argument("--out-npz", help="also write a trainable dataset archive")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="train the emission head")
    p.add_argument("--encoded", required=True, help="dataset archive from encode --out-npz")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--base-logits")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--learning-rate", type=float, default=1e-4)
    p.add_argument("--hidden-dim", type=int, default=1024)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--train-embedding", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on an encoded dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--encoded", required=True)
    p.add_argument("--base-logits")
    p.add_argument("--pos-classes", help="one UPOS tag per token, whitespace-separated")
    p.add_argument("--nll-out", help="write per-token negative log likelihoods")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="write a perturbed copy of a graph file")
    p.add_argument("--graphs", required=True)
    p.add_argument("--shuffle-labels", action="store_true")
    p.add_argument("--shuffle-anchors", action="store_true")
    p.add_argument("--phase", choices=PHASES, default="both")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sigtest", help="paired approximate randomization test")
    p.add_argument("--a", required=True, help="per-token scores, one per line")
    p.add_argument("--b", required=True)
    p.add_argument("--shuffles", type=int, default=10_000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sigtest)

    p = sub.add_parser("synth", help="generate a self-contained synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", type=int, default=400)
    p.add_argument("--n-eval", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=32)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="run the full pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the config's output directory")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SliceLMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
