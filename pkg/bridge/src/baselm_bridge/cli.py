"""Command line entry point: slicelm-export."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .export import ExportError, ExportManifest, run_export


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="slicelm-export",
        description="Export tokenizer tables, embeddings, and incremental "
                    "logits from a causal language model.")
    p.add_argument("--model", required=True,
                   help="model name or local directory with model assets")
    p.add_argument("--corpus", default=None,
                   help="sentence file (plain lines or JSON lines with id/input)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--finetune", action="store_true",
                   help="finetune the model on the corpus before exporting logits")
    p.add_argument("--finetune-lr", type=float, default=1e-6)
    p.add_argument("--finetune-epochs", type=int, default=10)
    p.add_argument("--finetune-batch-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    manifest = ExportManifest(
        model=args.model, corpus=args.corpus, out_dir=args.out,
        finetune=args.finetune, finetune_lr=args.finetune_lr,
        finetune_epochs=args.finetune_epochs,
        finetune_batch_size=args.finetune_batch_size, seed=args.seed)
    try:
        run_export(manifest)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({name: info["sha256"] for name, info in manifest.files.items()},
                     indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
