from .export import (EMB_MAGIC, LGT_MAGIC, ExportError, ExportManifest,
                     export_embeddings, export_incremental_logits,
                     export_tokenizer_tables, finetune_base, incremental_logits,
                     load_model_and_tokenizer, read_corpus, run_export)

__version__ = "0.1.0"

__all__ = [
    "EMB_MAGIC", "LGT_MAGIC", "ExportError", "ExportManifest",
    "export_embeddings", "export_incremental_logits", "export_tokenizer_tables",
    "finetune_base", "incremental_logits", "load_model_and_tokenizer",
    "read_corpus", "run_export", "__version__",
]
