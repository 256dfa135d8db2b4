"""Graph-conditioned next-token prediction toolkit.

Parses anchored semantic/syntactic graphs, aligns them with byte-level BPE
tokens, extracts per-token graph slices, encodes them as fixed-length
vectors, and trains a tied-embedding MLP head whose logits ensemble with a
base language model.
"""

from .errors import (AlignmentError, ConfigError, DataError, EmptyGraphError,
                     MrpParseError, NotATreeError, NumericError, SchemaError,
                     SliceLMError, TokenizerTableError, VocabularyError)
from .graphs import (Edge, FrameworkClass, Graph, LabelVocabulary, Node,
                     classify_framework, convert_ptb_node_labels,
                     ensure_nonempty_edges, parse_mrp_line, read_mrp_file,
                     serialize_graph, validate_graph, write_mrp_file)
from .tokenization import (TokenizerTables, TokenSequence, align_tokens_to_anchors,
                           bbpe_tokenize, detokenize, select_anchor_node)
from .slicing import (DEFAULT_CAPACITIES, REL_ORDER, Relative, RelativeType, Slice,
                      extract_slice, slice_sentence)
from .encoding import (EmbeddingTable, EncoderConfig, SlotLayout, encode_sentence,
                       encode_slice, slot_layout, vector_dim)
from .neural import (BaseLogitsSource, EncodedDataset, ModelParams, TrainConfig,
                     TrainResult, ensemble_logits, init_params, load_checkpoint,
                     mlp_forward, save_checkpoint, softmax, train, write_base_logits)
from .metrics import (EvalReport, TokenEval, approx_randomization_test, evaluate,
                      merge_pos_tag, multi_seed_significant, pos_breakdown,
                      project_word_tags)
from .perturb import PerturbSpec, perturb_corpus, perturb_graph
from .pipeline import PipelineConfig, run_pipeline
from .synth import (BigramLM, build_embedding_table, build_tokenizer_tables,
                    export_desk_corpus, generate_synthetic_corpus)

__version__ = "0.1.0"
