"""Token-level evaluation metrics, POS breakdowns, significance testing.

Perplexity follows the exponentiate-last convention: exp of the corpus
mean negative log probability, never an average of per-token perplexities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

_POS_MERGES = {
    "NOUN": "noun", "PROPN": "noun",
    "ADJ": "mod", "ADV": "mod",
    "INTJ": "misc", "SYM": "misc", "X": "misc",
}
_KNOWN_TAGS = {"VERB", "AUX", "ADP", "PART", "SCONJ", "CCONJ", "DET", "PRON", "NUM", "PUNCT"}


@dataclass(frozen=True)
class TokenEval:
    nll: float  # -ln p(gold), nats
    entropy: float  # posterior entropy, nats
    correct: bool  # top-1 == gold (ties broken by lowest token id)
    top1_prob: float
    reciprocal_rank: float
    pos_class: str | None = None


@dataclass(frozen=True)
class EvalReport:
    ppl: float
    entropy: float
    accuracy: float  # fraction in [0, 1]
    confidence: float  # mean top-1 probability
    mrr: float
    n_tokens: int
    tokens: tuple[TokenEval, ...] = ()

    def summary(self) -> dict:
        return {"ppl": self.ppl, "entropy": self.entropy, "accuracy": self.accuracy,
                "confidence": self.confidence, "mrr": self.mrr, "n_tokens": self.n_tokens}


def _aggregate(tokens) -> EvalReport:
    tokens = tuple(tokens)
    if not tokens:
        return EvalReport(float("nan"), float("nan"), float("nan"), float("nan"),
                          float("nan"), 0, ())
    nll = np.array([t.nll for t in tokens])
    return EvalReport(
        ppl=float(np.exp(nll.mean())),
        entropy=float(np.mean([t.entropy for t in tokens])),
        accuracy=float(np.mean([t.correct for t in tokens])),
        confidence=float(np.mean([t.top1_prob for t in tokens])),
        mrr=float(np.mean([t.reciprocal_rank for t in tokens])),
        n_tokens=len(tokens),
        tokens=tokens,
    )


def evaluate(posteriors, golds, pos_classes=None) -> EvalReport:
    """Micro-averaged PPL/H/Acc/Conf/MRR over tokens.

    posteriors: (N, V) array of normalized distributions; golds: N token ids.
    """
    posteriors = np.asarray(posteriors, dtype=np.float64)
    golds = np.asarray(golds, dtype=np.int64)
    if posteriors.shape[0] != golds.shape[0]:
        raise DataError("posteriors and golds have different lengths")
    sums = posteriors.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise DataError("unnormalized posterior distribution")

    tokens = []
    for i in range(posteriors.shape[0]):
        p = posteriors[i]
        gold = golds[i]
        gold_p = p[gold]
        top = int(np.argmax(p))  # argmax returns the lowest index on ties
        with np.errstate(divide="ignore", invalid="ignore"):
            plogp = np.where(p > 0, p * np.log(p), 0.0)
        rank = 1 + int(np.sum(p > gold_p))
        tokens.append(TokenEval(
            nll=float(-np.log(gold_p)),
            entropy=float(-plogp.sum()),
            correct=top == gold,
            top1_prob=float(p[top]),
            reciprocal_rank=1.0 / rank,
            pos_class=pos_classes[i] if pos_classes is not None else None,
        ))
    return _aggregate(tokens)


def merge_pos_tag(tag: str) -> tuple[str, bool]:
    """Map a UPOS tag to its evaluation class; second value flags unknowns."""
    if tag in _POS_MERGES:
        return _POS_MERGES[tag], False
    if tag in _KNOWN_TAGS:
        return tag.lower(), False
    return "misc", True


def pos_breakdown(evals, tags) -> tuple[dict[str, EvalReport], int]:
    """Per-POS-class sub-reports. Returns (class -> report, unknown-tag count)."""
    if len(evals) != len(tags):
        raise DataError("tag list not aligned with token evals")
    buckets: dict[str, list[TokenEval]] = {}
    warnings = 0
    for ev, tag in zip(evals, tags):
        cls, unknown = merge_pos_tag(tag)
        warnings += unknown
        buckets.setdefault(cls, []).append(ev)
    return {cls: _aggregate(toks) for cls, toks in sorted(buckets.items())}, warnings


def project_word_tags(tokens, text: str, word_tags) -> list[str]:
    """Spread word-level tags onto BPE tokens.

    A token takes the tag of the word containing its first non-space byte;
    continuation tokens inherit their word's tag.
    """
    from .graphs import word_spans

    spans = word_spans(text)
    if len(spans) != len(word_tags):
        raise DataError(f"{len(word_tags)} tags for {len(spans)} words")
    out = []
    last = word_tags[0] if word_tags else "X"
    for tok in tokens:
        f, t = tok.span
        tag = None
        for (wf, wt), wtag in zip(spans, word_tags):
            if max(f, wf) < min(t, wt):
                tag = wtag
                break
        if tag is None:
            tag = last  # whitespace-only token
        out.append(tag)
        last = tag
    return out


def approx_randomization_test(scores_a, scores_b, shuffles: int = 10_000,
                              seed: int = 0, chunk: int = 256) -> float:
    """Paired sign-flip randomization p-value for |mean(a) - mean(b)|."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError("score arrays have different lengths")
    if shuffles < 1:
        raise DataError("at least one shuffle required")
    d = a - b
    observed = abs(d.mean())
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < shuffles:
        n = min(chunk, shuffles - done)
        signs = rng.integers(0, 2, size=(n, d.size)) * 2 - 1
        stats = np.abs((signs * d).mean(axis=1))
        hits += int(np.sum(stats >= observed))
        done += n
    return (hits + 1) / (shuffles + 1)


def multi_seed_significant(pairs, alpha: float, shuffles: int = 10_000, seed: int = 0):
    """Significance across seeds: every paired run must reach p < alpha.

    pairs: list of (scores_a, scores_b), one per model seed.
    Returns (significant, list of p-values).
    """
    pvalues = [approx_randomization_test(a, b, shuffles=shuffles, seed=seed + k)
               for k, (a, b) in enumerate(pairs)]
    return all(p < alpha for p in pvalues), pvalues
