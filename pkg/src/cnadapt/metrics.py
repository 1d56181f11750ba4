"""Perplexity and content-word constrained perplexity.

Both follow the base-10 convention: PPL = 10^(-(1/|C|) sum log10 p(w_i)).
The constrained form keeps only reference tokens whose corpus count is at
most a threshold, and normalizes by the number of kept tokens, so it
isolates how well the model covers low-frequency (content) words.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary
from .errors import EvaluationError, ValidationError
from .topics import UNK_WORD


@dataclass(frozen=True)
class ReferenceCorpus:
    tokens: tuple
    counts: dict

    def __post_init__(self):
        recount = {}
        for w in self.tokens:
            recount[w] = recount.get(w, 0) + 1
        if recount != self.counts:
            raise ValidationError("stored counts disagree with tokens")

    @classmethod
    def from_tokens(cls, tokens) -> "ReferenceCorpus":
        tokens = tuple(tokens)
        counts = {}
        for w in tokens:
            counts[w] = counts.get(w, 0) + 1
        return cls(tokens, counts)


def load_reference(path, vocab: Vocabulary) -> ReferenceCorpus:
    """Whitespace-tokenized transcript, one utterance per line.

    Out-of-vocabulary tokens map to the unknown-word entry; if the model
    vocabulary has none, evaluation cannot proceed.
    """
    ids = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            for tok in line.split():
                if tok in vocab:
                    ids.append(vocab.id(tok))
                elif UNK_WORD in vocab:
                    ids.append(vocab.id(UNK_WORD))
                else:
                    raise EvaluationError(
                        f"token {tok!r} not covered: vocabulary has no {UNK_WORD!r}"
                    )
    if not ids:
        raise EvaluationError(f"reference file {path} has no tokens")
    return ReferenceCorpus.from_tokens(ids)


def _score(probs: np.ndarray, tokens, vocab: Vocabulary | None) -> float:
    total = 0.0
    for w in tokens:
        p = probs[w]
        if p <= 0.0:
            name = vocab.word(w) if vocab is not None else f"id {w}"
            raise EvaluationError(f"model assigns zero probability to token {name}")
        total += np.log10(p)
    return 10.0 ** (-total / len(tokens))


def perplexity(probs, corpus: ReferenceCorpus, vocab: Vocabulary | None = None) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    if not corpus.tokens:
        raise EvaluationError("empty reference corpus")
    return _score(probs, corpus.tokens, vocab)


def constrained_perplexity(
    probs, corpus: ReferenceCorpus, thr: int, vocab: Vocabulary | None = None
) -> float:
    """Perplexity over tokens occurring at most ``thr`` times in the corpus;
    the exponent normalizer counts qualifying tokens only.
    """
    if thr < 1:
        raise ValidationError(f"thr {thr!r} < 1")
    probs = np.asarray(probs, dtype=np.float64)
    kept = [w for w in corpus.tokens if corpus.counts[w] <= thr]
    if not kept:
        raise EvaluationError(f"no reference tokens with count <= {thr}")
    return _score(probs, kept, vocab)
