"""Topic-conditional unigram distributions and their mixtures.

A topic model is a row-stochastic matrix: one smoothed unigram distribution
per topic over a shared vocabulary.  A conversation-level mixture is a
simplex weight vector, kept alongside its softmax parameters because the
confusion-aware estimators update the weights multiplicatively in that
parameterization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary
from .errors import ParseError, TrainingError, ValidationError

PROB_FLOOR = 1e-10
ROW_SUM_TOL = 1e-9
UNK_WORD = "<unk>"


def floor_and_normalize(rows: np.ndarray) -> np.ndarray:
    """Clamp probabilities to PROB_FLOOR and renormalize each row.

    The final clamp keeps every entry at or above the floor even after the
    division; it perturbs row sums by at most V^2 * floor^2, far inside the
    row-sum tolerance for any realistic vocabulary.
    """
    rows = np.maximum(np.asarray(rows, dtype=np.float64), PROB_FLOOR)
    rows = rows / rows.sum(axis=-1, keepdims=True)
    return np.maximum(rows, PROB_FLOOR)


class TopicModel:
    """T smoothed unigram distributions over a shared vocabulary."""

    def __init__(self, labels, vocab: Vocabulary, probs: np.ndarray):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 2 or probs.shape != (len(labels), len(vocab)):
            raise ValidationError(
                f"probs shape {probs.shape} does not match {len(labels)} topics "
                f"x {len(vocab)} words"
            )
        if len(set(labels)) != len(labels):
            raise ValidationError("duplicate topic labels")
        if np.any(probs < PROB_FLOOR * (1 - 1e-12)):
            raise ValidationError("topic probabilities below floor")
        sums = probs.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            raise ValidationError(f"topic rows do not sum to 1: {sums}")
        self.labels = list(labels)
        self.vocab = vocab
        self.probs = probs

    @property
    def num_topics(self) -> int:
        return len(self.labels)


def mu_to_lambda(mu) -> np.ndarray:
    """Stable softmax; shift-invariant, output strictly positive for finite mu."""
    mu = np.asarray(mu, dtype=np.float64)
    shifted = mu - np.max(mu)
    e = np.exp(shifted)
    return e / e.sum()


class MixtureWeights:
    """Simplex weights over topics plus their softmax preimage."""

    def __init__(self, lam, mu=None):
        lam = np.asarray(lam, dtype=np.float64)
        if np.any(lam < 0) or abs(lam.sum() - 1.0) > ROW_SUM_TOL:
            raise ValidationError(f"weights not on the simplex: {lam}")
        if mu is None:
            with np.errstate(divide="ignore"):
                mu = np.log(lam)
        else:
            mu = np.asarray(mu, dtype=np.float64)
            if np.max(np.abs(mu_to_lambda(mu) - lam)) > 1e-12:
                raise ValidationError("mu is not a softmax preimage of lambda")
        self.lam = lam
        self.mu = mu

    @classmethod
    def from_mu(cls, mu) -> "MixtureWeights":
        mu = np.asarray(mu, dtype=np.float64)
        return cls(mu_to_lambda(mu), mu)

    @classmethod
    def uniform(cls, num_topics: int) -> "MixtureWeights":
        return cls.from_mu(np.zeros(num_topics))

    def __repr__(self):
        return f"MixtureWeights({self.lam!r})"


def train_topic_model(labeled_corpus, vocab: Vocabulary) -> TopicModel:
    """Estimate one Witten-Bell-smoothed unigram distribution per topic.

    ``labeled_corpus`` yields (topic label, token sequence) pairs; pairs
    sharing a label are pooled.  For a topic with N tokens and W distinct
    words over a vocabulary with U unseen words, a seen word w gets
    c(w)/(N+W) and the reserved mass W/(N+W) is split uniformly over the U
    unseen words (plain c(w)/N when U is zero).  Rows are floored and
    renormalized so every word keeps nonzero probability.
    """
    vocab.add(UNK_WORD)
    labels = []
    counts = {}
    for label, tokens in labeled_corpus:
        if label not in counts:
            labels.append(label)
            counts[label] = {}
        c = counts[label]
        for tok in tokens:
            wid = vocab.add(tok)
            c[wid] = c.get(wid, 0) + 1
    if not labels:
        raise TrainingError("no topics in training corpus")
    for label in labels:
        if not counts[label]:
            raise TrainingError(f"topic {label!r} has no tokens")

    V = len(vocab)
    rows = np.empty((len(labels), V), dtype=np.float64)
    for t, label in enumerate(labels):
        c = counts[label]
        n_tokens = sum(c.values())
        n_seen = len(c)
        n_unseen = V - n_seen
        row = np.zeros(V)
        if n_unseen > 0:
            denom = n_tokens + n_seen
            row[:] = (n_seen / denom) / n_unseen
            for wid, cnt in c.items():
                row[wid] = cnt / denom
        else:
            for wid, cnt in c.items():
                row[wid] = cnt / n_tokens
        rows[t] = row
    return TopicModel(labels, vocab, floor_and_normalize(rows))


def mixture_prob(tm: TopicModel, weights: MixtureWeights, wid: int) -> float:
    """Mixture probability of one word: sum_t lambda_t q(w|t)."""
    return float(weights.lam @ tm.probs[:, wid])


def mixture_distribution(tm: TopicModel, weights: MixtureWeights) -> np.ndarray:
    """Dense mixture unigram over the whole vocabulary."""
    return weights.lam @ tm.probs


def save_topic_model(tm: TopicModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"TOPICS {tm.num_topics} {len(tm.vocab)}\n")
        words = tm.vocab.words
        for t, label in enumerate(tm.labels):
            fh.write(f"TOPIC {label}\n")
            row = tm.probs[t]
            for wid, word in enumerate(words):
                fh.write(f"{word} {row[wid]:.12g}\n")


def load_topic_model(path) -> TopicModel:
    """Read a topic model file, validating block structure and row sums."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty topic model file", 1)
    parts = lines[0].split()
    if len(parts) != 3 or parts[0] != "TOPICS":
        raise ParseError(f"expected 'TOPICS <T> <V>', got {lines[0]!r}", 1)
    try:
        T, V = int(parts[1]), int(parts[2])
    except ValueError:
        raise ParseError(f"bad counts in header {lines[0]!r}", 1) from None
    expect = 1 + T * (V + 1)
    if len(lines) != expect:
        raise ParseError(f"expected {expect} lines, found {len(lines)}", len(lines))

    vocab = Vocabulary()
    labels = []
    rows = np.empty((T, V), dtype=np.float64)
    pos = 1
    for t in range(T):
        parts = lines[pos].split()
        if len(parts) != 2 or parts[0] != "TOPIC":
            raise ParseError(f"expected 'TOPIC <label>', got {lines[pos]!r}", pos + 1)
        labels.append(parts[1])
        pos += 1
        for v in range(V):
            parts = lines[pos].split()
            if len(parts) != 2:
                raise ParseError(f"expected '<word> <prob>', got {lines[pos]!r}", pos + 1)
            word, ptok = parts
            if t == 0:
                if vocab.add(word) != v:
                    raise ParseError(f"duplicate word {word!r}", pos + 1)
            elif word not in vocab or vocab.id(word) != v:
                raise ParseError(
                    f"word {word!r} out of order in topic {labels[t]!r}", pos + 1
                )
            try:
                rows[t, v] = float(ptok)
            except ValueError:
                raise ParseError(f"bad probability {ptok!r}", pos + 1) from None
            pos += 1
    sums = rows.sum(axis=1)
    if np.any(rows < 0) or np.any(np.abs(sums - 1.0) > 1e-6):
        raise ValidationError(f"topic rows do not sum to 1: {sums}")
    return TopicModel(labels, vocab, floor_and_normalize(rows))
