"""Synthetic conversations from the generative model behind the estimators.

Each bin is produced by sampling a topic from the true mixture weights, a
spoken word from that topic's unigram, and an observed word from the
channel's confusion row.  The channel confuses words only within seeded
random cohorts that partition the vocabulary (``bin_width`` words each), so
a bin's membership, the set of words that could have produced the observed
word, is exactly the observed word's cohort.  Synthetic confidences blend a
point mass on the observed word with the channel's emission profile of the
spoken word; averaged over the cohort this equals the model's observed-word
distribution, which keeps the expected-count estimator unbiased on its own
generative family.  The truth (weights, topics, channel, spoken words) is
returned alongside the data, so parameter-recovery tests need no speech.

Topic rows and the channel are shared across the conversations of one spec;
conversation k draws from a stream seeded with ``seed XOR k`` so sampling
can be parallelized per conversation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelModel
from .corpus import Bin, ConfusionNetwork, Conversation, Vocabulary
from .errors import ValidationError
from .topics import TopicModel, floor_and_normalize

UTTERANCE_BINS = 50
MIN_CELL_POSTERIOR = 1e-9
OBSERVED_CONFIDENCE_WEIGHT = 0.4


@dataclass
class SynthSpec:
    topics: int
    vocab_size: int
    lambda_true: np.ndarray | None
    topic_sharpness: float
    channel_noise: float
    bins: int
    bin_width: int
    seed: int

    def __post_init__(self):
        if self.topics < 1 or self.vocab_size < 1 or self.bins < 1:
            raise ValidationError("topics, vocab_size and bins must be >= 1")
        if self.bin_width < 1:
            raise ValidationError("bin_width must be >= 1")
        if not 0.0 <= self.channel_noise < 1.0:
            raise ValidationError("channel_noise must be in [0, 1)")
        if self.topic_sharpness <= 0.0:
            raise ValidationError("topic_sharpness must be > 0")
        if self.lambda_true is not None:
            lam = np.asarray(self.lambda_true, dtype=np.float64)
            if lam.shape != (self.topics,) or np.any(lam < 0) or abs(lam.sum() - 1) > 1e-9:
                raise ValidationError(f"lambda_true {lam!r} is not on the simplex")
            self.lambda_true = lam


@dataclass
class SynthTruth:
    lam: np.ndarray
    topics: TopicModel
    channel: ChannelModel
    vocab: Vocabulary
    refs: tuple


def _make_vocab(size: int) -> Vocabulary:
    width = len(str(size - 1))
    return Vocabulary(f"w{i:0{width}d}" for i in range(size))


def _shared_structures(spec: SynthSpec):
    """Topic rows, cohort partition, and channel from the spec-level stream."""
    rng = np.random.default_rng([spec.seed, 0])
    V, T = spec.vocab_size, spec.topics
    rows = np.empty((T, V))
    for t in range(T):
        rows[t] = rng.dirichlet(np.full(V, spec.topic_sharpness))
    vocab = _make_vocab(V)
    tm = TopicModel([f"t{t}" for t in range(T)], vocab, floor_and_normalize(rows))

    perm = rng.permutation(V)
    cohorts = [
        sorted(int(w) for w in perm[i : i + spec.bin_width])
        for i in range(0, V, spec.bin_width)
    ]
    chan_rows = {}
    for cohort in cohorts:
        for w in cohort:
            if spec.channel_noise == 0.0 or len(cohort) == 1:
                chan_rows[w] = {w: 1.0}
                continue
            row = {w: 1.0 - spec.channel_noise}
            share = spec.channel_noise / (len(cohort) - 1)
            for v in cohort:
                if v != w:
                    row[v] = share
            chan_rows[w] = row
    cohort_of = {w: cohort for cohort in cohorts for w in cohort}
    return tm, ChannelModel(chan_rows), vocab, cohort_of


def _assemble_bin(obs, spoken, cm, cohort):
    """Bin around one observed word: membership is the words that can
    produce it (its cohort); confidences blend a point mass on the observed
    word with the spoken word's emission profile.
    """
    if len(cohort) == 1:
        return Bin([(obs, 1.0)])
    a = OBSERVED_CONFIDENCE_WEIGHT
    row = cm.rows[spoken]
    s = np.array(
        [(a if v == obs else 0.0) + (1.0 - a) * row.get(v, 0.0) for v in cohort]
    )
    s = s / s.sum()

    # the observed word must be the bin's 1-best: swap posteriors if needed
    oi = cohort.index(obs)
    top = int(np.argmax(s))
    if top != oi:
        s[oi], s[top] = s[top], s[oi]
    if np.max(np.delete(s, oi)) >= s[oi]:
        s[oi] *= 1.0 + 1e-6
    cells = [
        (v, float(p)) for v, p in zip(cohort, s) if v == obs or p >= MIN_CELL_POSTERIOR
    ]
    return Bin(cells)


def sample_conversation(spec: SynthSpec, index: int = 0):
    """Sample conversation ``index`` of a spec; returns (Conversation, SynthTruth)."""
    tm, cm, vocab, cohort_of = _shared_structures(spec)
    rng = np.random.default_rng([spec.seed ^ index, 1])
    T, V, M = spec.topics, spec.vocab_size, spec.bins

    if spec.lambda_true is not None:
        lam = spec.lambda_true
    else:
        lam = rng.dirichlet(np.ones(T))

    topics_drawn = rng.choice(T, size=M, p=lam)
    spoken = np.empty(M, dtype=np.int64)
    for t in range(T):
        idx = np.nonzero(topics_drawn == t)[0]
        if idx.size:
            spoken[idx] = rng.choice(V, size=idx.size, p=tm.probs[t])
    observed = np.empty(M, dtype=np.int64)
    for w in sorted(set(spoken.tolist())):
        idx = np.nonzero(spoken == w)[0]
        support = sorted(cm.rows[w])
        probs = np.array([cm.rows[w][v] for v in support])
        observed[idx] = rng.choice(support, size=idx.size, p=probs)

    bins = [
        _assemble_bin(int(o), int(w), cm, cohort_of[int(o)])
        for o, w in zip(observed, spoken)
    ]
    networks = []
    for k in range(0, M, UTTERANCE_BINS):
        uid = f"u{k // UTTERANCE_BINS + 1:04d}"
        networks.append(ConfusionNetwork(uid, tuple(bins[k : k + UTTERANCE_BINS])))
    conv = Conversation(f"synth{index:03d}", tuple(networks))
    truth = SynthTruth(lam, tm, cm, vocab, tuple(int(w) for w in spoken))
    return conv, truth


def observed_marginal(truth: SynthTruth) -> np.ndarray:
    """Distribution of the observed word implied by mixture and channel."""
    q_star = truth.lam @ truth.topics.probs
    V = len(truth.vocab)
    p = np.zeros(V)
    for w, row in truth.channel.rows.items():
        for v, pc in row.items():
            p[v] += q_star[w] * pc
    return p


def save_truth(truth: SynthTruth, conv: Conversation, path) -> None:
    """Sidecar with the true weights, channel, and spoken word per bin."""
    vocab = truth.vocab
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"TRUTH {conv.cid}\n")
        fh.write(f"LAMBDA {len(truth.lam)}\n")
        for label, w in zip(truth.topics.labels, truth.lam):
            fh.write(f"{label} {w:.12g}\n")
        entries = []
        for w, row in truth.channel.rows.items():
            for v, p in row.items():
                entries.append((vocab.word(w), vocab.word(v), p))
        entries.sort(key=lambda e: (e[0], e[1]))
        fh.write(f"CHANNEL {len(entries)}\n")
        for w, v, p in entries:
            fh.write(f"{w} {v} {p:.12g}\n")
        fh.write(f"REFS {len(truth.refs)}\n")
        i = 0
        for net in conv.networks:
            for j in range(len(net.bins)):
                fh.write(f"{net.uid} {j} {vocab.word(truth.refs[i])}\n")
                i += 1


def load_truth_lambda(path) -> np.ndarray:
    """Read just the true weight vector back from a sidecar file."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 2 or not lines[1].startswith("LAMBDA "):
        raise ValidationError(f"{path} is not a truth sidecar")
    count = int(lines[1].split()[1])
    return np.array([float(lines[2 + t].split()[1]) for t in range(count)])
