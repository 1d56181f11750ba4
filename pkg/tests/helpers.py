"""Shared builders for randomized test instances."""

import numpy as np

from cnadapt.channel import ChannelModel
from cnadapt.corpus import Bin, ConfusionNetwork, Conversation, Vocabulary
from cnadapt.topics import TopicModel, floor_and_normalize


def make_topic_model(rng, T, V, sharpness=0.5):
    vocab = Vocabulary(f"w{i}" for i in range(V))
    rows = np.vstack([rng.dirichlet(np.full(V, sharpness)) for _ in range(T)])
    return TopicModel([f"t{t}" for t in range(T)], vocab, floor_and_normalize(rows))


def make_channel(rng, V, n_confusions=3, self_mass=0.5):
    """Every word keeps at least ``self_mass`` on itself plus a few confusions."""
    rows = {}
    for w in range(V):
        k = min(n_confusions, V - 1)
        others = rng.choice(np.delete(np.arange(V), w), size=k, replace=False)
        noise = rng.dirichlet(np.ones(k + 1)) * (1.0 - self_mass)
        row = {w: self_mass + noise[0]}
        for o, p in zip(others, noise[1:]):
            row[int(o)] = float(p)
        total = sum(row.values())
        rows[w] = {v: p / total for v, p in row.items()}
    return ChannelModel(rows)


def make_conversation(rng, V, M, max_width=5, normalized_bins=False, cid="c"):
    bins = []
    for _ in range(M):
        k = int(rng.integers(1, max_width + 1))
        wids = rng.choice(V, size=k, replace=False)
        post = rng.dirichlet(np.ones(k))
        if not normalized_bins:
            post = post * rng.uniform(0.5, 1.0)
        bins.append(Bin([(int(w), float(p)) for w, p in zip(wids, post)]))
    nets = []
    for j in range(0, M, 40):
        nets.append(ConfusionNetwork(f"u{j // 40}", tuple(bins[j : j + 40])))
    return Conversation(cid, tuple(nets))


def make_instance(seed, T=3, V=20, M=100, max_width=5, normalized_bins=False,
                  sharpness=0.5):
    rng = np.random.default_rng(seed)
    tm = make_topic_model(rng, T, V, sharpness)
    cm = make_channel(rng, V)
    conv = make_conversation(rng, V, M, max_width, normalized_bins)
    return conv, tm, cm


def bins_as_lists(conv):
    return [list(b.cells) for b in conv.iter_bins()]


def non_decreasing(trace, slack=1e-9):
    """Pairwise check that tolerates repeated +/-inf entries."""
    return all(b >= a - slack for a, b in zip(trace, trace[1:]))
