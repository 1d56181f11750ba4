"""EM estimators for conversation-level topic mixture weights.

Four variants share one interface:

* ``self-1best`` / ``self-tf``: treat the recognizer output (1-best words,
  or posterior-weighted expected counts) as ground truth and fit the
  mixture by plain EM; an optional Dirichlet-prior strength turns the
  closed-form update into its clamped MAP form.
* ``conf-1best`` / ``conf-tf``: additionally model the recognizer's word
  confusions.  Each bin's observed word is explained as a channel-corrupted
  latent bin word; because the mixture weights then appear inside a per-bin
  normalizer, the M-step maximizes a concave lower bound on the EM
  Q-difference in softmax parameter space, giving a multiplicative weight
  update.  MAP variants bound the prior difference too, with separate
  update forms for negative and positive prior strength.

Every iteration's accumulators come from a single kernel call (compiled
extension when available, numpy otherwise) over a flat per-conversation
workspace; bins are always reduced in utterance order so repeated runs on
one platform reproduce identical traces.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import _confcore_py
from .channel import ChannelModel
from .corpus import Bin, Conversation, expected_counts
from .errors import EstimationError, ValidationError
from .topics import MixtureWeights, TopicModel

try:
    from . import _confcore as _compiled
except ImportError:
    _compiled = None

VARIANTS = ("self-1best", "self-tf", "conf-1best", "conf-tf")

_BACKEND = os.environ.get("CNADAPT_BACKEND", "")
if _BACKEND not in ("", "compiled", "python"):
    raise ImportError(f"CNADAPT_BACKEND={_BACKEND!r}; use 'compiled' or 'python'")
if _BACKEND == "compiled" and _compiled is None:
    raise ImportError("CNADAPT_BACKEND=compiled but the extension is not built")
_USE_COMPILED = _compiled is not None and _BACKEND != "python"


def backend_name() -> str:
    return "compiled" if _USE_COMPILED else "python"


@dataclass
class EstimatorConfig:
    """Variant selector plus prior strength and convergence controls.

    ``map_strength`` is the single tuned product of the Dirichlet prior
    (negative pulls weights toward sparsity, zero means plain MLE).
    """

    variant: str
    map_strength: float = 0.0
    max_iters: int = 200
    rel_tol: float = 1e-6
    init: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if self.rel_tol <= 0:
            raise ValidationError("rel_tol must be > 0")


@dataclass
class FitResult:
    weights: MixtureWeights
    loglik_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def topic_posterior(tm: TopicModel, lam, wid: int) -> np.ndarray:
    """Posterior over topics given one word: lam_t q(w|t) / sum."""
    r = np.asarray(lam, dtype=np.float64) * tm.probs[:, wid]
    return r / r.sum()


def loglik_self_1best(conv: Conversation, tm: TopicModel, lam) -> float:
    q = np.asarray(lam, dtype=np.float64) @ tm.probs
    return float(sum(np.log(q[b.one_best()[0]]) for b in conv.iter_bins()))


def loglik_self_tf(conv: Conversation, tm: TopicModel, lam) -> float:
    q = np.asarray(lam, dtype=np.float64) @ tm.probs
    tf = expected_counts(conv)
    return float(sum(c * np.log(q[w]) for w, c in sorted(tf.items())))


def reference_posterior(
    b: Bin, tm: TopicModel, lam, cm: ChannelModel, observed: int
) -> dict:
    """Posterior that each bin word is the spoken word given the observed one.

    Proportional to mixture probability times channel probability; the bin's
    mixture normalizer cancels.  If the channel gives zero mass to the
    observed word from every bin word, falls back to a point mass on it.
    """
    wids = b.word_ids()
    if observed not in wids:
        raise ValidationError(f"observed word id {observed} not in bin")
    lam = np.asarray(lam, dtype=np.float64)
    scores = {w: float(lam @ tm.probs[:, w]) * cm.prob(observed, w) for w in wids}
    total = sum(scores.values())
    if total <= 0.0:
        return {w: 1.0 if w == observed else 0.0 for w in wids}
    return {w: s / total for w, s in scores.items()}


class _ConfWorkspace:
    """Flat per-conversation arrays consumed by the stats kernels.

    Cells are concatenated in utterance/bin order; cell 0 of each bin is its
    1-best word.  ``pc`` holds one row-major k*k channel block per bin
    (row = spoken cell, column = observed cell).
    """

    def __init__(self, conv: Conversation, tm: TopicModel, cm: ChannelModel):
        words, sposts, bptr, pptr = [], [], [0], [0]
        pc_blocks = []
        for b in conv.iter_bins():
            wids = b.word_ids()
            k = len(wids)
            words.extend(wids)
            sposts.extend(p for _, p in b.cells)
            bptr.append(len(words))
            block = np.empty(k * k, dtype=np.float64)
            for a, wa in enumerate(wids):
                row = cm.rows.get(wa)
                for j, wb in enumerate(wids):
                    if row is None:
                        block[a * k + j] = 1.0 if wb == wa else 0.0
                    else:
                        block[a * k + j] = row.get(wb, 0.0)
            pc_blocks.append(block)
            pptr.append(pptr[-1] + k * k)

        self.words = np.asarray(words, dtype=np.int64)
        self.sposts = np.asarray(sposts, dtype=np.float64)
        self.bptr = np.asarray(bptr, dtype=np.int64)
        self.pptr = np.asarray(pptr, dtype=np.int64)
        self.pc = np.concatenate(pc_blocks)
        self.obs = self.bptr[:-1]
        self.Qw = np.ascontiguousarray(tm.probs[:, self.words])
        self.St = np.add.reduceat(self.Qw, self.bptr[:-1], axis=1)
        self.binw_tf = np.add.reduceat(self.sposts, self.bptr[:-1])

        # pairwise index arrays for the numpy kernel
        widths = np.diff(self.bptr)
        pa, pb, pobs = [], [], []
        for i, k in enumerate(widths):
            f0, p0 = self.bptr[i], self.pptr[i]
            local = np.arange(k, dtype=np.int64)
            pa.append(np.repeat(f0 + local, k))
            pb.append(np.tile(f0 + local, k))
            pobs.append(p0 + local * k)
        self.pa = np.concatenate(pa)
        self.pb = np.concatenate(pb)
        self.pobs = np.concatenate(pobs)


def _conf_stats(work: _ConfWorkspace, lam: np.ndarray, use_tf: bool):
    if _USE_COMPILED:
        return _compiled.conf_stats(
            work.Qw, work.St, work.sposts, work.bptr, work.pc, work.pptr, lam, use_tf
        )
    return _confcore_py.conf_stats(work, lam, use_tf)


def loglik_conf(
    conv: Conversation, tm: TopicModel, lam, cm: ChannelModel, use_tf: bool = False
) -> float:
    """Log-likelihood of the observed words under the confusion channel,
    with the mixture renormalized inside each bin.
    """
    work = _ConfWorkspace(conv, tm, cm)
    _, _, ll = _conf_stats(work, np.asarray(lam, dtype=np.float64), use_tf)
    return ll


def conf_lower_bound(
    conv: Conversation,
    tm: TopicModel,
    cm: ChannelModel,
    mu,
    delta,
    use_tf: bool = False,
) -> float:
    """Value of the concave surrogate maximized by one multiplicative update.

    Evaluated at softmax parameters ``mu`` and a candidate step ``delta``;
    nonnegative at the update the estimator takes, zero at ``delta = 0``,
    and never above the true Q-difference.
    """
    mu = np.asarray(mu, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    work = _ConfWorkspace(conv, tm, cm)
    emu = np.exp(mu - np.max(mu))
    lam = emu / emu.sum()
    ww, binw = _reference_weights(work, lam, use_tf)
    a = emu @ work.Qw
    ad = (emu * delta) @ work.Qw
    A = emu @ work.St
    Ad = (emu * np.exp(delta)) @ work.St
    return float(ww.sum() + ww @ (ad / a) - binw @ (Ad / A))


def _reference_weights(work: _ConfWorkspace, lam: np.ndarray, use_tf: bool):
    """Per-cell reference-posterior weights and per-bin totals at ``lam``."""
    F = work.sposts.shape[0]
    qmix = lam @ work.Qw
    contrib = qmix[work.pa] * work.pc
    den = np.bincount(work.pb, weights=contrib, minlength=F)
    with np.errstate(invalid="ignore", divide="ignore"):
        if use_tf:
            wpair = work.sposts[work.pb] * contrib / den[work.pb]
            np.nan_to_num(wpair, copy=False, nan=0.0, posinf=0.0, neginf=0.0)
            ww = np.bincount(work.pa, weights=wpair, minlength=F)
            dead = (den == 0.0) & (work.sposts > 0.0)
            ww[dead] += work.sposts[dead]
            binw = work.binw_tf
        else:
            sel = work.pobs
            wpair = contrib[sel] / den[work.pb[sel]]
            np.nan_to_num(wpair, copy=False, nan=0.0, posinf=0.0, neginf=0.0)
            ww = np.bincount(work.pa[sel], weights=wpair, minlength=F)
            dead = work.obs[den[work.obs] == 0.0]
            np.add.at(ww, dead, 1.0)
            binw = np.ones(work.bptr.shape[0] - 1)
    return ww, binw


def _init_lambda(cfg: EstimatorConfig, T: int) -> np.ndarray:
    if cfg.init is None:
        return np.full(T, 1.0 / T)
    lam = np.asarray(cfg.init, dtype=np.float64)
    if lam.shape != (T,) or np.any(lam < 0) or abs(lam.sum() - 1.0) > 1e-9:
        raise ValidationError(f"bad initial weights {lam!r}")
    return lam / lam.sum()


def _penalized(ll: float, lam: np.ndarray, m: float) -> float:
    if m == 0.0:
        return float(ll)
    with np.errstate(divide="ignore"):
        return float(ll + m * np.log(lam).sum())


def _step_converged(prev: float, cur: float, rel_tol: float) -> bool:
    if cur == prev:
        return True
    return abs(cur - prev) <= rel_tol * max(1.0, abs(prev))


def _check_finite(arr, what: str, iteration: int):
    if not np.all(np.isfinite(arr)):
        raise EstimationError(
            f"non-finite {what} at iteration {iteration}: {np.asarray(arr)}"
        )


def _clamp_renormalize(x: np.ndarray, m: float) -> np.ndarray:
    x = np.maximum(x, 0.0)
    total = x.sum()
    if total <= 0.0:
        raise EstimationError(
            f"all topics clamped to zero; map_strength {m} is too strong"
        )
    return x / total


def _self_update(c: np.ndarray, m: float, iteration: int) -> np.ndarray:
    if m == 0.0:
        return c / c.sum()
    T = c.shape[0]
    denom = c.sum() + T * m
    if denom <= 0.0:
        raise EstimationError(
            f"MAP update denominator {denom} <= 0; map_strength {m} is too strong"
        )
    x = (c + m) / denom
    _check_finite(x, "MAP update", iteration)
    return _clamp_renormalize(x, m)


def _conf_update(
    N: np.ndarray, D: np.ndarray, lam: np.ndarray, m: float, iteration: int
) -> np.ndarray:
    T = N.shape[0]
    if m == 0.0:
        u = N / D
    elif m < 0.0:
        u = (N + m * (1.0 - T * lam)) / D
        _check_finite(u, "update numerator", iteration)
        return _clamp_renormalize(u, m)
    else:
        denom = D + m * T
        if np.any(denom <= 0.0):
            raise EstimationError(
                f"MAP update denominator non-positive at iteration {iteration}; "
                f"reduce map_strength {m}"
            )
        u = (N + m) / denom
    _check_finite(u, "update", iteration)
    total = u.sum()
    if total <= 0.0:
        raise EstimationError(f"degenerate update at iteration {iteration}")
    return u / total


def _run_em(lam0, stats, update, m, max_iters, rel_tol) -> FitResult:
    lam = lam0
    acc, ll = stats(lam)
    trace = [_penalized(ll, lam, m)]
    iterations = 0
    converged = False
    for it in range(1, max_iters + 1):
        iterations = it
        lam = update(acc, lam, it)
        acc, ll = stats(lam)
        obj = _penalized(ll, lam, m)
        if np.isnan(obj):
            raise EstimationError(f"objective became NaN at iteration {it}")
        trace.append(obj)
        if _step_converged(trace[-2], trace[-1], rel_tol):
            converged = True
            break
    return FitResult(MixtureWeights(lam), trace, iterations, converged)


def _observed_weights(conv: Conversation, use_tf: bool):
    if use_tf:
        tf = expected_counts(conv)
    else:
        tf = {}
        for b in conv.iter_bins():
            w = b.one_best()[0]
            tf[w] = tf.get(w, 0.0) + 1.0
    wids = np.array(sorted(tf), dtype=np.int64)
    wts = np.array([tf[w] for w in wids], dtype=np.float64)
    return wids, wts


def _fit_self(conv: Conversation, tm: TopicModel, cfg: EstimatorConfig, use_tf: bool):
    wids, wts = _observed_weights(conv, use_tf)
    Qw = np.ascontiguousarray(tm.probs[:, wids])
    m = cfg.map_strength

    def stats(lam):
        qmix = lam @ Qw
        c = lam * (Qw @ (wts / qmix))
        return c, float(wts @ np.log(qmix))

    def update(c, lam, it):
        return _self_update(c, m, it)

    lam0 = _init_lambda(cfg, tm.num_topics)
    return _run_em(lam0, stats, update, m, cfg.max_iters, cfg.rel_tol)


def fit_self_1best(conv: Conversation, tm: TopicModel, cfg: EstimatorConfig) -> FitResult:
    """EM on the 1-best words; MAP when cfg.map_strength is nonzero."""
    if cfg.variant != "self-1best":
        raise ValidationError(f"config variant is {cfg.variant!r}")
    return _fit_self(conv, tm, cfg, use_tf=False)


def fit_self_tf(conv: Conversation, tm: TopicModel, cfg: EstimatorConfig) -> FitResult:
    """EM on expected counts; MAP when cfg.map_strength is nonzero."""
    if cfg.variant != "self-tf":
        raise ValidationError(f"config variant is {cfg.variant!r}")
    return _fit_self(conv, tm, cfg, use_tf=True)


def _fit_conf_impl(conv, tm, cm, cfg) -> FitResult:
    use_tf = cfg.variant == "conf-tf"
    work = _ConfWorkspace(conv, tm, cm)
    m = cfg.map_strength

    def stats(lam):
        N, D, ll = _conf_stats(work, lam, use_tf)
        return (N, D), ll

    def update(acc, lam, it):
        N, D = acc
        return _conf_update(N, D, lam, m, it)

    lam0 = _init_lambda(cfg, tm.num_topics)
    return _run_em(lam0, stats, update, m, cfg.max_iters, cfg.rel_tol)


def fit_conf(
    conv: Conversation, tm: TopicModel, cm: ChannelModel, cfg: EstimatorConfig
) -> FitResult:
    """Confusion-aware maximum-likelihood fit (multiplicative updates)."""
    if cfg.variant not in ("conf-1best", "conf-tf"):
        raise ValidationError(f"config variant is {cfg.variant!r}")
    if cfg.map_strength != 0.0:
        raise ValidationError("use fit_conf_map for nonzero map_strength")
    return _fit_conf_impl(conv, tm, cm, cfg)


def fit_conf_map(
    conv: Conversation, tm: TopicModel, cm: ChannelModel, cfg: EstimatorConfig
) -> FitResult:
    """Confusion-aware MAP fit; the prior-difference bound (and therefore
    the update form) depends on the sign of map_strength.
    """
    if cfg.variant not in ("conf-1best", "conf-tf"):
        raise ValidationError(f"config variant is {cfg.variant!r}")
    if cfg.map_strength == 0.0:
        raise ValidationError("map_strength is zero; use fit_conf")
    return _fit_conf_impl(conv, tm, cm, cfg)


def conf_em_step(
    conv: Conversation,
    tm: TopicModel,
    cm: ChannelModel,
    lam,
    use_tf: bool = False,
    map_strength: float = 0.0,
):
    """One multiplicative update from ``lam``.

    Returns (new weights, delta) where delta is the softmax-space step the
    update maximizes the surrogate at (before renormalization).
    """
    lam = np.asarray(lam, dtype=np.float64)
    work = _ConfWorkspace(conv, tm, cm)
    N, D, _ = _conf_stats(work, lam, use_tf)
    T = N.shape[0]
    m = map_strength
    if m == 0.0:
        u = N / D
    elif m < 0.0:
        u = np.maximum((N + m * (1.0 - T * lam)) / D, 0.0)
    else:
        u = (N + m) / (D + m * T)
    with np.errstate(divide="ignore"):
        delta = np.log(u) - np.log(lam)
    return u / u.sum(), delta


def fit(
    conv: Conversation,
    tm: TopicModel,
    cfg: EstimatorConfig,
    cm: ChannelModel | None = None,
) -> FitResult:
    """Dispatch on variant and map_strength."""
    if cfg.variant == "self-1best":
        return fit_self_1best(conv, tm, cfg)
    if cfg.variant == "self-tf":
        return fit_self_tf(conv, tm, cfg)
    if cm is None:
        raise ValidationError(f"variant {cfg.variant!r} requires a channel model")
    if cfg.map_strength == 0.0:
        return fit_conf(conv, tm, cm, cfg)
    return fit_conf_map(conv, tm, cm, cfg)


def adapted_unigram(tm: TopicModel, weights) -> np.ndarray:
    """Dense adapted unigram distribution over the vocabulary."""
    if isinstance(weights, MixtureWeights):
        lam = weights.lam
    else:
        lam = np.asarray(weights, dtype=np.float64)
    return lam @ tm.probs
