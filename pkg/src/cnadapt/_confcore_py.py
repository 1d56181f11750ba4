"""Numpy implementation of the confusion-EM inner loop.

Fallback for the compiled kernel in ``_confcore``; both compute, for one
mixture weight vector, the per-iteration accumulators of the multiplicative
update plus the data log-likelihood.  See ``adapt`` for the workspace
layout.
"""

import numpy as np


def conf_stats(work, lam, use_tf):
    """Return (numerators N, denominators D, log-likelihood) at ``lam``.

    N[t] is the reference-posterior-weighted topic-t mass, D[t] the bin-level
    topic-t mass ratio; both feed the multiplicative weight update.  Bins
    whose observed word gets zero channel mass from every bin word fall back
    to a point-mass reference posterior.
    """
    F = work.sposts.shape[0]
    qmix = lam @ work.Qw
    binq = lam @ work.St
    contrib = qmix[work.pa] * work.pc
    den = np.bincount(work.pb, weights=contrib, minlength=F)

    with np.errstate(divide="ignore", invalid="ignore"):
        if use_tf:
            wpair = work.sposts[work.pb] * contrib / den[work.pb]
            np.nan_to_num(wpair, copy=False, nan=0.0, posinf=0.0, neginf=0.0)
            ww = np.bincount(work.pa, weights=wpair, minlength=F)
            dead = (den == 0.0) & (work.sposts > 0.0)
            ww[dead] += work.sposts[dead]
            live = work.sposts > 0.0
            loglik = float(
                work.sposts[live] @ np.log(den[live]) - work.binw_tf @ np.log(binq)
            )
            binw = work.binw_tf
        else:
            sel = work.pobs
            wpair = contrib[sel] / den[work.pb[sel]]
            np.nan_to_num(wpair, copy=False, nan=0.0, posinf=0.0, neginf=0.0)
            ww = np.bincount(work.pa[sel], weights=wpair, minlength=F)
            dead = work.obs[den[work.obs] == 0.0]
            np.add.at(ww, dead, 1.0)
            loglik = float(np.log(den[work.obs]).sum() - np.log(binq).sum())
            binw = np.ones_like(binq)

    N = lam * (work.Qw @ (ww / qmix))
    D = work.St @ (binw / binq)
    return N, D, loglik
