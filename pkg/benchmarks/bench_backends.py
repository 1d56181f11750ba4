"""Timing comparison of the compiled and numpy confusion-EM kernels.

Usage: python benchmarks/bench_backends.py [bins] [bin_width]
"""

import sys
import time

import numpy as np

from cnadapt import _confcore_py
from cnadapt.adapt import EstimatorConfig, _ConfWorkspace, fit
from cnadapt.synth import SynthSpec, sample_conversation

try:
    from cnadapt import _confcore
except ImportError:
    _confcore = None


def time_call(fn, repeats=20):
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def main():
    bins = int(sys.argv[1]) if len(sys.argv) > 1 else 5000
    width = int(sys.argv[2]) if len(sys.argv) > 2 else 10
    spec = SynthSpec(
        topics=5, vocab_size=200, lambda_true=None, topic_sharpness=0.1,
        channel_noise=0.4, bins=bins, bin_width=width, seed=99,
    )
    conv, truth = sample_conversation(spec)
    work = _ConfWorkspace(conv, truth.topics, truth.channel)
    lam = np.full(spec.topics, 1.0 / spec.topics)

    print(f"workspace: {bins} bins, width {width}, {spec.topics} topics, "
          f"{work.pc.shape[0]} channel pairs")
    print(f"{'kernel':<22} {'1-best':>12} {'expected-count':>16}")
    t_py = [time_call(lambda: _confcore_py.conf_stats(work, lam, tf)) for tf in (False, True)]
    print(f"{'python (numpy)':<22} {t_py[0] * 1e3:>10.3f}ms {t_py[1] * 1e3:>14.3f}ms")
    if _confcore is None:
        print(f"{'compiled':<22} {'not built':>12}")
        return
    t_c = [
        time_call(
            lambda: _confcore.conf_stats(
                work.Qw, work.St, work.sposts, work.bptr, work.pc, work.pptr, lam, tf
            )
        )
        for tf in (False, True)
    ]
    print(f"{'compiled (cython)':<22} {t_c[0] * 1e3:>10.3f}ms {t_c[1] * 1e3:>14.3f}ms")
    print(f"{'speedup':<22} {t_py[0] / t_c[0]:>11.1f}x {t_py[1] / t_c[1]:>15.1f}x")

    cfg = EstimatorConfig("conf-tf", max_iters=100, rel_tol=1e-9)
    start = time.perf_counter()
    res = fit(conv, truth.topics, cfg, truth.channel)
    print(f"\nfull conf-tf fit ({res.iterations} iterations, active backend): "
          f"{time.perf_counter() - start:.3f}s")


if __name__ == "__main__":
    main()
