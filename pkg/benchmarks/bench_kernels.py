"""Time the compiled kernels against the pure-Python fallback.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``.  Each kernel
is run on identical inputs by both backends; outputs are compared before
timing so a speedup never hides a mismatch.
"""

from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from statehawk import _pykernels

try:
    from statehawk import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _cases(rng):
    T, m = 5000, 3
    logB = rng.normal(size=(T, m))
    A = rng.dirichlet(np.ones(m), size=m)
    pi = rng.dirichlet(np.ones(m))
    _, log_scale = _pykernels.hmm_forward(logB, A, pi)
    n = 2000
    rewards, values = rng.normal(size=n), rng.normal(size=n)
    dones = (rng.random(n) < 0.01).astype(np.float64)
    actions = rng.integers(0, 2, 20_000)
    T0, T1, mm, H = 1, 4, 2, 64
    D = T0 + 2 * T1 * mm
    W = [rng.normal(0, 0.3, (H, D)), np.zeros(H), rng.normal(0, 0.3, (H, H)), np.zeros(H),
         rng.normal(0, 0.3, (mm, H)), np.zeros(mm)]
    hist, err, uni = rng.normal(size=(n, T0)), rng.exponential(size=(n, mm)), rng.random(n)
    states = rng.integers(0, 2, 20_000)
    coeffs = np.array([[0.9, -0.2], [-0.5, 0.1]])
    noise = rng.normal(0, 0.1, 20_000)
    return {
        "ar_recursion": (states, coeffs, noise, np.zeros(2)),
        "hmm_forward": (logB, A, pi),
        "hmm_backward": (logB, A, log_scale),
        "viterbi": (logB, np.log(A), np.log(pi)),
        "gae": (rewards, values, dones, 0.0, 0.99, 0.95),
        "run_lengths": (actions,),
        "policy_rollout": (hist, err, uni, *W, T1, False, 0.0),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a), np.asarray(b), rtol=1e-10, atol=1e-12)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':<16}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, args_ in cases.items():
        py, cy = getattr(_pykernels, name), getattr(_ckernels, name)
        if not _same(py(*args_), cy(*args_)):
            print(f"{name}: backends disagree")
            return 1
        t_py = min(timeit.repeat(lambda: py(*args_), number=1, repeat=args.repeat))
        t_cy = min(timeit.repeat(lambda: cy(*args_), number=1, repeat=args.repeat))
        print(f"{name:<16}{1e3 * t_py:>12.2f}{1e3 * t_cy:>12.2f}{t_py / t_cy:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
