"""Time the compiled kernels against the pure-numpy path.

    python3 benchmarks/bench_kernels.py [--horizon 10] [--repeat 3]

The numba timings exclude the first (compiling) call. Both paths must give
the same trajectory; the script checks that before reporting speedups.
"""

import argparse
import time

import numpy as np

from popdyn import kernels
from popdyn.dynamics import IntegratorConfig, simulate
from popdyn.games import AffineCongestionGame
from popdyn.rules import BestResponse, bnn, pack_rule, equal_hybrid, smith


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=float, default=10.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    game = AffineCongestionGame()
    cfg = IntegratorConfig(h=1e-3, horizon=args.horizon)
    x0 = np.array([1.0, 0.0, 0.0])
    rules = {"br": BestResponse(), "smith": smith(), "bnn": bnn(), "hybrid": equal_hybrid()}

    t0 = time.perf_counter()
    simulate(game, equal_hybrid(), x0, IntegratorConfig(h=1e-3, horizon=0.01), use_numba=True)
    print(f"numba warm-up (compile): {time.perf_counter() - t0:.2f} s")
    print(f"{'kernel':<22} {'numba [s]':>10} {'numpy [s]':>10} {'speedup':>8}")
    for name, rule in rules.items():
        tn, a = best_of(lambda: simulate(game, rule, x0, cfg, use_numba=True), args.repeat)
        tp, b = best_of(lambda: simulate(game, rule, x0, cfg, use_numba=False), 1)
        assert np.allclose(a.x, b.x, atol=1e-12), f"{name}: paths disagree"
        print(f"{'simulate[' + name + ']':<22} {tn:>10.4f} {tp:>10.4f} {tp / tn:>7.1f}x")

    tr = simulate(game, equal_hybrid(), x0, cfg)
    pk = pack_rule(equal_hybrid(), 3)
    A, bvec = game.affine()
    kw = dict(affine=(A, bvec), payoff=game.payoff, jacobian=game.jacobian)
    args_ = (tr.x, cfg.h, pk, cfg.eps_tie, kernels.TIE_SLIDING, cfg.restoring_rate)
    tn, _ = best_of(lambda: kernels.sample_fields(*args_, use_numba=True, **kw), args.repeat)
    tp, _ = best_of(lambda: kernels.sample_fields(*args_, use_numba=False, **kw), 1)
    print(f"{'sample_fields[hybrid]':<22} {tn:>10.4f} {tp:>10.4f} {tp / tn:>7.1f}x")


if __name__ == "__main__":
    main()
