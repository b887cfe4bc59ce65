#!/usr/bin/env python3
"""Throughput benchmark: compiled simulation kernel vs pure NumPy fallback.

The hybrid step loop is sequential (each sample needs the previous one), so
interpreter overhead dominates the pure path.  This script times both
implementations on the bundled benchmark systems and prints steps/second.

Usage: python benchmarks/bench_simulate.py [--steps N]
"""

import argparse
import time

import numpy as np

import hybridid as hi
from hybridid._core import _pystep
from hybridid.simulate import DIVERGENCE_GUARD, _pack_model

try:
    from hybridid._core import _step as _compiled
except ImportError:
    _compiled = None

CASES = [
    ("thermostat", dict(name="thermostat")),       # 1 state, 2 terms, 2 rules
    ("chua", dict(name="chua")),                   # 3 states, 4 terms, 4 rules
    ("grid_switch", dict(name="grid_switch")),     # 5 states, 6 terms, 2 rules
]


def bench(fn, args, steps, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return steps / best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=200_000)
    opts = ap.parse_args()

    print(f"{'case':<14} {'pure steps/s':>14} {'compiled steps/s':>18} {'speedup':>9}")
    for label, spec in CASES:
        data, model, modes = hi.generate_benchmark(spec["name"], steps=2)
        n = model.n_outputs
        phi, W, psi, rf, rt, rv = _pack_model(model, n, 0)
        args = (phi.kinds, phi.exps, phi.args, W, psi.kinds, psi.exps, psi.args,
                rf, rt, rv, data.outputs[0], int(modes[0]),
                np.zeros((opts.steps, 0)), opts.steps, DIVERGENCE_GUARD)

        pure_steps = max(opts.steps // 20, 1000)
        pure_args = args[:13] + (pure_steps, DIVERGENCE_GUARD)
        pure_rate = bench(_pystep.simulate_hybrid, pure_args, pure_steps, repeat=1)
        if _compiled is None:
            print(f"{label:<14} {pure_rate:>14.3g} {'(not built)':>18} {'-':>9}")
            continue
        comp_rate = bench(_compiled.simulate_hybrid, args, opts.steps)
        print(f"{label:<14} {pure_rate:>14.3g} {comp_rate:>18.3g} {comp_rate / pure_rate:>8.1f}x")

    if _compiled is None:
        print("\ncompiled extension not built; set it up with "
              "`pip install -e . --no-build-isolation`")


if __name__ == "__main__":
    main()
