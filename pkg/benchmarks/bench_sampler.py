"""Compare the numba and numpy Gibbs kernels.

Times the kernel alone on pre-drawn variates and the whole sampler
(including random draws), and checks that both kernels produce the same
trace. Usage: python3 benchmarks/bench_sampler.py [--games 1000 5000] [--repeats 5]
"""

import argparse
import statistics
import time

import numpy as np

from agent_island._accel import HAVE_NUMBA
from agent_island.agents import sample_pl_winner
from agent_island.gamelog import ModelRef
from agent_island.ranking import OutcomeRecord, SamplerConfig, gibbs_sample
from agent_island.ranking.kernels import KERNELS


def synthetic(n_models, n_games, players, seed):
    rng = np.random.default_rng(seed)
    models = [ModelRef("bench", f"m{i:03d}") for i in range(n_models)]
    skills = dict(zip(models, np.exp(rng.normal(size=n_models))))
    out = []
    for g in range(n_games):
        chosen = [models[i] for i in rng.choice(n_models, players, replace=False)]
        out.append(OutcomeRecord(str(g), tuple(sorted(chosen)), sample_pl_winner(skills, chosen, rng)))
    return out, models


def kernel_inputs(outcomes, models, iterations, seed):
    index = {m: i for i, m in enumerate(sorted(models))}
    sizes = [len(r.players) for r in outcomes]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    members = np.array([index[p] for r in outcomes for p in r.players], dtype=np.int64)
    wins = np.bincount([index[r.winner] for r in outcomes], minlength=len(models))
    rng = np.random.default_rng(seed)
    exp_draws = rng.standard_exponential((iterations, len(outcomes)))
    gamma_draws = rng.standard_gamma(1.0 + wins, (iterations, len(models)))
    return members, offsets, exp_draws, gamma_draws


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--games", type=int, nargs="+", default=[1000, 5000, 20000])
    ap.add_argument("--models", type=int, default=50)
    ap.add_argument("--players", type=int, default=7)
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy kernel will run")
    names = [k for k in KERNELS if k != "numba" or HAVE_NUMBA]

    print(f"{'games':>7} {'kernel':>6} {'kernel-only s':>14} {'sampler s':>10}")
    for n_games in args.games:
        outcomes, models = synthetic(args.models, n_games, args.players, seed=n_games)
        members, offsets, exp_draws, gamma_draws = kernel_inputs(outcomes, models, args.iterations, 0)
        cfg = SamplerConfig(iterations=args.iterations, burn_in=0)
        traces, timing = {}, {}
        for name in names:
            kernel = KERNELS[name]
            out = np.empty((args.iterations, len(models)))

            def run_kernel():
                kernel(members, offsets, np.ones(len(models)), 1.0, exp_draws, gamma_draws, out)

            run_kernel()  # compile / warm up
            k_best, _ = best_of(run_kernel, args.repeats)
            s_best, _ = best_of(lambda: gibbs_sample(outcomes, cfg, kernel=name), args.repeats)
            traces[name] = gibbs_sample(outcomes, cfg, kernel=name).trace
            timing[name] = (k_best, s_best)
            print(f"{n_games:>7} {name:>6} {k_best:>14.4f} {s_best:>10.4f}")
        if len(names) == 2:
            same = np.array_equal(traces["numba"], traces["numpy"])
            speed = timing["numpy"][0] / timing["numba"][0]
            print(f"{'':>7} kernel speedup {speed:.1f}x, traces identical: {same}")


if __name__ == "__main__":
    main()
