"""Inner loop of the Plackett-Luce Gibbs sampler.

Both kernels consume the same pre-drawn variates, so they produce the same
chain for a given seed; they differ only in speed. Games are stored in CSR
form: ``members[offsets[l]:offsets[l + 1]]`` are the model indices of game l.

For each iteration t:
    Z_l    = E[t, l] / sum(lam[j] for j in game l)
    rate_i = tau0 + sum(Z_l for games l containing i)
    lam_i  = G[t, i] / rate_i

where E holds standard exponentials and G standard gammas with shape
alpha0 + wins_i, i.e. Exp(rate) and Gamma(shape, rate) draws by scaling.
"""

from __future__ import annotations

import numpy as np

from .._accel import njit, numba_enabled


@njit(cache=True)
def _gibbs_chunk_numba(members, offsets, lam, tau0, exp_draws, gamma_draws, out):
    n_iter, n_games = exp_draws.shape
    n_models = lam.shape[0]
    rate = np.empty(n_models)
    for t in range(n_iter):
        rate[:] = 0.0
        for g in range(n_games):
            lo = offsets[g]
            hi = offsets[g + 1]
            total = 0.0
            for q in range(lo, hi):
                total += lam[members[q]]
            z = exp_draws[t, g] / total
            for q in range(lo, hi):
                rate[members[q]] += z
        for i in range(n_models):
            lam[i] = gamma_draws[t, i] / (rate[i] + tau0)
            out[t, i] = lam[i]


def _gibbs_chunk_numpy(members, offsets, lam, tau0, exp_draws, gamma_draws, out):
    n_models = lam.shape[0]
    n_games = offsets.shape[0] - 1
    game_of = np.repeat(np.arange(n_games), np.diff(offsets))
    for t in range(exp_draws.shape[0]):
        totals = np.bincount(game_of, weights=lam[members], minlength=n_games)
        z = exp_draws[t] / totals
        rate = np.bincount(members, weights=z[game_of], minlength=n_models)
        lam[:] = gamma_draws[t] / (rate + tau0)
        out[t] = lam


KERNELS = {"numba": _gibbs_chunk_numba, "numpy": _gibbs_chunk_numpy}


def resolve_kernel(name: str | None = None):
    """Pick a kernel by name, or by the environment flag when ``name`` is None."""
    if name is None:
        name = "numba" if numba_enabled() else "numpy"
    if name not in KERNELS:
        raise ValueError(f"unknown kernel {name!r}; choose from {sorted(KERNELS)}")
    return name, KERNELS[name]
