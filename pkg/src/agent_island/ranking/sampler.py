"""Bayesian Plackett-Luce skill estimation from winner-only game outcomes.

Model i has skill lambda_i with a Gamma(alpha0, tau0) prior (rate
parameterisation) and wins a game with player set I with probability
lambda_i / sum_{j in I} lambda_j. The Gibbs sampler augments each game with
an exponential latent variable so every full conditional is Gamma.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..gamelog import GameLog, ModelRef
from .kernels import resolve_kernel

log = logging.getLogger(__name__)

CHUNK = 256


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class OutcomeRecord:
    game_id: str
    players: tuple[ModelRef, ...]  # sorted
    winner: ModelRef

    def __post_init__(self) -> None:
        if len(self.players) < 2:
            raise ValueError("an outcome needs at least two players")
        if len(set(self.players)) != len(self.players):
            raise ValueError("players must be pairwise distinct")
        if self.winner not in self.players:
            raise ValueError("winner must be one of the players")


@dataclass(frozen=True)
class SamplerConfig:
    alpha0: float = 1.0
    tau0: float = 1.0
    iterations: int = 2000
    burn_in: int = 500
    seed: int = 42

    def __post_init__(self) -> None:
        if not (self.alpha0 > 0 and self.tau0 > 0):
            raise ValueError("alpha0 and tau0 must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must be in [0, iterations)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def extract_outcomes(logs: Iterable[GameLog]) -> list[OutcomeRecord]:
    out = []
    for game in logs:
        if game.winner is None or game.winner not in game.roster:
            raise ValueError(f"game {game.game_id}: winner label missing from roster")
        out.append(OutcomeRecord(
            game_id=game.game_id,
            players=tuple(sorted(game.roster.values())),
            winner=game.roster[game.winner],
        ))
    return out


def count_wins(outcomes: Iterable[OutcomeRecord]) -> dict[ModelRef, int]:
    """Wins per model, with zero for models that played but never won."""
    wins: Counter[ModelRef] = Counter()
    for rec in outcomes:
        for p in rec.players:
            wins[p] += 0
        wins[rec.winner] += 1
    return dict(wins)


def count_games(outcomes: Iterable[OutcomeRecord]) -> dict[ModelRef, int]:
    games: Counter[ModelRef] = Counter()
    for rec in outcomes:
        games.update(rec.players)
    return dict(games)


@dataclass(frozen=True)
class SkillPosterior:
    model: ModelRef
    samples: np.ndarray
    mean: float
    ci50: tuple[float, float]
    ci95: tuple[float, float]
    games: int = 0
    wins: int = 0

    @classmethod
    def from_samples(cls, model: ModelRef, samples: Sequence[float] | np.ndarray,
                     games: int = 0, wins: int = 0) -> SkillPosterior:
        s = np.asarray(samples, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("need a nonempty 1-d sample vector")
        q = np.quantile(s, [0.025, 0.25, 0.75, 0.975])
        return cls(model, s, float(s.mean()), (float(q[1]), float(q[2])),
                   (float(q[0]), float(q[3])), games, wins)


@dataclass(frozen=True)
class Posterior:
    """Full chain from one sampler run. ``trace`` has shape (T, K)."""

    models: tuple[ModelRef, ...]
    trace: np.ndarray
    burn_in: int
    games: np.ndarray
    wins: np.ndarray
    kernel: str = ""

    @property
    def samples(self) -> np.ndarray:
        return self.trace[self.burn_in:]

    def index(self, model: ModelRef) -> int:
        return self.models.index(model)

    def draws(self, model: ModelRef) -> np.ndarray:
        return self.samples[:, self.index(model)]

    def __getitem__(self, model: ModelRef) -> SkillPosterior:
        i = self.index(model)
        return SkillPosterior.from_samples(model, self.samples[:, i],
                                           int(self.games[i]), int(self.wins[i]))

    def per_model(self) -> dict[ModelRef, SkillPosterior]:
        return {m: self[m] for m in self.models}


def gibbs_sample(
    outcomes: Sequence[OutcomeRecord],
    cfg: SamplerConfig = SamplerConfig(),
    *,
    models: Iterable[ModelRef] | None = None,
    include_unplayed: bool = False,
    kernel: str | None = None,
) -> Posterior:
    """Run the Gibbs sampler and keep every iteration.

    Models are indexed in sorted id order. Random draws per iteration: one
    standard exponential per game in input order, then one standard gamma
    per model in index order. ``models`` may name extra models; those
    without games are dropped with a warning unless ``include_unplayed``,
    in which case they are sampled from the prior.
    """
    played = set()
    for rec in outcomes:
        played.update(rec.players)
    universe = set(played)
    if models is not None:
        extra = set(models) - played
        if extra and not include_unplayed:
            log.warning("excluding %d model(s) with no games: %s", len(extra),
                        ", ".join(sorted(m.id for m in extra)))
        elif extra:
            universe |= extra
    ordered = tuple(sorted(universe))
    if not ordered:
        raise SamplerError("no models to sample")
    index = {m: i for i, m in enumerate(ordered)}
    n_models, n_games = len(ordered), len(outcomes)

    sizes = np.fromiter((len(r.players) for r in outcomes), dtype=np.int64, count=n_games)
    offsets = np.zeros(n_games + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    members = np.fromiter((index[p] for r in outcomes for p in r.players), dtype=np.int64,
                          count=int(offsets[-1]))
    wins = np.zeros(n_models, dtype=np.int64)
    for r in outcomes:
        wins[index[r.winner]] += 1
    games = np.bincount(members, minlength=n_models)

    kernel_name, step = resolve_kernel(kernel)
    rng = np.random.default_rng(cfg.seed)
    shape = cfg.alpha0 + wins.astype(float)
    lam = np.ones(n_models)
    trace = np.empty((cfg.iterations, n_models))
    exp_draws = np.empty((CHUNK, n_games))
    gamma_draws = np.empty((CHUNK, n_models))
    with np.errstate(divide="raise", over="raise", invalid="raise"):
        for start in range(0, cfg.iterations, CHUNK):
            stop = min(start + CHUNK, cfg.iterations)
            c = stop - start
            for t in range(c):
                exp_draws[t] = rng.standard_exponential(n_games)
                gamma_draws[t] = rng.standard_gamma(shape)
            try:
                step(members, offsets, lam, float(cfg.tau0), exp_draws[:c], gamma_draws[:c],
                     trace[start:stop])
            except FloatingPointError as exc:
                raise SamplerError(f"numerical failure in sampler: {exc}") from exc
            if not (np.all(np.isfinite(lam)) and np.all(lam > 0)):
                raise SamplerError("skill draws underflowed or became non-finite")
    return Posterior(ordered, trace, cfg.burn_in, games, wins, kernel_name)
