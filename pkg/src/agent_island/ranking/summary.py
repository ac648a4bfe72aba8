"""Ranking tables and pairwise head-to-head statistics.

Credible intervals use empirical quantiles with linear interpolation
between order statistics (numpy's default ``linear`` method).
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..gamelog import ModelRef
from .sampler import Posterior, SkillPosterior


@dataclass(frozen=True)
class RankingRow:
    rank: int
    model: ModelRef
    mean: float
    ci50: tuple[float, float]
    ci95: tuple[float, float]
    games: int
    wins: int


def summarize(
    samples: Mapping[ModelRef, Sequence[float] | np.ndarray],
    games: Mapping[ModelRef, int] | None = None,
    wins: Mapping[ModelRef, int] | None = None,
) -> list[RankingRow]:
    """Rank models by posterior mean, highest first; ties go to the smaller id."""
    posts = [
        SkillPosterior.from_samples(m, s, (games or {}).get(m, 0), (wins or {}).get(m, 0))
        for m, s in samples.items()
    ]
    posts.sort(key=lambda p: (-p.mean, p.model.id))
    return [RankingRow(i + 1, p.model, p.mean, p.ci50, p.ci95, p.games, p.wins)
            for i, p in enumerate(posts)]


def summarize_posterior(post: Posterior) -> list[RankingRow]:
    return summarize(
        {m: post.samples[:, i] for i, m in enumerate(post.models)},
        {m: int(g) for m, g in zip(post.models, post.games)},
        {m: int(w) for m, w in zip(post.models, post.wins)},
    )


@dataclass(frozen=True)
class HeadToHead:
    model_a: ModelRef
    model_b: ModelRef
    win_rate: float  # E[lam_a / (lam_a + lam_b)]
    cliffs_delta: float  # Pr(lam_a > lam_b) - Pr(lam_a < lam_b)
    diff_mean: float
    diff_ci95: tuple[float, float]


def head_to_head(post_a: SkillPosterior, post_b: SkillPosterior) -> HeadToHead:
    """Pairwise statistics over draws paired by iteration.

    The win rate is computed for the pair in id order and reflected for the
    reverse order, so win_rate(a, b) + win_rate(b, a) == 1 exactly.
    """
    a = np.asarray(post_a.samples, dtype=float)
    b = np.asarray(post_b.samples, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"sample counts differ: {a.shape} vs {b.shape}")
    n = a.size
    if post_b.model < post_a.model:
        win = 1.0 - float(np.mean(b / (a + b)))
    else:
        win = float(np.mean(a / (a + b)))
    delta = (int(np.count_nonzero(a > b)) - int(np.count_nonzero(a < b))) / n
    diff = a - b
    lo, hi = np.quantile(diff, [0.025, 0.975])
    return HeadToHead(post_a.model, post_b.model, win, delta, float(diff.mean()),
                      (float(lo), float(hi)))


def pairwise_table(post: Posterior, models: Sequence[ModelRef]) -> list[HeadToHead]:
    """Every ordered pair of distinct ``models``, in the order given."""
    per = {m: post[m] for m in models}
    return [head_to_head(per[a], per[b]) for a, b in itertools.permutations(models, 2)]


RANKING_HEADER = ["rank", "model", "mean", "ci50_lo", "ci50_hi", "ci95_lo", "ci95_hi",
                  "games", "wins"]
H2H_HEADER = ["model_a", "model_b", "win_rate", "cliffs_delta", "diff_mean", "diff_ci95_lo",
              "diff_ci95_hi"]


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def rankings_csv(rows: Sequence[RankingRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RANKING_HEADER)
    for r in rows:
        w.writerow([r.rank, r.model.id, _fmt(r.mean), _fmt(r.ci50[0]), _fmt(r.ci50[1]),
                    _fmt(r.ci95[0]), _fmt(r.ci95[1]), r.games, r.wins])
    return buf.getvalue()


def h2h_csv(rows: Sequence[HeadToHead]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(H2H_HEADER)
    for h in rows:
        w.writerow([h.model_a.id, h.model_b.id, _fmt(h.win_rate), _fmt(h.cliffs_delta),
                    _fmt(h.diff_mean), _fmt(h.diff_ci95[0]), _fmt(h.diff_ci95[1])])
    return buf.getvalue()


def _align(header: Sequence[str], body: Sequence[Sequence[str]], left: set[int]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]
    lines = []
    for row in [header, *body]:
        cells = [str(c).ljust(w) if i in left else str(c).rjust(w)
                 for i, (c, w) in enumerate(zip(row, widths))]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)


def rankings_text(rows: Sequence[RankingRow]) -> str:
    body = [[str(r.rank), r.model.id, f"{r.mean:.2f}",
             f"[{r.ci95[0]:.2f}, {r.ci95[1]:.2f}]", str(r.games), str(r.wins)] for r in rows]
    return _align(["Rank", "Model", "Mean", "95% CI", "Games", "Wins"], body, {1})


def h2h_text(rows: Sequence[HeadToHead]) -> str:
    body = [[h.model_a.id, h.model_b.id, f"{h.win_rate:.3f}", f"{h.cliffs_delta:+.3f}",
             f"{h.diff_mean:+.2f} [{h.diff_ci95[0]:+.2f}, {h.diff_ci95[1]:+.2f}]"] for h in rows]
    return _align(["A", "B", "Pr(A>B)", "Cliff's delta", "lamA - lamB (95% CI)"], body, {0, 1})
