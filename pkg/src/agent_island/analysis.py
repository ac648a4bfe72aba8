"""Same-provider preference in final-round jury votes.

Each included game contributes one row per (juror, finalist) pair, with
``y`` = 1 when the juror voted for that finalist and ``s`` = 1 when juror and
finalist share a provider. Two linear probability models are fitted by OLS
with game-clustered (CR1) standard errors:

    pooled:       y ~ sum_p alpha_p [provider(j) = p] + beta * s
    by provider:  y ~ sum_p alpha_p [provider(j) = p] + sum_p beta_p * s * [provider(j) = p]

Neither has a global intercept. Results are reported in percentage points.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .gamelog import RETRIED_THEN_PARSED, PARSED, GameLog, ModelRef, WinnerVote

log = logging.getLogger(__name__)

OTHER = "other"
SAME = "same_provider"


@dataclass(frozen=True)
class VoteObservation:
    game_id: str
    voter_model: ModelRef
    finalist_model: ModelRef
    y: int
    s: int
    finalist_provider_category: str


def build_vote_observations(logs: Iterable[GameLog]) -> list[VoteObservation]:
    """Rows for games whose two finalists come from different providers.

    Jurors whose winner vote did not parse contribute nothing.
    """
    rows = []
    for game in logs:
        finalists = game.finalists
        if len(finalists) != 2:
            continue
        f_models = [game.roster[f] for f in finalists]
        if f_models[0].provider == f_models[1].provider:
            continue
        for ev in game.events:
            if not isinstance(ev, WinnerVote) or ev.parse_status not in (PARSED, RETRIED_THEN_PARSED):
                continue
            voter = game.roster[ev.voter]
            for label, fm in zip(finalists, f_models):
                rows.append(VoteObservation(
                    game_id=game.game_id,
                    voter_model=voter,
                    finalist_model=fm,
                    y=int(ev.parsed_choice == label),
                    s=int(voter.provider == fm.provider),
                    finalist_provider_category=fm.provider,
                ))
    return rows


def bundle_providers(obs: Sequence[VoteObservation], threshold: int = 50) -> list[VoteObservation]:
    """Relabel finalist providers with fewer than ``threshold`` same-provider rows as "other"."""
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    same = Counter(o.finalist_model.provider for o in obs if o.s == 1)
    keep = {p for p, n in same.items() if n >= threshold}
    return [replace(o, finalist_provider_category=o.finalist_model.provider
                    if o.finalist_model.provider in keep else OTHER) for o in obs]


class CollinearityError(ValueError):
    pass


@dataclass(frozen=True)
class OLSFit:
    params: np.ndarray
    cov: np.ndarray
    residuals: np.ndarray
    n_obs: int
    n_clusters: int


def _collinear_columns(X: np.ndarray, names: Sequence[str]) -> list[str]:
    kept: list[int] = []
    bad = []
    for j in range(X.shape[1]):
        trial = kept + [j]
        if np.linalg.matrix_rank(X[:, trial]) == len(trial):
            kept.append(j)
        else:
            bad.append(names[j])
    return bad


def ols_cluster(X: np.ndarray, y: np.ndarray, clusters: Sequence, names: Sequence[str] | None = None
                ) -> OLSFit:
    """OLS with a CR1 cluster-robust covariance.

    cov = c (X'X)^-1 (sum_g X_g' e_g e_g' X_g) (X'X)^-1, c = G/(G-1) * (N-1)/(N-k).
    Computations stay in probability units.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(k)]
    if n == 0 or len(clusters) != n:
        raise ValueError("need one cluster id per observation")
    if np.linalg.matrix_rank(X) < k:
        raise CollinearityError(f"design is rank deficient; collinear columns: "
                                f"{_collinear_columns(X, names)}")
    xtx_inv = np.linalg.inv(X.T @ X)
    beta = xtx_inv @ (X.T @ y)
    resid = y - X @ beta
    _, codes = np.unique(np.asarray(clusters, dtype=object).astype(str), return_inverse=True)
    g = int(codes.max()) + 1
    scores = np.zeros((g, k))
    np.add.at(scores, codes, X * resid[:, None])
    meat = scores.T @ scores
    if g > 1 and n > k:
        factor = g / (g - 1) * (n - 1) / (n - k)
    else:
        factor = 1.0
    cov = factor * xtx_inv @ meat @ xtx_inv
    return OLSFit(beta, cov, resid, n, g)


@dataclass(frozen=True)
class Coefficient:
    estimate: float  # pp
    se: float  # pp
    ci95: tuple[float, float]
    p: float


@dataclass(frozen=True)
class RegressionResult:
    coefficients: dict[str, Coefficient]
    n_obs: int
    n_clusters: int
    threshold: int | None = None


def _result(fit: OLSFit, names: Sequence[str], threshold: int | None) -> RegressionResult:
    coefs = {}
    for j, name in enumerate(names):
        est = 100.0 * float(fit.params[j])
        se = 100.0 * math.sqrt(max(float(fit.cov[j, j]), 0.0))
        p = math.erfc(abs(est / se) / math.sqrt(2)) if se > 0 else (0.0 if est else 1.0)
        coefs[name] = Coefficient(est, se, (est - 1.96 * se, est + 1.96 * se), p)
    return RegressionResult(coefs, fit.n_obs, fit.n_clusters, threshold)


def alpha_name(category: str) -> str:
    return f"provider[{category}]"


def beta_name(category: str) -> str:
    return f"{SAME}:provider[{category}]"


def _categories(obs: Sequence[VoteObservation], categories: Iterable[str] | None) -> list[str]:
    present = {o.finalist_provider_category for o in obs}
    if categories is None:
        return sorted(present)
    cats = sorted(set(categories))
    empty = [c for c in cats if c not in present]
    if empty:
        log.warning("dropping provider categories with no rows: %s", ", ".join(empty))
    return [c for c in cats if c in present]


def fit_pooled(obs: Sequence[VoteObservation], categories: Iterable[str] | None = None,
               threshold: int | None = None) -> RegressionResult:
    if not obs:
        raise ValueError("no observations")
    cats = _categories(obs, categories)
    obs = [o for o in obs if o.finalist_provider_category in cats]
    cat = np.array([o.finalist_provider_category for o in obs])
    X = np.column_stack([(cat == c).astype(float) for c in cats] + [[o.s for o in obs]])
    names = [alpha_name(c) for c in cats] + [SAME]
    fit = ols_cluster(X, np.array([o.y for o in obs]), [o.game_id for o in obs], names)
    return _result(fit, names, threshold)


def fit_by_provider(obs: Sequence[VoteObservation], categories: Iterable[str] | None = None,
                    threshold: int | None = None) -> RegressionResult:
    if not obs:
        raise ValueError("no observations")
    cats = _categories(obs, categories)
    obs = [o for o in obs if o.finalist_provider_category in cats]
    cat = np.array([o.finalist_provider_category for o in obs])
    s = np.array([o.s for o in obs], dtype=float)
    cols = [(cat == c).astype(float) for c in cats]
    names = [alpha_name(c) for c in cats]
    for c in cats:
        inter = s * (cat == c)
        if not inter.any():
            log.warning("no same-provider rows for %s; dropping its interaction", c)
            continue
        cols.append(inter)
        names.append(beta_name(c))
    fit = ols_cluster(np.column_stack(cols), np.array([o.y for o in obs]),
                      [o.game_id for o in obs], names)
    return _result(fit, names, threshold)


REGRESSION_HEADER = ["panel", "parameter", "estimate_pp", "se_pp", "ci95_lo_pp", "ci95_hi_pp",
                     "p", "n_obs", "n_clusters", "threshold"]


def regression_csv(panels: Sequence[tuple[str, RegressionResult]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REGRESSION_HEADER)
    for panel, res in panels:
        for name, c in res.coefficients.items():
            w.writerow([panel, name, f"{c.estimate:.4f}", f"{c.se:.4f}", f"{c.ci95[0]:.4f}",
                        f"{c.ci95[1]:.4f}", f"{c.p:.4f}", res.n_obs, res.n_clusters,
                        "" if res.threshold is None else res.threshold])
    return buf.getvalue()


def regression_text(title: str, res: RegressionResult) -> str:
    rows = [[name, f"{c.estimate:+.2f}", f"({c.se:.2f})", f"[{c.ci95[0]:+.2f}, {c.ci95[1]:+.2f}]",
             f"{c.p:.3f}"] for name, c in res.coefficients.items()]
    header = ["Parameter", "Estimate (pp)", "SE (pp)", "95% CI (pp)", "p"]
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(5)]
    lines = [title]
    for r in [header, *rows]:
        lines.append("  ".join([r[0].ljust(widths[0])] + [x.rjust(w) for x, w in zip(r[1:], widths[1:])]))
    lines.append(f"N = {res.n_obs}, clusters = {res.n_clusters}")
    if res.threshold is not None:
        lines.append(f"min. obs. threshold = {res.threshold}")
    return "\n".join(lines)
