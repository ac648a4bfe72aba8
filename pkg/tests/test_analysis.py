from collections import defaultdict
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from agent_island.analysis import (
    OTHER,
    CollinearityError,
    VoteObservation,
    build_vote_observations,
    bundle_providers,
    fit_by_provider,
    fit_pooled,
    ols_cluster,
    regression_csv,
    regression_text,
)

from conftest import make_log, model
from synth import planted_observations, vote_logs


# exact-arithmetic oracles, written independently of the package

def frac_inv(m):
    n = len(m)
    a = [[Fraction(x) for x in row] + [Fraction(int(i == j)) for j in range(n)]
         for i, row in enumerate(m)]
    for c in range(n):
        p = next(r for r in range(c, n) if a[r][c] != 0)
        a[c], a[p] = a[p], a[c]
        piv = a[c][c]
        a[c] = [x / piv for x in a[c]]
        for r in range(n):
            if r != c and a[r][c] != 0:
                f = a[r][c]
                a[r] = [x - f * y for x, y in zip(a[r], a[c])]
    return [row[n:] for row in a]


def matmul(a, b):
    return [[sum(x * y for x, y in zip(row, col)) for col in zip(*b)] for row in a]


def oracle_ols(X, y, clusters):
    X = [[Fraction(v) for v in row] for row in X]
    y = [Fraction(v) for v in y]
    n, k = len(X), len(X[0])
    Xt = [list(c) for c in zip(*X)]
    bread = frac_inv(matmul(Xt, X))
    beta = [row[0] for row in matmul(bread, matmul(Xt, [[v] for v in y]))]
    e = [yi - sum(b * x for b, x in zip(beta, row)) for yi, row in zip(y, X)]
    groups = defaultdict(list)
    for i, g in enumerate(clusters):
        groups[g].append(i)
    meat = [[Fraction(0)] * k for _ in range(k)]
    for idx in groups.values():
        u = [sum(X[i][j] * e[i] for i in idx) for j in range(k)]
        for a in range(k):
            for b in range(k):
                meat[a][b] += u[a] * u[b]
    G = len(groups)
    c = Fraction(G, G - 1) * Fraction(n - 1, n - k)
    cov = [[c * v for v in row] for row in matmul(matmul(bread, meat), bread)]
    return np.array(beta, dtype=float), np.array(cov, dtype=float)


def assert_rel(a, b, tol=1e-8):
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(np.abs(b).max(), 1e-300)
    assert np.abs(a - b).max() <= tol * scale


# fixtures

def fixture_two_by_two():
    # cells (group, s) replicated; y planted with a +0.25 effect of s plus noise
    X, y = [], []
    noise = [0, 1, -1, 2, -2, 1, 0, -1]
    for rep in range(2):
        for g in (0, 1):
            for s in (0, 1):
                X.append([int(g == 0), int(g == 1), s])
                y.append(Fraction(1, 2) + Fraction(1, 4) * s + Fraction(g, 10)
                         + Fraction(noise[4 * rep + 2 * g + s], 20))
    return X, y, list(range(len(y)))


def fixture_three_clusters():
    X = [[1, 0, 1], [1, 0, 0], [0, 1, 1], [0, 1, 0], [1, 0, 1], [0, 1, 0], [1, 0, 0], [0, 1, 1]]
    y = [1, 0, 1, 1, 0, 0, 1, 1]
    clusters = ["g1", "g1", "g1", "g2", "g2", "g3", "g3", "g3"]
    return X, y, clusters


def test_intercept_only():
    fit = ols_cluster(np.ones((6, 1)), np.ones(6), [0, 0, 1, 1, 2, 2])
    assert fit.params[0] == pytest.approx(1.0, abs=1e-12)
    assert fit.cov[0, 0] == pytest.approx(0.0, abs=1e-20)


def test_two_by_two_matches_normal_equations():
    X, y, cl = fixture_two_by_two()
    fit = ols_cluster(np.array(X, float), np.array(y, dtype=float), cl)
    beta, cov = oracle_ols(X, y, cl)
    assert_rel(fit.params, beta, 1e-10)
    assert_rel(fit.cov, cov)
    # balanced additive fit: the s effect is the mean within-group difference
    cell = defaultdict(list)
    for row, v in zip(X, y):
        cell[(row[1], row[2])].append(v)
    m = {k: sum(v) / len(v) for k, v in cell.items()}
    closed = sum(m[(g, 1)] - m[(g, 0)] for g in (0, 1)) / 2
    assert fit.params[2] == pytest.approx(float(closed), rel=1e-10)


def test_three_cluster_sandwich():
    X, y, cl = fixture_three_clusters()
    fit = ols_cluster(np.array(X, float), np.array(y, float), cl)
    beta, cov = oracle_ols(X, y, cl)
    assert_rel(fit.params, beta)
    assert_rel(fit.cov, cov)
    assert fit.n_clusters == 3 and fit.n_obs == 8


def test_matches_statsmodels():
    sm = pytest.importorskip("statsmodels.api")
    rng = np.random.default_rng(0)
    X = np.column_stack([np.ones(300), rng.normal(size=300), rng.integers(0, 2, 300)])
    y = X @ [0.2, 0.5, -0.3] + rng.normal(size=300)
    cl = rng.integers(0, 40, 300)
    ref = sm.OLS(y, X).fit(cov_type="cluster", cov_kwds={"groups": cl})
    fit = ols_cluster(X, y, cl)
    assert_rel(fit.params, ref.params)
    assert_rel(fit.cov, ref.cov_params())


def test_residual_orthogonality():
    rng = np.random.default_rng(1)
    X = np.column_stack([np.ones(500), rng.normal(size=(500, 3)) * 10])
    y = rng.normal(size=500) * 5
    fit = ols_cluster(X, y, rng.integers(0, 50, 500))
    scale = np.abs(X).max() * np.abs(y).max() * len(y)
    assert np.abs(X.T @ fit.residuals).max() <= 1e-8 * scale


def test_singleton_clusters_equal_hc_up_to_factor():
    rng = np.random.default_rng(2)
    n, k = 200, 3
    X = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
    y = rng.normal(size=n)
    fit = ols_cluster(X, y, np.arange(n))
    bread = np.linalg.inv(X.T @ X)
    e = fit.residuals
    hc0 = bread @ (X.T * e**2) @ X @ bread
    factor = n / (n - 1) * (n - 1) / (n - k)
    assert_rel(fit.cov, factor * hc0)


def test_rank_deficiency_names_columns():
    X = np.column_stack([np.ones(6), np.arange(6), 2 * np.ones(6)])
    with pytest.raises(CollinearityError, match="twice"):
        ols_cluster(X, np.arange(6.0), range(6), names=["const", "trend", "twice"])


def test_ols_input_errors():
    with pytest.raises(ValueError):
        ols_cluster(np.ones((3, 1)), np.ones(3), [0, 1])


# observation rows

ROSTER = {"FAAA": "openai/fin-a", "FBBB": "z-ai/fin-b", "J111": "openai/j1", "J222": "z-ai/j2",
          "J333": "google/j3", "J444": "anthropic/j4", "J555": "openai/j5"}
JURY = ["J111", "J222", "J333", "J444", "J555"]


def test_same_provider_finalists_give_no_rows():
    roster = dict(ROSTER, FBBB="openai/fin-b")
    g = make_log(roster, JURY, "FAAA", {j: "FAAA" for j in JURY})
    assert build_vote_observations([g]) == []


def test_rows_per_juror():
    votes = {"J111": "FAAA", "J222": "FBBB", "J333": "FAAA", "J444": "FBBB", "J555": "FBBB"}
    g = make_log(ROSTER, JURY, "FBBB", votes)
    rows = build_vote_observations([g])
    assert len(rows) == 10 and sum(r.y for r in rows) == 5
    by_voter = defaultdict(list)
    for r in rows:
        by_voter[r.voter_model].append(r)
    for rs in by_voter.values():
        assert len(rs) == 2 and sum(r.y for r in rs) == 1
    s_rows = {(r.voter_model.id, r.finalist_model.id) for r in rows if r.s}
    assert s_rows == {("openai/j1", "openai/fin-a"), ("z-ai/j2", "z-ai/fin-b"),
                      ("openai/j5", "openai/fin-a")}


def test_unparsed_juror_excluded():
    votes = {"J111": "FAAA", "J222": None, "J333": "FAAA", "J444": "FBBB", "J555": "FBBB"}
    rows = build_vote_observations([make_log(ROSTER, JURY, "FAAA", votes)])
    assert len(rows) == 8
    assert all(r.voter_model != model("z-ai/j2") for r in rows)


def obs(provider, s, n, y=0):
    voter = model(f"{provider if s else 'zz'}/v")
    return [VoteObservation(f"g{i}", voter, model(f"{provider}/f"), y, s, provider) for i in range(n)]


def test_bundle_all_below():
    rows = obs("openai", 1, 3) + obs("google", 1, 2) + obs("google", 0, 80)
    assert {r.finalist_provider_category for r in bundle_providers(rows)} == {OTHER}


def test_bundle_boundary_strictly_fewer():
    rows = obs("openai", 1, 50) + obs("google", 1, 49) + obs("google", 0, 10)
    cats = {r.finalist_model.provider: r.finalist_provider_category for r in bundle_providers(rows)}
    assert cats == {"openai": "openai", "google": OTHER}


def test_bundle_idempotent_and_size_preserving():
    rows = bundle_providers(build_vote_observations(vote_logs(300, seed=4)), 60)
    again = bundle_providers(rows, 60)
    assert again == rows and len(rows) == len(build_vote_observations(vote_logs(300, seed=4)))
    with pytest.raises(ValueError):
        bundle_providers(rows, 0)


# regressions

def test_pooled_null_exact_zero():
    # every category has identical s=0 and s=1 vote rates
    rows = []
    for p in ("openai", "google"):
        for s in (0, 1):
            for i, y in enumerate([1, 0, 1, 0]):
                rows += [replace(r, y=y, game_id=f"{p}{s}{i}") for r in obs(p, s, 1)]
    res = fit_pooled(rows)
    assert abs(res.coefficients["same_provider"].estimate) < 1e-10


def test_pooled_planted_effect_matches_oracle():
    rows = planted_observations(3000, seed=1)
    res = fit_pooled(rows)
    b = res.coefficients["same_provider"]
    assert 7.0 < b.estimate < 13.0
    cats = sorted({r.finalist_provider_category for r in rows})
    X = np.array([[r.finalist_provider_category == c for c in cats] + [r.s] for r in rows], float)
    y = np.array([r.y for r in rows], float)
    beta = np.linalg.solve(X.T @ X, X.T @ y)
    assert b.estimate == pytest.approx(100 * beta[-1], rel=1e-8)
    assert b.ci95 == pytest.approx((b.estimate - 1.96 * b.se, b.estimate + 1.96 * b.se))
    assert res.n_clusters == 3000 and res.n_obs == len(rows)


def test_single_vote_constraint_inflates_effect():
    # each juror votes once, so s=0 rows average (0.5 - 0.6 f) / (1 - f) and
    # the expected effect is 0.1 / (1 - f), with f the share of s=1 rows
    rows = build_vote_observations(vote_logs(4000, seed=2))
    f = np.mean([r.s for r in rows])
    b = fit_pooled(rows).coefficients["same_provider"]
    assert abs(b.estimate - 10 / (1 - f)) < 3 * b.se


def test_relabeling_finalists_invariant():
    logs = vote_logs(400, seed=3)
    rows = build_vote_observations(logs)
    rng = np.random.default_rng(0)
    perm = rng.permutation(len(rows))
    a = fit_pooled(rows).coefficients["same_provider"]
    b = fit_pooled([rows[i] for i in perm]).coefficients["same_provider"]
    assert a.estimate == pytest.approx(b.estimate, rel=1e-10)
    assert a.se == pytest.approx(b.se, rel=1e-8)


def test_by_provider_single_category_equals_pooled():
    rows = [replace(r, finalist_provider_category=OTHER) for r in planted_observations(500, seed=5)]
    pooled = fit_pooled(rows).coefficients
    split = fit_by_provider(rows).coefficients
    assert split[f"same_provider:provider[{OTHER}]"].estimate == pytest.approx(
        pooled["same_provider"].estimate, rel=1e-10)
    assert split[f"same_provider:provider[{OTHER}]"].se == pytest.approx(
        pooled["same_provider"].se, rel=1e-10)


def test_by_provider_symmetric_categories():
    rows = planted_observations(6000, seed=6, providers=["openai", "google"])
    res = fit_by_provider(rows).coefficients
    a, b = res["same_provider:provider[openai]"], res["same_provider:provider[google]"]
    assert abs(a.estimate - b.estimate) < 3 * np.hypot(a.se, b.se)


def test_by_provider_drops_empty_interaction(caplog):
    rows = obs("openai", 1, 5, y=1) + obs("openai", 0, 5) + obs("google", 0, 5)
    res = fit_by_provider(rows)
    assert "same_provider:provider[google]" not in res.coefficients
    assert "dropping its interaction" in caplog.text


def test_missing_category_dropped_with_warning(caplog):
    rows = planted_observations(50, seed=0, providers=["openai", "google"])
    res = fit_pooled(rows, categories=["openai", "google", "x-ai"])
    assert "provider[x-ai]" not in res.coefficients
    assert "x-ai" in caplog.text


def test_outputs():
    rows = planted_observations(200, seed=7)
    pooled = fit_pooled(rows, threshold=50)
    csv_text = regression_csv([("pooled", pooled)])
    assert csv_text.splitlines()[0].startswith("panel,parameter,estimate_pp")
    assert "same_provider" in csv_text
    text = regression_text("Pooled", pooled)
    assert "Estimate (pp)" in text and "min. obs. threshold = 50" in text
    for c in pooled.coefficients.values():
        assert 0 <= c.p <= 1
    assert pooled.n_clusters <= pooled.n_obs
