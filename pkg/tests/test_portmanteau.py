import dataclasses

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import chi2

from rankport import (
    KMatrix,
    SeriesData,
    VarmaSpec,
    compute_map,
    gaussian_stat,
    make_grid,
    make_score,
    p_value,
    qmle,
    rank_stat,
    simulate,
    weight_matrices,
)
from rankport.estimation import REstimate, estimate_K, r_estimate_one_step
from rankport.innovations import SphericalNormal
from rankport.portmanteau import CSV_HEADER

NULL = VarmaSpec(d=2, p=1, q=1,
                 A=[[[0.5, 0.2], [-0.1, 0.4]]],
                 B=[[[0.3, 0.0], [0.0, 0.4]]])


def _white_noise_restimate(X, grid):
    """Ranks/signs of raw data under the no-parameter model."""
    m = compute_map(X, grid)
    spec = VarmaSpec(d=X.shape[1], p=0, q=0)
    empty = np.zeros(0)
    return REstimate(theta_tilde=empty, upsilon_hat=np.zeros((0, 0)),
                     central_seq_at_estimate=empty,
                     central_seq_at_prelim=empty, upsilon_cond=1.0,
                     spec=spec, ranks=m.ranks, signs=m.signs)


# ---------------------------------------------------------------------------
# degrees of freedom and p-values


def test_degrees_of_freedom_examples():
    rng = np.random.default_rng(0)
    s = simulate(NULL, 120, SphericalNormal(2), seed=1, burn_in=50)
    fit = qmle(s, 1, 1)
    assert gaussian_stat(s, fit, 5).df == 12
    assert gaussian_stat(s, fit, 25).df == 92


def test_df_error_when_m_too_small():
    s = simulate(NULL, 120, SphericalNormal(2), seed=2, burn_in=50)
    fit = qmle(s, 1, 1)
    with pytest.raises(ValueError, match="degrees of freedom"):
        gaussian_stat(s, fit, 2)
    with pytest.raises(ValueError):
        gaussian_stat(s, fit, 120)


def test_p_value_trivial_and_closed_form():
    assert p_value(0.0, 5) == 1.0
    # chi-square_2 upper tail is exp(-x/2)
    assert p_value(2 * np.log(20), 2) == pytest.approx(0.05, abs=1e-12)


def test_p_value_quadrature_oracle_df12():
    stat = 21.026
    oracle, err = quad(lambda x: chi2.pdf(x, 12), stat, np.inf)
    p = p_value(stat, 12)
    assert p == pytest.approx(oracle, abs=max(1e-8, 10 * err))
    assert round(p, 3) == 0.050


def test_p_value_validation():
    with pytest.raises(ValueError):
        p_value(-1.0, 5)
    with pytest.raises(ValueError):
        p_value(1.0, 0)


# ---------------------------------------------------------------------------
# Gaussian statistic


def test_gaussian_stat_zero_cross_covariances():
    # nonzero rows spaced further apart than m lags: every C_i vanishes
    rng = np.random.default_rng(4)
    X = np.zeros((72, 2))
    X[::8] = rng.standard_normal((9, 2))
    s = SeriesData(X)
    fit = qmle(s, 0, 0)
    rep = gaussian_stat(s, fit, 5)
    assert rep.statistic == pytest.approx(0.0, abs=1e-12)
    assert rep.p_value == 1.0


def test_gaussian_stat_mean_under_white_noise():
    # chi-square_20 mean over replications
    rng = np.random.default_rng(7)
    n, m, reps = 1000, 5, 1000
    stats = np.empty(reps)
    for r in range(reps):
        X = rng.standard_normal((n, 2))
        s = SeriesData(X)
        stats[r] = gaussian_stat(s, qmle(s, 0, 0), m).statistic
    assert abs(stats.mean() - 20.0) < 1.0


def test_gaussian_stat_monotone_in_m():
    s = simulate(NULL, 400, SphericalNormal(2), seed=9, burn_in=100)
    fit = qmle(s, 1, 1)
    reports = [gaussian_stat(s, fit, m) for m in range(3, 12)]
    stats = [r.statistic for r in reports]
    assert all(b >= a - 1e-12 for a, b in zip(stats, stats[1:]))
    for r in reports:
        assert np.all(r.per_lag >= -1e-12)
        assert r.statistic == pytest.approx(r.per_lag.sum(), abs=1e-10)


def test_gaussian_literal_normalization_differs():
    s = simulate(NULL, 300, SphericalNormal(2), seed=10, burn_in=100)
    fit = qmle(s, 1, 1)
    a = gaussian_stat(s, fit, 5)
    b = gaussian_stat(s, fit, 5, literal_normalization=True)
    assert np.isfinite(b.statistic) and b.statistic >= 0
    assert b.statistic != pytest.approx(a.statistic, rel=1e-6)


def test_report_serialization():
    s = simulate(NULL, 200, SphericalNormal(2), seed=11, burn_in=50)
    fit = qmle(s, 1, 1)
    rep = gaussian_stat(s, fit, 4)
    row = rep.csv_row()
    assert row.startswith("gaussian,,4,8,")
    assert CSV_HEADER.split(",")[0] == "method"
    assert '"m": 4' in rep.to_json()


# ---------------------------------------------------------------------------
# weight matrices


def test_weight_matrices_trace_identity():
    D = make_score("vdw", 2).D
    wm = weight_matrices(NULL, np.eye(4), D, 10)
    assert np.trace(wm.E) == pytest.approx(32.0, abs=1e-6)


def test_weight_matrices_no_parameter_limit():
    D = make_score("spearman", 2).D
    wm = weight_matrices(VarmaSpec(d=2, p=0, q=0), np.eye(4), D, 4)
    assert np.allclose(wm.E, np.eye(16))
    for i in range(4):
        assert np.allclose(wm.Omega[i], D)


def test_weight_matrices_idempotent_for_random_valid_spec():
    rng = np.random.default_rng(13)
    for _ in range(5):
        theta = rng.uniform(-0.35, 0.35, size=8)
        spec = VarmaSpec.from_theta(theta, 2, 1, 1)
        from rankport.varma import is_stable
        if not is_stable(spec):
            continue
        K = np.eye(4) + 0.1 * rng.standard_normal((4, 4))
        D = make_score("vdw", 2).D
        wm = weight_matrices(spec, K, D, 8)
        assert np.linalg.norm(wm.E @ wm.E - wm.E, "fro") < 1e-8


def test_weight_matrices_block_diagonal_identity():
    D = make_score("vdw", 2).D
    wm = weight_matrices(NULL, np.eye(4), D, 6)
    EDE = wm.E @ np.kron(np.eye(6), D) @ wm.E.T
    for i in range(6):
        blk = EDE[i * 4:(i + 1) * 4, i * 4:(i + 1) * 4]
        assert np.abs(blk - wm.Omega[i]).max() < 1e-10


# ---------------------------------------------------------------------------
# rank statistic


def test_rank_stat_zero_cross_covariances():
    rng = np.random.default_rng(14)
    grid = make_grid(48, 2, n_R=6, seed=0)
    rest = _white_noise_restimate(rng.standard_normal((48, 2)), grid)
    # force all-origin scores: rank 0 with zero signs gives zero summands
    rest = dataclasses.replace(rest, ranks=np.zeros(48, dtype=int),
                               signs=np.zeros((48, 2)))
    s = SeriesData(rng.standard_normal((48, 2)))
    rep = rank_stat(s, rest, make_score("vdw", 2), grid, 4,
                    KMatrix(np.eye(4), 0.1))
    assert rep.statistic == 0.0
    assert rep.p_value == 1.0


def test_rank_stat_df_and_mp_rank():
    s = simulate(NULL, 300, SphericalNormal(2), seed=15, burn_in=100)
    fit = qmle(s, 1, 1)
    grid = make_grid(300, 2, n_R=15, seed=0)
    score = make_score("vdw", 2)
    K = estimate_K(s, fit.spec, score, grid)
    rest = r_estimate_one_step(s, fit.spec, score, grid, K)
    rep = rank_stat(s, rest, score, grid, 8, K)
    assert rep.df == 24
    assert rep.mp_rank == 24
    assert 0 <= rep.p_value <= 1
    assert np.all(rep.per_lag >= -1e-12)


def test_rank_stat_unprojected_per_lag_equals_stacked():
    # with no estimated parameters E is the identity and the weighting is
    # block diagonal, so the per-lag and stacked forms coincide exactly
    rng = np.random.default_rng(16)
    grid = make_grid(60, 2, n_R=6, seed=1)
    X = rng.standard_normal((60, 2))
    rest = _white_noise_restimate(X, grid)
    s = SeriesData(X)
    for kind in ("sign", "spearman", "vdw"):
        rep = rank_stat(s, rest, make_score(kind, 2), grid, 5,
                        KMatrix(np.eye(4), 0.1))
        assert rep.statistic == pytest.approx(rep.per_lag.sum(), abs=1e-10)
        assert rep.df == 20


def test_rank_stat_orthogonal_invariance_exact():
    # quarter-turn of data and grid leaves every rank statistic unchanged
    rng = np.random.default_rng(17)
    Q = np.array([[0.0, -1.0], [1.0, 0.0]])
    grid = make_grid(80, 2, n_R=8, seed=2)
    grid_rot = dataclasses.replace(grid, directions=grid.directions @ Q.T,
                                   points=grid.points @ Q.T)
    X = rng.standard_normal((80, 2))
    rest = _white_noise_restimate(X, grid)
    rest_rot = _white_noise_restimate(X @ Q.T, grid_rot)
    assert np.array_equal(rest.ranks, rest_rot.ranks)
    for kind in ("sign", "spearman", "vdw"):
        score = make_score(kind, 2)
        a = rank_stat(SeriesData(X), rest, score, grid, 6,
                      KMatrix(np.eye(4), 0.1))
        b = rank_stat(SeriesData(X @ Q.T), rest_rot, score, grid_rot, 6,
                      KMatrix(np.eye(4), 0.1))
        assert a.statistic == pytest.approx(b.statistic, abs=1e-12)


def test_rank_stat_projected_forms_are_close_not_equal():
    # with estimated parameters the stacked and per-lag forms are the same
    # statistic only asymptotically; both stay in the chi-square range
    s = simulate(NULL, 1000, SphericalNormal(2), seed=18, burn_in=200)
    fit = qmle(s, 1, 1)
    grid = make_grid(1000, 2, n_R=25, seed=0)
    score = make_score("vdw", 2)
    K = estimate_K(s, fit.spec, score, grid)
    rest = r_estimate_one_step(s, fit.spec, score, grid, K)
    rep = rank_stat(s, rest, score, grid, 10, K)
    assert rep.statistic > 0
    assert rep.per_lag.sum() > 0
    assert np.isfinite(rep.per_lag).all()
