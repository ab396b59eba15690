"""Portmanteau goodness-of-fit statistics: the classical pseudo-Gaussian sum
of normalized squared residual cross-covariances, and its center-outward
rank-based counterpart with the projection weighting that accounts for
parameter estimation.

Degrees of freedom are d^2 (m - p - q) in both cases; the rank statistic's
weighting matrix E (I_m (x) D) E' has exactly that rank (E is an idempotent
projection complement with trace (m - p - q) d^2), so a Moore-Penrose
inverse with a relative SVD cutoff is used.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .estimation import KMatrix, QmleFit, REstimate
from .grids import Grid
from .linalg import SVD_RCOND, pinv_with_rank, sym_sqrt
from .scores import ScoreSpec, stack_cross_cov
from .varma import SeriesData, VarmaSpec, coeff_blocks, residuals


def p_value(stat: float, df: int) -> float:
    """Upper-tail chi-square probability."""
    if stat < 0:
        raise ValueError("statistic must be nonnegative")
    if df < 1:
        raise ValueError("degrees of freedom must be >= 1")
    return float(chi2.sf(stat, df))


@dataclass(frozen=True)
class TestReport:
    statistic: float
    m: int
    df: int
    p_value: float
    method: str                 # "gaussian" or "rank"
    scores: str | None
    per_lag: np.ndarray
    mp_rank: int
    notes: tuple = ()

    def to_json(self) -> str:
        return json.dumps({
            "method": self.method,
            "scores": self.scores,
            "m": self.m,
            "df": self.df,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "per_lag": [float(v) for v in self.per_lag],
            "mp_rank": self.mp_rank,
            "notes": list(self.notes),
        }, indent=2)

    def csv_row(self) -> str:
        sc = self.scores or ""
        return (f"{self.method},{sc},{self.m},{self.df},"
                f"{self.statistic:.10g},{self.p_value:.10g}")


CSV_HEADER = "method,scores,m,df,stat,pvalue"


def _check_m(m: int, n: int, p: int, q: int, d: int) -> int:
    df = d * d * (m - p - q)
    if df <= 0:
        raise ValueError(
            f"non-positive degrees of freedom: m={m} <= p+q={p + q}")
    if m > n - 1:
        raise ValueError(f"m={m} exceeds n-1={n - 1}")
    return df


def gaussian_stat(series: SeriesData, fit: QmleFit, m: int,
                  literal_normalization: bool = False) -> TestReport:
    """Pseudo-Gaussian portmanteau statistic at the QMLE.

    Default is the classical form sum_i (n-i) vec(C_i)'
    (Sigma^{-1} (x) Sigma^{-1}) vec(C_i) on raw residual cross-covariances
    C_i, whose null distribution is asymptotically chi-square with
    d^2 (m - p - q) degrees of freedom.  ``literal_normalization`` instead
    weights the Sigma^{-1}-premultiplied cross-covariances by
    (Sigma (x) Sigma)^{-1}; the two differ by an extra Sigma^{-2} factor on
    one side and the classical form is the recommended one.
    """
    spec = fit.spec
    n, d = series.n, series.d
    df = _check_m(m, n, spec.p, spec.q, d)
    Z = residuals(series, spec).Z
    sigma = Z.T @ Z / n
    try:
        Si = np.linalg.inv(sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular residual covariance") from exc
    per_lag = np.zeros(m)
    for i in range(1, m + 1):
        Ci = Z[i:].T @ Z[:n - i] / (n - i)
        if literal_normalization:
            Gi = -Si @ Ci
            per_lag[i - 1] = (n - i) * float(np.trace(Gi.T @ Si @ Gi @ Si))
        else:
            per_lag[i - 1] = (n - i) * float(np.trace(Ci.T @ Si @ Ci @ Si))
    stat = float(per_lag.sum())
    return TestReport(statistic=stat, m=m, df=df, p_value=p_value(stat, df),
                      method="gaussian", scores=None, per_lag=per_lag,
                      mp_rank=m * d * d)


@dataclass(frozen=True)
class WeightMatrices:
    """Projection complement E, per-lag covariance blocks Omega_i = W_i W_i',
    and the row factors W_i."""

    E: np.ndarray       # (m d^2, m d^2)
    Omega: np.ndarray   # (m, d^2, d^2)
    W: np.ndarray       # (m, d^2, m d^2)


def weight_matrices(spec: VarmaSpec, K: np.ndarray, D: np.ndarray,
                    m: int) -> WeightMatrices:
    """Assemble the estimation-adjusted weighting for lag depth m.

    W_i = (e_i' (x) D^{1/2}) - K c_i' (sum_k c_k K c_k')^{-1} C (I_m (x) D^{1/2}),
    Omega_i = W_i W_i', and E = I - (I_m (x) K) C' (sum_k c_k K c_k')^{-1} C
    with C = (c_1, ..., c_m).  E is idempotent with trace (m - p - q) d^2,
    and Omega_i equals the i-th diagonal block of E (I_m (x) D) E'.
    """
    d = spec.d
    d2 = d * d
    K = np.asarray(K, dtype=float)
    D = np.asarray(D, dtype=float)
    D12 = sym_sqrt(D)
    k = spec.n_params
    if k == 0:
        E = np.eye(m * d2)
        W = np.zeros((m, d2, m * d2))
        for i in range(m):
            W[i][:, i * d2:(i + 1) * d2] = D12
        Omega = np.repeat(D[None, :, :], m, axis=0)
        return WeightMatrices(E=E, Omega=Omega, W=W)
    blocks = coeff_blocks(spec, m)
    cs = blocks.c
    C = blocks.C
    M = np.einsum("iav,vw,ibw->ab", cs, K, cs)
    try:
        MinvC = np.linalg.solve(M, C)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular sum_i c_i K c_i'") from exc
    T = C.T @ MinvC                       # (m d2, m d2)
    Tk = T.reshape(m, d2, m * d2)
    E = np.eye(m * d2) - np.einsum("ab,ibx->iax", K, Tk).reshape(m * d2, m * d2)
    CD = MinvC.reshape(k, m, d2) @ D12    # right-multiply each lag block
    CD = CD.reshape(k, m * d2)
    W = np.zeros((m, d2, m * d2))
    Omega = np.zeros((m, d2, d2))
    for i in range(m):
        Wi = -K @ cs[i].T @ CD
        Wi[:, i * d2:(i + 1) * d2] += D12
        W[i] = Wi
        Omega[i] = Wi @ Wi.T
    return WeightMatrices(E=E, Omega=Omega, W=W)


def rank_stat(series: SeriesData, restimate: REstimate, score: ScoreSpec,
              grid: Grid, m: int, K_hat: KMatrix,
              rcond: float = SVD_RCOND) -> TestReport:
    """Center-outward rank-based portmanteau statistic at the one-step
    R-estimate.

    Computes n gamma' (E (I_m (x) D) E')^- gamma on the stacked, weighted
    lag-1..m rank cross-covariances, with the Moore-Penrose inverse cut at
    ``rcond`` times the largest singular value.  Per-lag contributions are
    reported from the Omega_i^- quadratic forms.  A note is attached when
    the numerical rank strays from d^2 (m - p - q) by more than d^2.
    """
    spec = restimate.spec
    n, d = series.n, series.d
    d2 = d * d
    df = _check_m(m, n, spec.p, spec.q, d)
    gamma = stack_cross_cov(restimate.ranks, restimate.signs, score, m,
                            grid.n_R)
    wm = weight_matrices(spec, K_hat.K, score.D, m)
    mid = wm.E.reshape(m * d2, m, d2) @ score.D   # E (I_m (x) D)
    EDE = mid.reshape(m * d2, m * d2) @ wm.E.T
    pinv, mp_rank, _ = pinv_with_rank(EDE, rcond=rcond)
    stat = float(max(n * gamma @ pinv @ gamma, 0.0))
    notes = []
    if abs(mp_rank - df) > d2:
        notes.append(f"near-singular weighting: numerical rank {mp_rank} "
                     f"vs nominal {df}")
    per_lag = np.zeros(m)
    for i in range(m):
        block = gamma[i * d2:(i + 1) * d2]
        om_pinv, _, _ = pinv_with_rank(wm.Omega[i], rcond=rcond)
        per_lag[i] = float(n * block @ om_pinv @ block)
    return TestReport(statistic=stat, m=m, df=df, p_value=p_value(stat, df),
                      method="rank", scores=score.kind, per_lag=per_lag,
                      mp_rank=mp_rank, notes=tuple(notes))
