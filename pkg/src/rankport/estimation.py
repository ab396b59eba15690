"""Gaussian quasi-maximum likelihood and one-step rank-based estimation.

The QMLE maximizes the conditional (zero-initial-value) Gaussian likelihood
by Gauss-Newton with exact derivative filters; its score coincides, lag by
lag, with the coefficient-block weighted sum of residual cross-covariances,
so the fixed point solves the central-sequence equations.  For pure VAR
models one Gauss-Newton step lands exactly on the least-squares solution.

The rank side evaluates the rank-based central sequence at a preliminary
root-n estimator, estimates the cross-information matrix K by perturb-and-
recompute finite differences, and applies the one-step update

    theta_tilde = theta_bar + n^{-1/2} Upsilon^{-1} Delta(theta_bar),

with Upsilon assembled from the coefficient blocks and K.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import Grid, compute_map
from .linalg import svd_solve
from .scores import ScoreSpec, cross_cov_sequence
from .varma import (
    CoeffBlocks,
    ModelError,
    SeriesData,
    VarmaSpec,
    coeff_blocks,
    coeff_blocks_auto,
    is_stable,
    residuals,
)


class EstimationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Gaussian QMLE


@dataclass(frozen=True)
class QmleFit:
    theta_hat: np.ndarray
    sigma_hat: np.ndarray
    iterations: int
    converged: bool
    final_gradient_norm: float
    spec: VarmaSpec


def _filter_with_jacobian(X: np.ndarray, spec: VarmaSpec):
    """Residuals Z_t(theta) and their exact derivatives dZ_t/dtheta'.

    The Jacobian follows the same recursion as the residuals:
    J_t = -[kron(X'_{t-1}, I), ..., kron(Z'_{t-q}, I)] - sum_j B_j J_{t-j}.
    """
    n, d = X.shape
    p, q, k = spec.p, spec.q, spec.n_params
    Z = np.zeros((n, d))
    J = np.zeros((n, d, k))
    I = np.eye(d)
    for t in range(n):
        acc = X[t].copy()
        for i, Ai in enumerate(spec.A, 1):
            if t - i >= 0:
                acc -= Ai @ X[t - i]
        for j, Bj in enumerate(spec.B, 1):
            if t - j >= 0:
                acc -= Bj @ Z[t - j]
        Z[t] = acc
        Jt = J[t]
        for i in range(1, p + 1):
            if t - i >= 0:
                x = X[t - i]
                for s in range(d):
                    Jt[:, (i - 1) * d * d + s * d:(i - 1) * d * d + (s + 1) * d] \
                        -= x[s] * I
        for j in range(1, q + 1):
            if t - j >= 0:
                z = Z[t - j]
                off = (p + j - 1) * d * d
                for s in range(d):
                    Jt[:, off + s * d:off + (s + 1) * d] -= z[s] * I
        for j, Bj in enumerate(spec.B, 1):
            if t - j >= 0:
                Jt -= Bj @ J[t - j]
    return Z, J


def hannan_rissanen_init(X: np.ndarray, p: int, q: int) -> np.ndarray:
    """Two-stage long-autoregression initial estimate.

    Stage 1 fits a long VAR by least squares and keeps its residuals as
    innovation proxies; stage 2 regresses X_t on its own lags and the lagged
    proxies.  The result is shrunk toward zero until the roots condition
    holds, so the returned point is always a valid Gauss-Newton start.
    """
    n, d = X.shape
    if p + q == 0:
        return np.zeros(0)
    h = max(p + q, min(n // 4, int(round(2.0 * np.log(max(n, 3))))))
    rows = n - h
    if rows < h * d + d:
        raise ModelError("series too short for long-autoregression start")
    W = np.hstack([X[h - i: n - i] for i in range(1, h + 1)])
    coef, *_ = np.linalg.lstsq(W, X[h:], rcond=None)
    eps = np.zeros_like(X)
    eps[h:] = X[h:] - W @ coef
    t0 = h + max(p, q)
    regs = [X[t0 - i: n - i] for i in range(1, p + 1)]
    regs += [eps[t0 - j: n - j] for j in range(1, q + 1)]
    R = np.hstack(regs)
    beta, *_ = np.linalg.lstsq(R, X[t0:], rcond=None)
    mats = [beta[b * d:(b + 1) * d].T for b in range(p + q)]
    A = mats[:p]
    B = mats[p:]
    s = 1.0
    for _ in range(200):
        cand = VarmaSpec(d=d, p=p, q=q,
                         A=[s ** i * A[i - 1] for i in range(1, p + 1)],
                         B=[s ** j * B[j - 1] for j in range(1, q + 1)])
        if is_stable(cand, tol=1e-6):
            return cand.theta()
        s *= 0.96
    return np.zeros((p + q) * d * d)


def qmle(series: SeriesData, p: int, q: int, init=None, max_iter: int = 200,
         grad_tol: float | None = None) -> QmleFit:
    """Gaussian QMLE by Gauss-Newton on the conditional likelihood.

    The innovation covariance is profiled out (re-estimated as the residual
    second-moment matrix after each parameter step).  Steps are halved until
    the weighted residual sum of squares decreases and the roots condition
    keeps holding; the fit reports the final normalized gradient norm
    ||score||/n and whether it fell below ``grad_tol``
    (default 1e-8 * (p+q) * d^2).
    """
    X = series.X
    n, d = X.shape
    k = (p + q) * d * d
    if n <= k + 1:
        raise ModelError(f"series length {n} too short for (p+q)d^2 = {k}")
    if p == 0 and q == 0:
        sigma = X.T @ X / n
        return QmleFit(theta_hat=np.zeros(0), sigma_hat=sigma, iterations=0,
                       converged=True, final_gradient_norm=0.0,
                       spec=VarmaSpec(d=d, p=0, q=0))
    if grad_tol is None:
        grad_tol = 1e-8 * (p + q) * d * d
    theta = np.asarray(init, dtype=float).copy() if init is not None \
        else hannan_rissanen_init(X, p, q)
    if theta.size != k:
        raise ModelError(f"init has length {theta.size}, expected {k}")
    spec = VarmaSpec.from_theta(theta, d, p, q)
    if not is_stable(spec, tol=1e-8):
        raise ModelError("initial estimate violates the roots condition")

    gnorm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        Z, J = _filter_with_jacobian(X, spec)
        sigma = Z.T @ Z / n
        try:
            Si = np.linalg.inv(sigma)
        except np.linalg.LinAlgError:
            return QmleFit(theta, sigma, it, False, float("nan"), spec)
        g = np.einsum("tdk,de,te->k", J, Si, Z)
        H = np.einsum("tdk,de,tel->kl", J, Si, J)
        gnorm = float(np.linalg.norm(g)) / n
        delta = -svd_solve(H, g)
        if np.max(np.abs(delta)) < 1e-13 * (1 + np.max(np.abs(theta))):
            break
        ssr0 = float(np.einsum("td,de,te->", Z, Si, Z))
        step = 1.0
        accepted = False
        for _ in range(30):
            cand_theta = theta + step * delta
            cand = VarmaSpec.from_theta(cand_theta, d, p, q)
            if is_stable(cand, tol=1e-8):
                Zc = residuals(SeriesData(X), cand).Z
                ssr = float(np.einsum("td,de,te->", Zc, Si, Zc))
                if ssr <= ssr0 * (1 + 1e-14):
                    theta, spec = cand_theta, cand
                    accepted = True
                    break
            step *= 0.5
        if not accepted or np.max(np.abs(step * delta)) < 1e-13 * (1 + np.max(np.abs(theta))):
            break

    Z, J = _filter_with_jacobian(X, spec)
    sigma = Z.T @ Z / n
    Si = np.linalg.inv(sigma)
    g = np.einsum("tdk,de,te->k", J, Si, Z)
    gnorm = float(np.linalg.norm(g)) / n
    return QmleFit(theta_hat=theta, sigma_hat=sigma, iterations=it,
                   converged=bool(gnorm <= grad_tol),
                   final_gradient_norm=gnorm, spec=spec)


def gaussian_central_sequence(series: SeriesData, spec: VarmaSpec,
                              m_max: int | None = None) -> np.ndarray:
    """Gaussian central sequence sum_i c_i (n-i)^{1/2} vec(G_i) with
    G_i = -(n-i)^{-1} Sigma^{-1} sum_t Z_t Z'_{t-i} (diagnostic use)."""
    Z = residuals(series, spec).Z
    n, d = Z.shape
    sigma = Z.T @ Z / n
    Si = np.linalg.inv(sigma)
    blocks = coeff_blocks_auto(spec) if m_max is None else coeff_blocks(spec, m_max)
    m = min(blocks.m, n - 1)
    out = np.zeros(spec.n_params)
    for i in range(1, m + 1):
        Ci = Z[i:].T @ Z[:n - i] / (n - i)
        gi = -(Si @ Ci).flatten(order="F")
        out += blocks.c[i - 1] @ (np.sqrt(n - i) * gi)
    return out


def discretize_theta(theta: np.ndarray, n: int, c: float) -> np.ndarray:
    """Round a preliminary estimate onto a c * n^{-1/2} lattice (asymptotic
    discretization device; no finite-sample effect intended)."""
    if c <= 0:
        raise ValueError("lattice constant must be positive")
    cell = c / np.sqrt(n)
    return np.round(np.asarray(theta) / cell) * cell


# ---------------------------------------------------------------------------
# Rank-based machinery


def rank_scores_at(series: SeriesData, spec: VarmaSpec, grid: Grid):
    """Center-outward ranks and signs of the residuals at a parameter value."""
    Z = residuals(series, spec).Z
    m = compute_map(Z, grid)
    return m.ranks, m.signs


def _central_from_scores(blocks: CoeffBlocks, ranks, signs, score: ScoreSpec,
                         n_R: int) -> np.ndarray:
    n = len(ranks)
    m = min(blocks.m, n - 1)
    if blocks.c.shape[1] == 0:
        return np.zeros(0)
    gam = cross_cov_sequence(ranks, signs, score, m, n_R)
    w = np.sqrt(n - np.arange(1, m + 1))
    vecs = gam.transpose(0, 2, 1).reshape(m, -1)  # row i = vec_F(gam_i)
    return np.einsum("ikv,iv->k", blocks.c[:m], w[:, None] * vecs)


def rank_central_sequence(series: SeriesData, spec: VarmaSpec,
                          score: ScoreSpec, grid: Grid,
                          m_max: int | None = None) -> np.ndarray:
    """Rank-based central sequence sum_i c_i (n-i)^{1/2} vec(Gam_i).

    The lag sum is truncated where the coefficient blocks fall below 1e-12 in
    norm (their geometric decay makes the tail negligible) unless ``m_max``
    forces a horizon.
    """
    if spec.n_params == 0:
        return np.zeros(0)
    blocks = coeff_blocks_auto(spec) if m_max is None \
        else coeff_blocks(spec, m_max)
    ranks, signs = rank_scores_at(series, spec, grid)
    return _central_from_scores(blocks, ranks, signs, score, grid.n_R)


@dataclass(frozen=True)
class KMatrix:
    """Finite-difference estimate of the cross-information matrix."""

    K: np.ndarray  # (d^2, d^2)
    perturbation_scale: float
    high_variance: bool = False


@dataclass(frozen=True)
class PerturbationMaps:
    """Ranks and signs at a base parameter and at its d^2 canonical
    perturbations.  Score-independent, so one set serves every score family."""

    base: tuple        # (ranks, signs) at theta
    perturbed: tuple   # d^2 pairs (ranks_j, signs_j)
    scale: float       # n^{-1/2}


def perturbation_maps(series: SeriesData, spec: VarmaSpec,
                      grid: Grid) -> PerturbationMaps:
    """Assignments needed by :func:`estimate_K`: the base map at ``spec`` and
    one map at each perturbed parameter theta + n^{-1/2} tau_j with
    tau_j = -c_1 (c_1' c_1)^{-1} e_j."""
    d = spec.d
    n = series.n
    if spec.n_params == 0:
        raise ValueError("K estimation needs p + q >= 1")
    c1 = coeff_blocks(spec, 1).c[0]
    gram = c1.T @ c1
    if np.linalg.matrix_rank(gram) < d * d:
        raise ValueError("degenerate lag-1 coefficient block (singular c1'c1)")
    theta = spec.theta()
    scale = 1.0 / np.sqrt(n)
    base = rank_scores_at(series, spec, grid)
    perturbed = []
    for j in range(d * d):
        e = np.zeros(d * d)
        e[j] = 1.0
        tau = -c1 @ np.linalg.solve(gram, e)
        spec_j = VarmaSpec.from_theta(theta + scale * tau, d, spec.p, spec.q)
        perturbed.append(rank_scores_at(series, spec_j, grid))
    return PerturbationMaps(base=base, perturbed=tuple(perturbed), scale=scale)


def estimate_K(series: SeriesData, spec: VarmaSpec, score: ScoreSpec,
               grid: Grid, maps: PerturbationMaps | None = None) -> KMatrix:
    """Estimate K column by column from lag-1 cross-covariance differences.

    Column j uses the perturbation tau_j = -c_1 (c_1' c_1)^{-1} e_j, for
    which the asymptotic shift of sqrt(n-1) vec(Gam_1) under
    theta -> theta + n^{-1/2} tau_j is exactly the j-th column of K; ranks
    and signs are recomputed on the common grid at each perturbed parameter
    (or reused from ``maps`` when supplied).
    """
    d = spec.d
    n = series.n
    if maps is None:
        maps = perturbation_maps(series, spec, grid)
    ranks0, signs0 = maps.base
    g0 = cross_cov_sequence(ranks0, signs0, score, 1, grid.n_R)[0]
    v0 = g0.flatten(order="F")
    K = np.empty((d * d, d * d))
    for j in range(d * d):
        ranks_j, signs_j = maps.perturbed[j]
        gj = cross_cov_sequence(ranks_j, signs_j, score, 1, grid.n_R)[0]
        K[:, j] = np.sqrt(n - 1) * (gj.flatten(order="F") - v0)
    return KMatrix(K=K, perturbation_scale=maps.scale,
                   high_variance=bool(n < 10 * d * d))


@dataclass(frozen=True)
class REstimate:
    """One-step rank-based update of a preliminary estimator."""

    theta_tilde: np.ndarray
    upsilon_hat: np.ndarray
    central_seq_at_estimate: np.ndarray
    central_seq_at_prelim: np.ndarray
    upsilon_cond: float
    spec: VarmaSpec
    ranks: np.ndarray   # center-outward ranks at theta_tilde (cached)
    signs: np.ndarray   # matching signs
    step_halvings: int = 0


def r_estimate_one_step(series: SeriesData, spec_bar: VarmaSpec,
                        score: ScoreSpec, grid: Grid, K_hat: KMatrix,
                        m_max: int | None = None,
                        prelim_scores=None) -> REstimate:
    """One-step R-estimator from the preliminary fit ``spec_bar``.

    Upsilon is assembled as sum_i c_i K c_i' over the decay-truncated lag
    range.  If the full step leaves the stationarity/invertibility region it
    is halved until it does not (recorded in ``step_halvings``).
    ``prelim_scores`` can pass precomputed (ranks, signs) at ``spec_bar``.
    """
    n = series.n
    d, p, q = spec_bar.d, spec_bar.p, spec_bar.q
    blocks = coeff_blocks_auto(spec_bar) if m_max is None \
        else coeff_blocks(spec_bar, m_max)
    cs = blocks.c[:min(blocks.m, n - 1)]
    ups = np.einsum("iav,vw,ibw->ab", cs, K_hat.K, cs)
    cond = float(np.linalg.cond(ups))
    if not np.isfinite(cond) or cond > 1e12:
        raise EstimationError(
            f"singular information proxy (condition number {cond:.3g})")
    ranks_bar, signs_bar = (prelim_scores if prelim_scores is not None
                            else rank_scores_at(series, spec_bar, grid))
    delta_bar = _central_from_scores(blocks, ranks_bar, signs_bar, score,
                                     grid.n_R)
    full_step = svd_solve(ups, delta_bar) / np.sqrt(n)
    theta_bar = spec_bar.theta()
    halvings = 0
    step = full_step
    while halvings < 60:
        cand = VarmaSpec.from_theta(theta_bar + step, d, p, q)
        if is_stable(cand, tol=1e-8):
            break
        step = step / 2.0
        halvings += 1
    else:
        cand = spec_bar
    spec_tilde = cand
    blocks_tilde = coeff_blocks_auto(spec_tilde) if m_max is None \
        else coeff_blocks(spec_tilde, m_max)
    ranks_t, signs_t = rank_scores_at(series, spec_tilde, grid)
    delta_tilde = _central_from_scores(blocks_tilde, ranks_t, signs_t, score,
                                       grid.n_R)
    return REstimate(theta_tilde=spec_tilde.theta(), upsilon_hat=ups,
                     central_seq_at_estimate=delta_tilde,
                     central_seq_at_prelim=delta_bar, upsilon_cond=cond,
                     spec=spec_tilde, ranks=ranks_t, signs=signs_t,
                     step_halvings=halvings)
