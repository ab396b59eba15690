"""Score families on the unit ball (sign, Spearman, van der Waerden, custom),
their second-moment matrices, and rank-based residual cross-covariances.

A score J maps the open unit ball to R^d; it is evaluated at the fitted
center-outward values (rank/(n_R+1)) * sign.  The moment matrix

    D = [Int J2 J2' dU] (x) [Int J1 J1' dU]
        - [Int J2 dU Int J2' dU] (x) [Int J1 dU Int J1' dU]

(integrals over the spherical uniform on the ball) is the asymptotic
covariance of sqrt(n-i) vec of the lag-i cross-covariance; vec is
column-major throughout, so vec(J1 J2') = J2 (x) J1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

NAMED_KINDS = ("sign", "spearman", "vdw")


def chi2_quantile(u, df: int):
    """Quantile of the chi-square distribution via the inverse regularized
    incomplete gamma function.  Accepts scalars or arrays in [0, 1)."""
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u >= 1)):
        raise ValueError("chi-square quantile needs u in [0, 1)")
    return 2.0 * special.gammaincinv(df / 2.0, u)


def _norms(u: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.atleast_2d(u), axis=1)


def _named_score(kind: str, d: int) -> Callable[[np.ndarray], np.ndarray]:
    def J(u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        r = _norms(u)
        out = np.zeros_like(u)
        nz = r > 0
        if kind == "sign":
            out[nz] = u[nz] / r[nz, None]
        elif kind == "spearman":
            out[nz] = u[nz]
        elif kind == "vdw":
            out[nz] = np.sqrt(chi2_quantile(r[nz], d))[:, None] * u[nz] / r[nz, None]
        else:
            raise ValueError(f"unknown score kind {kind!r}")
        return out
    return J


def score_moments(kind: str, d: int) -> np.ndarray:
    """Closed-form D for the named kinds.

    sign: I/d^2; spearman: I/(9 d^2); vdw: I.  All three have zero mean over
    the ball (odd symmetry), so the mean-product correction vanishes.  Custom
    scores have no closed form; use :func:`score_moments_mc`.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    I = np.eye(d * d)
    if kind == "sign":
        return I / d ** 2
    if kind == "spearman":
        return I / (9 * d ** 2)
    if kind == "vdw":
        return I
    raise ValueError(f"no closed-form moments for kind {kind!r}")


def sample_spherical_uniform(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Draws from the spherical uniform on the ball: uniform direction times
    an independent uniform radius."""
    v = rng.standard_normal((n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * rng.uniform(0.0, 1.0, size=(n, 1))


def score_moments_mc(J1: Callable, J2: Callable, d: int,
                     n_draws: int = 1_000_000, seed: int = 0,
                     chunk: int = 100_000):
    """Monte Carlo estimate of D with entrywise standard errors.

    The two bracketed factors of D are separate integrals, so each draw pairs
    an argument for J2 with an independent argument for J1; the per-draw
    Kronecker products then average to kron(E[J2 J2'], E[J1 J1']) exactly,
    and their sample variance gives entrywise standard errors.  Used both
    for custom score pairs and as the independent integration oracle for
    the closed forms.
    """
    rng = np.random.default_rng(seed)
    k = d * d
    s = np.zeros((k, k))
    s2 = np.zeros((k, k))
    s_j1 = np.zeros(d)
    s_j2 = np.zeros(d)
    done = 0
    while done < n_draws:
        b = min(chunk, n_draws - done)
        u2 = sample_spherical_uniform(b, d, rng)
        u1 = sample_spherical_uniform(b, d, rng)
        a1 = np.atleast_2d(J1(u1))
        a2 = np.atleast_2d(J2(u2))
        # kron(J2 J2', J1 J1')[i*d+k, j*d+l] = a2_i a2_j a1_k a1_l per draw
        s += np.einsum("ti,tk,tj,tl->ikjl", a2, a1, a2, a1).reshape(k, k)
        q1 = a1 * a1
        q2 = a2 * a2
        s2 += np.einsum("ti,tk,tj,tl->ikjl", q2, q1, q2, q1).reshape(k, k)
        s_j1 += a1.sum(axis=0)
        s_j2 += a2.sum(axis=0)
        done += b
    mean = s / n_draws
    se = np.sqrt(np.maximum(s2 / n_draws - mean ** 2, 0.0) / n_draws)
    mu1 = s_j1 / n_draws
    mu2 = s_j2 / n_draws
    D = mean - np.kron(np.outer(mu2, mu2), np.outer(mu1, mu1))
    return D, se


@dataclass(frozen=True)
class ScoreSpec:
    """A score pair (J1, J2) with its moment matrix D."""

    kind: str
    d: int
    J1: Callable
    J2: Callable
    D: np.ndarray
    mean_zero: bool = True
    D_se: np.ndarray | None = None


def make_score(kind: str, d: int, J1: Callable | None = None,
               J2: Callable | None = None, n_draws: int = 1_000_000,
               seed: int = 0) -> ScoreSpec:
    """Build a ScoreSpec.  Named kinds get their closed-form D; a custom pair
    gets a seeded Monte Carlo D with its standard-error matrix attached."""
    if kind in NAMED_KINDS:
        J = _named_score(kind, d)
        return ScoreSpec(kind=kind, d=d, J1=J, J2=J, D=score_moments(kind, d))
    if kind != "custom":
        raise ValueError(f"unknown score kind {kind!r}")
    if J1 is None or J2 is None:
        raise ValueError("custom scores need J1 and J2")
    D, se = score_moments_mc(J1, J2, d, n_draws=n_draws, seed=seed)
    return ScoreSpec(kind="custom", d=d, J1=J1, J2=J2, D=D,
                     mean_zero=False, D_se=se)


def score_eval(spec: ScoreSpec, rank: int, sign: np.ndarray, n_R: int,
               which: int = 1) -> np.ndarray:
    """Evaluate J_which at the center-outward value (rank/(n_R+1)) * sign."""
    if not 0 <= rank <= n_R:
        raise ValueError(f"rank {rank} outside 0..{n_R}")
    return score_vectors(spec, np.array([rank]), np.atleast_2d(sign),
                         n_R, which)[0]


def score_vectors(spec: ScoreSpec, ranks: np.ndarray, signs: np.ndarray,
                  n_R: int, which: int = 1) -> np.ndarray:
    """Vectorized score evaluation at (ranks/(n_R+1)) * signs.

    Origin points (rank 0) contribute zero vectors for every kind.
    """
    ranks = np.asarray(ranks)
    if ranks.min(initial=0) < 0 or ranks.max(initial=0) > n_R:
        raise ValueError(f"ranks outside 0..{n_R}")
    u = (ranks / (n_R + 1))[:, None] * np.asarray(signs, dtype=float)
    J = spec.J1 if which == 1 else spec.J2
    return np.atleast_2d(J(u))


@dataclass(frozen=True)
class RankCrossCov:
    lag: int
    matrix: np.ndarray  # (d, d)
    n_terms: int


def rank_cross_cov(ranks: np.ndarray, signs: np.ndarray, spec: ScoreSpec,
                   lag: int, n_R: int) -> RankCrossCov:
    """Lag-i rank-based cross-covariance
    (n-i)^{-1} sum_{t=i+1}^n J1(F_t) J2(F_{t-i})'."""
    n = len(ranks)
    if not 1 <= lag <= n - 1:
        raise ValueError(f"lag must be in 1..{n - 1}")
    a1 = score_vectors(spec, ranks, signs, n_R, which=1)
    a2 = score_vectors(spec, ranks, signs, n_R, which=2)
    M = a1[lag:].T @ a2[:n - lag] / (n - lag)
    return RankCrossCov(lag=lag, matrix=M, n_terms=n - lag)


def cross_cov_sequence(ranks: np.ndarray, signs: np.ndarray, spec: ScoreSpec,
                       m: int, n_R: int) -> np.ndarray:
    """All lag-1..m cross-covariance matrices as an (m, d, d) array (the score
    vectors are evaluated once)."""
    n = len(ranks)
    if not 1 <= m <= n - 1:
        raise ValueError(f"m must be in 1..{n - 1}")
    a1 = score_vectors(spec, ranks, signs, n_R, which=1)
    a2 = score_vectors(spec, ranks, signs, n_R, which=2)
    out = np.empty((m, signs.shape[1], signs.shape[1]))
    for i in range(1, m + 1):
        out[i - 1] = a1[i:].T @ a2[:n - i] / (n - i)
    return out


def stack_cross_cov(ranks: np.ndarray, signs: np.ndarray, spec: ScoreSpec,
                    m: int, n_R: int) -> np.ndarray:
    """Stacked, weighted vector n^{-1/2} ((n-i)^{1/2} vec G_i)_{i=1..m} of the
    lag 1..m cross-covariances (column-major vec)."""
    n = len(ranks)
    gam = cross_cov_sequence(ranks, signs, spec, m, n_R)
    parts = [np.sqrt(n - i) * gam[i - 1].flatten(order="F")
             for i in range(1, m + 1)]
    return np.concatenate(parts) / np.sqrt(n)


def unstack_cross_cov(stacked: np.ndarray, n: int, d: int) -> np.ndarray:
    """Inverse of :func:`stack_cross_cov`: recover the (m, d, d) matrices."""
    m = stacked.size // (d * d)
    out = np.empty((m, d, d))
    for i in range(1, m + 1):
        v = stacked[(i - 1) * d * d: i * d * d] * np.sqrt(n) / np.sqrt(n - i)
        out[i - 1] = v.reshape(d, d, order="F")
    return out
