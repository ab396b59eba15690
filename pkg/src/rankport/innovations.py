"""Innovation samplers for the simulation experiments: spherical normal, a
three-component Gaussian mixture, and a centered skew-t.

All samplers draw iid mean-zero vectors.  The mixture mean vanishes by
construction of its weights and means; the skew-t is centered by subtracting
its analytic mean (finite for df > 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma as gamma_fn

import numpy as np

MIXTURE_WEIGHTS = (0.375, 0.375, 0.25)
MIXTURE_MEANS = ((-5.0, 0.0), (5.0, 0.0), (0.0, 0.0))
MIXTURE_SIGMA1 = ((7.0, 5.0), (5.0, 5.0))
MIXTURE_SIGMA3 = ((4.0, 0.0), (0.0, 3.0))
# The middle covariance is printed asymmetrically in the source tables; the
# two symmetric readings below are both SPD.  "upper" trusts the upper
# triangle, "lower" the lower one.
MIXTURE_SIGMA2_VARIANTS = {
    "upper": ((7.0, -6.0), (-6.0, 6.0)),
    "lower": ((7.0, 6.0), (6.0, 6.0)),
}


@dataclass(frozen=True)
class SphericalNormal:
    d: int = 2
    name: str = "spherical_normal"

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, self.d))

    def to_config(self) -> dict:
        return {"kind": "spherical_normal", "d": self.d}


@dataclass(frozen=True)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray   # (k, d)
    covs: np.ndarray    # (k, d, d)
    name: str = "gaussian_mixture"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.asarray(self.means, dtype=float)
        cov = np.asarray(self.covs, dtype=float)
        if abs(w.sum() - 1.0) > 1e-12 or np.any(w < 0):
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        chols = []
        for k, S in enumerate(cov):
            if not np.allclose(S, S.T):
                raise ValueError(f"mixture covariance {k} is not symmetric")
            try:
                chols.append(np.linalg.cholesky(S))
            except np.linalg.LinAlgError as exc:
                raise ValueError(f"mixture covariance {k} is not SPD") from exc
        mean = w @ mu
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu - mean)  # center analytically
        object.__setattr__(self, "covs", cov)
        object.__setattr__(self, "_chols", np.array(chols))

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def sample(self, n: int, rng: np.random.Generator,
               return_components: bool = False):
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        z = rng.standard_normal((n, self.d))
        out = self.means[comp] + np.einsum("tij,tj->ti", self._chols[comp], z)
        if return_components:
            return out, comp
        return out

    def to_config(self) -> dict:
        return {"kind": "gaussian_mixture",
                "weights": self.weights.tolist(),
                "means": self.means.tolist(),
                "covs": self.covs.tolist()}


def mixture_default(sigma2: str = "upper") -> GaussianMixture:
    """The bivariate three-component mixture used in the experiments:
    weights (3/8, 3/8, 1/4), means (-5,0), (5,0), (0,0)."""
    if sigma2 not in MIXTURE_SIGMA2_VARIANTS:
        raise ValueError(f"sigma2 variant must be one of "
                         f"{sorted(MIXTURE_SIGMA2_VARIANTS)}")
    covs = (MIXTURE_SIGMA1, MIXTURE_SIGMA2_VARIANTS[sigma2], MIXTURE_SIGMA3)
    return GaussianMixture(weights=MIXTURE_WEIGHTS, means=MIXTURE_MEANS,
                           covs=covs)


@dataclass(frozen=True)
class SkewT:
    """Centered multivariate skew-t (skew-normal over an independent
    chi-square scale), Azzalini-style construction.

    With unit scale matrix, slant alpha and df nu, draws are
    (delta |w0| + v) / sqrt(s / nu) minus the analytic mean, where
    delta = alpha / sqrt(1 + alpha'alpha), v ~ N(0, I - delta delta'),
    w0 ~ N(0, 1) and s ~ chi^2_nu.  df = 3 keeps second moments finite.
    """

    df: float = 3.0
    slant: tuple = (2.0, 2.0)
    name: str = "skew_t"

    def __post_init__(self):
        if self.df <= 2:
            raise ValueError("df must exceed 2 so the variance exists")
        alpha = np.asarray(self.slant, dtype=float)
        delta = alpha / np.sqrt(1.0 + alpha @ alpha)
        cov = np.eye(alpha.size) - np.outer(delta, delta)
        object.__setattr__(self, "_delta", delta)
        object.__setattr__(self, "_chol", np.linalg.cholesky(cov))
        object.__setattr__(self, "_mean", self.analytic_mean())

    @property
    def d(self) -> int:
        return len(self.slant)

    def analytic_mean(self) -> np.ndarray:
        nu = self.df
        alpha = np.asarray(self.slant, dtype=float)
        delta = alpha / np.sqrt(1.0 + alpha @ alpha)
        return delta * np.sqrt(nu / np.pi) * gamma_fn((nu - 1) / 2) / gamma_fn(nu / 2)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        w0 = np.abs(rng.standard_normal(n))
        v = rng.standard_normal((n, self.d)) @ self._chol.T
        sn = self._delta[None, :] * w0[:, None] + v
        s = rng.chisquare(self.df, size=n)
        return sn / np.sqrt(s / self.df)[:, None] - self._mean

    def to_config(self) -> dict:
        return {"kind": "skew_t", "df": self.df, "slant": list(self.slant)}


SAMPLER_KINDS = ("spherical_normal", "gaussian_mixture", "skew_t")


def make_sampler(kind: str, d: int = 2, **params):
    """Factory used by the CLI and Monte Carlo configs."""
    if kind == "spherical_normal":
        return SphericalNormal(d=d)
    if kind == "gaussian_mixture":
        if params.get("weights") is not None:
            return GaussianMixture(weights=params["weights"],
                                   means=params["means"],
                                   covs=params["covs"])
        return mixture_default(sigma2=params.get("sigma2", "upper"))
    if kind == "skew_t":
        return SkewT(df=params.get("df", 3.0),
                     slant=tuple(params.get("slant", (2.0, 2.0))))
    raise ValueError(f"unknown sampler kind {kind!r}")
