"""Ball grids and the empirical center-outward distribution function.

A grid of n = n_R * n_S + n_0 points consists of n_S unit directions crossed
with n_R equispaced radii r/(n_R + 1) plus n_0 copies of the origin.  The
empirical center-outward distribution function of an n-point residual cloud
is the cost-minimizing bijection onto the grid (squared Euclidean cost),
computed with an exact shortest-augmenting-path assignment solver.  Ranks and
signs are read off the assigned gridpoints.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class Grid:
    d: int
    n_R: int
    n_S: int
    n_0: int
    directions: np.ndarray  # (n_S, d) unit vectors
    points: np.ndarray      # (n, d), radius-major, origins last
    symmetric: bool

    @property
    def n(self) -> int:
        return self.n_R * self.n_S + self.n_0

    @property
    def point_ranks(self) -> np.ndarray:
        """Radial index of each gridpoint (0 for origin copies)."""
        r = np.repeat(np.arange(1, self.n_R + 1), self.n_S)
        return np.concatenate([r, np.zeros(self.n_0, dtype=int)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ",".join(f"u{j + 1}" for j in range(self.d))
        buf.write(f"idx,r,{cols}\n")
        ranks = self.point_ranks
        for k in range(self.n):
            rad = ranks[k] / (self.n_R + 1)
            u = self.points[k] / rad if ranks[k] else np.zeros(self.d)
            vals = ",".join(repr(float(v)) for v in u)
            buf.write(f"{k},{repr(float(rad))},{vals}\n")
        return buf.getvalue()


def feasible_radial_counts(n: int) -> list:
    """All n_R with 0 <= n - n_R * floor(n / n_R) < min(n_R, floor(n / n_R))."""
    out = []
    for n_R in range(1, n + 1):
        n_S = n // n_R
        n_0 = n - n_R * n_S
        if n_S >= 1 and n_0 < min(n_R, n_S):
            out.append(n_R)
    return out


def _sphere_directions(n_S: int, d: int, rng: np.random.Generator,
                       symmetric: bool) -> np.ndarray:
    if d == 2:
        offset = rng.uniform(0.0, 1.0)
        angles = 2.0 * np.pi * (np.arange(n_S) + offset) / n_S
        return np.column_stack([np.cos(angles), np.sin(angles)])
    if symmetric:
        half = n_S // 2
        v = rng.standard_normal((half, d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return np.vstack([v, -v])
    v = rng.standard_normal((n_S, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def make_grid(n: int, d: int = 2, n_R: int | None = None, seed: int = 0,
              symmetric: bool | None = None) -> Grid:
    """Build a ball grid for an n-point sample.

    Parameters
    ----------
    n_R : number of radii.  When omitted, the feasible count with n_0 = 0
        closest to sqrt(n) is chosen (falling back to smallest n_0).
    seed : seeds the direction layout (rotation offset for d = 2, uniform
        sphere draws for d >= 3).
    symmetric : force the direction set to be closed under negation.
        Defaults to on exactly when n_S is even, which makes the gridpoint
        average vanish.

    Raises
    ------
    ValueError if the requested factorization violates
    0 <= n_0 < min(n_R, n_S); the message lists feasible n_R values.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if d < 1:
        raise ValueError("d must be >= 1")
    if n_R is None:
        feas = feasible_radial_counts(n)
        n_R = min(feas, key=lambda r: (n - r * (n // r), abs(r - np.sqrt(n))))
    n_S = n // n_R
    n_0 = n - n_R * n_S
    if n_S < 1 or n_0 >= min(n_R, n_S):
        feas = feasible_radial_counts(n)
        raise ValueError(
            f"infeasible grid factorization n={n}, n_R={n_R} "
            f"(n_S={n_S}, n_0={n_0}); feasible n_R: {feas}")
    if symmetric is None:
        symmetric = n_S % 2 == 0
    if symmetric and n_S % 2 == 1:
        raise ValueError("a symmetric grid needs an even number of directions")
    rng = np.random.default_rng(seed)
    dirs = _sphere_directions(n_S, d, rng, symmetric)
    radii = np.arange(1, n_R + 1) / (n_R + 1)
    shell = radii[:, None, None] * dirs[None, :, :]
    points = np.vstack([shell.reshape(n_R * n_S, d), np.zeros((n_0, d))])
    return Grid(d=d, n_R=n_R, n_S=n_S, n_0=n_0, directions=dirs,
                points=points, symmetric=symmetric)


@dataclass(frozen=True)
class CenterOutwardMap:
    """Optimal coupling of a residual cloud with a grid.

    ``assignment[t]`` is the gridpoint index residual t is matched to,
    ``F_values[t]`` the matched gridpoint, and ``total_cost`` the minimized
    sum of squared distances (original, unscaled units).
    """

    assignment: np.ndarray  # (n,) int
    F_values: np.ndarray    # (n, d)
    ranks: np.ndarray       # (n,) int in 0..n_R
    signs: np.ndarray       # (n, d) unit vectors, zero rows at the origin
    total_cost: float
    n_R: int


def ranks_and_signs(F_values: np.ndarray, n_R: int):
    """Ranks (n_R + 1)||F|| (exact integers by grid construction) and unit
    signs F/||F||, with rank 0 and a zero sign vector at the origin."""
    norms = np.linalg.norm(F_values, axis=1)
    ranks = np.rint((n_R + 1) * norms).astype(int)
    signs = np.zeros_like(F_values)
    nz = ranks > 0
    signs[nz] = F_values[nz] / norms[nz, None]
    return ranks, signs


def compute_map(residuals: np.ndarray, grid: Grid) -> CenterOutwardMap:
    """Empirical center-outward distribution function of ``residuals``.

    Solves the square assignment problem between the n residuals and the n
    gridpoints exactly; cost ties are broken by the solver's deterministic
    lowest-index order.  Costs are rescaled by the largest squared residual
    norm before solving (a monotone rescaling, so the optimal assignment is
    unchanged) to keep the solver well conditioned.
    """
    Z = np.asarray(residuals, dtype=float)
    if Z.ndim != 2 or Z.shape[1] != grid.d:
        raise ValueError(f"residuals must have shape (n, {grid.d})")
    if Z.shape[0] != grid.n:
        raise ValueError(
            f"residual count {Z.shape[0]} != grid point count {grid.n}")
    if not np.all(np.isfinite(Z)):
        raise ValueError("residuals contain non-finite values")
    zz = np.sum(Z * Z, axis=1)
    gg = np.sum(grid.points * grid.points, axis=1)
    cost = zz[:, None] + gg[None, :] - 2.0 * (Z @ grid.points.T)
    np.maximum(cost, 0.0, out=cost)
    scale = max(float(zz.max()), 1.0)
    _, cols = linear_sum_assignment(cost / scale)
    F = grid.points[cols]
    total = float(cost[np.arange(grid.n), cols].sum())
    ranks, signs = ranks_and_signs(F, grid.n_R)
    return CenterOutwardMap(assignment=cols, F_values=F, ranks=ranks,
                            signs=signs, total_cost=total, n_R=grid.n_R)


def map_to_csv(m: CenterOutwardMap) -> str:
    buf = io.StringIO()
    d = m.F_values.shape[1]
    cols = ",".join(f"s{j + 1}" for j in range(d))
    buf.write(f"t,grid_idx,rank,{cols}\n")
    for t in range(m.F_values.shape[0]):
        vals = ",".join(repr(float(v)) for v in m.signs[t])
        buf.write(f"{t + 1},{int(m.assignment[t])},{int(m.ranks[t])},{vals}\n")
    return buf.getvalue()
