"""VARMA(p,q) model specification, stability checks, simulation and residual
filtering, Green matrices of the inverted AR/MA operators, and the lag
coefficient blocks that weight residual cross-covariances in central
sequences.

Model convention:

    (I_d - sum_i A_i L^i) X_t = (I_d + sum_j B_j L^j) eps_t

so that residuals satisfy Z_t = X_t - sum_i A_i X_{t-i} - sum_j B_j Z_{t-j},
computed recursively with zero initial values.  The parameter vector stacks
vec(A_1), ..., vec(A_p), vec(B_1), ..., vec(B_q) column-major.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

STABILITY_TOL = 1e-8
GREEN_DECAY_TOL = 1e-12


class ModelError(ValueError):
    """Structurally invalid model input (shape mismatch, unstable spec, ...)."""


def _as_matrix_tuple(mats, d: int, count: int, label: str) -> tuple:
    mats = tuple(np.array(M, dtype=float) for M in mats)
    if len(mats) != count:
        raise ModelError(f"expected {count} {label} matrices, got {len(mats)}")
    for k, M in enumerate(mats):
        if M.shape != (d, d):
            raise ModelError(f"{label}[{k}] has shape {M.shape}, expected ({d}, {d})")
        M.setflags(write=False)
    return mats


@dataclass(frozen=True, eq=False)
class VarmaSpec:
    """Orders (d, p, q) plus AR matrices A_1..A_p and MA matrices B_1..B_q."""

    d: int
    p: int
    q: int
    A: tuple = ()
    B: tuple = ()

    def __post_init__(self):
        if self.d < 1 or self.p < 0 or self.q < 0:
            raise ModelError("need d >= 1, p >= 0, q >= 0")
        object.__setattr__(self, "A", _as_matrix_tuple(self.A, self.d, self.p, "A"))
        object.__setattr__(self, "B", _as_matrix_tuple(self.B, self.d, self.q, "B"))

    def __eq__(self, other):
        if not isinstance(other, VarmaSpec):
            return NotImplemented
        return ((self.d, self.p, self.q) == (other.d, other.p, other.q)
                and all(np.array_equal(a, b) for a, b in zip(self.A, other.A))
                and all(np.array_equal(a, b) for a, b in zip(self.B, other.B)))

    def __hash__(self):
        return hash((self.d, self.p, self.q,
                     tuple(M.tobytes() for M in self.A + self.B)))

    @property
    def n_params(self) -> int:
        return (self.p + self.q) * self.d ** 2

    def theta(self) -> np.ndarray:
        """Parameter vector (vec A_1, ..., vec A_p, vec B_1, ..., vec B_q)."""
        parts = [M.flatten(order="F") for M in self.A + self.B]
        if not parts:
            return np.zeros(0)
        return np.concatenate(parts)

    @classmethod
    def from_theta(cls, theta, d: int, p: int, q: int) -> "VarmaSpec":
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != (p + q) * d * d:
            raise ModelError(
                f"theta has length {theta.size}, expected {(p + q) * d * d}"
            )
        blocks = theta.reshape(p + q, d * d) if p + q else np.zeros((0, d * d))
        mats = [b.reshape(d, d, order="F") for b in blocks]
        return cls(d=d, p=p, q=q, A=tuple(mats[:p]), B=tuple(mats[p:]))

    def to_json(self) -> str:
        obj = {
            "d": self.d,
            "p": self.p,
            "q": self.q,
            "A": [M.tolist() for M in self.A],
            "B": [M.tolist() for M in self.B],
        }
        return json.dumps(obj, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "VarmaSpec":
        obj = json.loads(text)
        return cls(d=obj["d"], p=obj["p"], q=obj["q"], A=obj["A"], B=obj["B"])


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    ar_moduli: np.ndarray
    ma_moduli: np.ndarray
    det_ap: float
    det_bq: float
    messages: tuple = ()

    def __bool__(self):
        return self.ok


def companion_matrix(mats, d: int) -> np.ndarray:
    """Companion matrix of the lag polynomial I - sum_i C_i z^i."""
    p = len(mats)
    if p == 0:
        return np.zeros((0, 0))
    if p == 1:
        return np.array(mats[0])
    C = np.zeros((d * p, d * p))
    for i, M in enumerate(mats):
        C[:d, i * d:(i + 1) * d] = M
    C[d:, :-d] = np.eye(d * (p - 1))
    return C


def _moduli(mats, d: int) -> np.ndarray:
    C = companion_matrix(mats, d)
    if C.size == 0:
        return np.zeros(0)
    return np.abs(np.linalg.eigvals(C))


def validate_spec(spec: VarmaSpec, tol: float = STABILITY_TOL) -> ValidationReport:
    """Check stationarity/invertibility and the full-order conditions.

    Passes iff every eigenvalue modulus of the AR companion matrix and of the
    MA companion matrix (built from -B_j, since I + sum B_j z^j
    = I - sum (-B_j) z^j) is <= 1 - tol, and |det A_p|, |det B_q| > tol when
    the respective order is positive.  Left coprimeness is assumed, not
    tested; a note records that.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    ar_moduli = _moduli(spec.A, spec.d)
    ma_moduli = _moduli([-M for M in spec.B], spec.d)
    det_ap = float(np.linalg.det(spec.A[-1])) if spec.p else 1.0
    det_bq = float(np.linalg.det(spec.B[-1])) if spec.q else 1.0
    msgs = ["left coprimeness of the AR and MA operators is assumed, not checked"]
    ok = True
    if ar_moduli.size and ar_moduli.max() > 1 - tol:
        ok = False
        msgs.append(f"AR companion modulus {ar_moduli.max():.6g} >= {1 - tol:.6g}")
    if ma_moduli.size and ma_moduli.max() > 1 - tol:
        ok = False
        msgs.append(f"MA companion modulus {ma_moduli.max():.6g} >= {1 - tol:.6g}")
    if spec.p and abs(det_ap) <= tol:
        ok = False
        msgs.append(f"|det A_p| = {abs(det_ap):.3g} <= tol")
    if spec.q and abs(det_bq) <= tol:
        ok = False
        msgs.append(f"|det B_q| = {abs(det_bq):.3g} <= tol")
    return ValidationReport(ok, ar_moduli, ma_moduli, det_ap, det_bq, tuple(msgs))


def is_stable(spec: VarmaSpec, tol: float = STABILITY_TOL) -> bool:
    """Assumption on the roots only (used for iterates during estimation,
    where a vanishing det A_p is harmless)."""
    ar = _moduli(spec.A, spec.d)
    ma = _moduli([-M for M in spec.B], spec.d)
    return bool((ar.size == 0 or ar.max() <= 1 - tol)
                and (ma.size == 0 or ma.max() <= 1 - tol))


# ---------------------------------------------------------------------------
# Green matrices and coefficient blocks


@dataclass(frozen=True)
class GreenMatrices:
    """Coefficients of (I - sum A_i z^i)^{-1} (G) and (I + sum B_j z^j)^{-1} (H)."""

    G: np.ndarray  # (U+1, d, d)
    H: np.ndarray  # (U+1, d, d)
    U: int


def green_matrices(spec: VarmaSpec, U: int) -> GreenMatrices:
    """Green matrices up to order U via the defining recursions
    G_u = sum_{i<=min(p,u)} A_i G_{u-i},  H_u = -sum_{j<=min(q,u)} B_j H_{u-j},
    with G_0 = H_0 = I."""
    if U < 0:
        raise ValueError("U must be >= 0")
    d = spec.d
    G = np.zeros((U + 1, d, d))
    H = np.zeros((U + 1, d, d))
    G[0] = np.eye(d)
    H[0] = np.eye(d)
    for u in range(1, U + 1):
        for i, Ai in enumerate(spec.A, 1):
            if i > u:
                break
            G[u] += Ai @ G[u - i]
        for j, Bj in enumerate(spec.B, 1):
            if j > u:
                break
            H[u] -= Bj @ H[u - j]
    return GreenMatrices(G=G, H=H, U=U)


def green_horizon(spec: VarmaSpec, tol: float = GREEN_DECAY_TOL,
                  cap: int = 10_000) -> int:
    """Smallest U with max(||G_U||, ||H_U||) < tol, capped.

    Exponential decay under a valid spec guarantees termination well before
    the cap; the cap protects against near-unit-root inputs.
    """
    d = spec.d
    Gprev = [np.eye(d)] * max(spec.p, 1)
    Hprev = [np.eye(d)] * max(spec.q, 1)
    if spec.p == 0 and spec.q == 0:
        return 1
    u = 0
    while u < cap:
        u += 1
        Gu = np.zeros((d, d))
        for i, Ai in enumerate(spec.A, 1):
            if i <= u:
                Gu += Ai @ Gprev[i - 1]
        Hu = np.zeros((d, d))
        for j, Bj in enumerate(spec.B, 1):
            if j <= u:
                Hu -= Bj @ Hprev[j - 1]
        if max(np.linalg.norm(Gu), np.linalg.norm(Hu)) < tol:
            return u
        Gprev = [Gu] + Gprev[:-1]
        Hprev = [Hu] + Hprev[:-1]
    return cap


@dataclass(frozen=True)
class CoeffBlocks:
    """Lag coefficient blocks c_i, each (p+q)d^2 x d^2, and their horizontal
    stacking C = (c_1, ..., c_m)."""

    c: np.ndarray  # (m, (p+q)d^2, d^2)
    C: np.ndarray  # ((p+q)d^2, m d^2)

    @property
    def m(self) -> int:
        return self.c.shape[0]


def coeff_blocks(spec: VarmaSpec, m: int,
                 green: GreenMatrices | None = None) -> CoeffBlocks:
    """Coefficient blocks weighting lag-i cross-covariances in the central
    sequence.

    AR block l of c_i is sum_{j=0}^{i-l} sum_{k=0}^{min(q, i-j-l)}
    (G_{i-j-k-l} B_k) (x) H_j', with B_0 = I; MA block l is I_d (x) H_{i-l}'
    (zero when i < l).  Norms decay geometrically for valid specs.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    d, p, q = spec.d, spec.p, spec.q
    k = spec.n_params
    if green is None or green.U < m:
        green = green_matrices(spec, m)
    G, H = green.G, green.H
    B = [np.eye(d)] + [np.asarray(Bj) for Bj in spec.B]
    Id = np.eye(d)
    c = np.zeros((m, k, d * d))
    for i in range(1, m + 1):
        rows = []
        for l in range(1, p + 1):
            M = np.zeros((d * d, d * d))
            for j in range(0, i - l + 1):
                for kk in range(0, min(q, i - j - l) + 1):
                    M += np.kron(G[i - j - kk - l] @ B[kk], H[j].T)
            rows.append(M)
        for l in range(1, q + 1):
            if i - l >= 0:
                rows.append(np.kron(Id, H[i - l].T))
            else:
                rows.append(np.zeros((d * d, d * d)))
        if rows:
            c[i - 1] = np.vstack(rows)
    C = c.transpose(1, 0, 2).reshape(k, m * d * d) if k else np.zeros((0, m * d * d))
    return CoeffBlocks(c=c, C=C)


def coeff_blocks_auto(spec: VarmaSpec, tol: float = GREEN_DECAY_TOL,
                      cap: int = 10_000, m_min: int = 1) -> CoeffBlocks:
    """Blocks up to the first lag whose norm falls below tol (capped)."""
    U = max(green_horizon(spec, tol=tol, cap=cap), m_min)
    blocks = coeff_blocks(spec, U)
    norms = np.linalg.norm(blocks.c, axis=(1, 2))
    keep = np.nonzero(norms >= tol)[0]
    m = max(int(keep[-1]) + 1, m_min) if keep.size else m_min
    return CoeffBlocks(c=blocks.c[:m], C=blocks.C[:, :m * spec.d ** 2])


# ---------------------------------------------------------------------------
# Simulation and residuals


@dataclass(frozen=True)
class SeriesData:
    """Observed (or simulated) series, rows indexed by time."""

    X: np.ndarray  # (n, d)
    innovations: np.ndarray | None = None  # retained draws when simulated

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise ModelError("series must be a 2-d array (n, d)")
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ",".join(f"x{j + 1}" for j in range(self.d))
        buf.write(f"t,{cols}\n")
        for t in range(self.n):
            vals = ",".join(repr(float(v)) for v in self.X[t])
            buf.write(f"{t + 1},{vals}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SeriesData":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        header = lines[0].split(",")
        if header[0] != "t":
            raise ModelError("series CSV must start with header 't,x1,...'")
        rows = [[float(v) for v in ln.split(",")[1:]] for ln in lines[1:]]
        return cls(X=np.array(rows))


@dataclass(frozen=True)
class ResidualSet:
    Z: np.ndarray  # (n, d)
    theta: np.ndarray

    @property
    def n(self) -> int:
        return self.Z.shape[0]


def simulate(spec: VarmaSpec, n: int, sampler, seed=None,
             burn_in: int = 200) -> SeriesData:
    """Simulate n observations of the VARMA process with zero initial values.

    Parameters
    ----------
    sampler : object with a ``sample(n, rng) -> (n, d)`` method, or a callable
        with the same signature, drawing iid innovations.
    seed : int, SeedSequence or Generator for reproducibility.
    burn_in : extra leading observations dropped to wash out the zero start.
        With ``burn_in=0`` the recursion is exactly inverted by ``residuals``
        at the true parameter.

    The generated innovations for the retained window are stored on the
    returned series.  Only the root conditions are enforced here: a singular
    trailing coefficient matrix (an identifiability matter) does not prevent
    running the recursion.
    """
    if not is_stable(spec):
        raise ModelError("cannot simulate: roots of the AR or MA operator "
                         "are not outside the unit disk")
    if n < 1 or burn_in < 0:
        raise ValueError("need n >= 1 and burn_in >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    draw = sampler.sample if hasattr(sampler, "sample") else sampler
    total = n + burn_in
    eps = np.asarray(draw(total, rng), dtype=float)
    if eps.shape != (total, spec.d):
        raise ModelError(f"sampler returned shape {eps.shape}, "
                         f"expected {(total, spec.d)}")
    X = np.zeros((total, spec.d))
    for t in range(total):
        acc = eps[t].copy()
        for i, Ai in enumerate(spec.A, 1):
            if t - i >= 0:
                acc += Ai @ X[t - i]
        for j, Bj in enumerate(spec.B, 1):
            if t - j >= 0:
                acc += Bj @ eps[t - j]
        X[t] = acc
    return SeriesData(X=X[burn_in:], innovations=eps[burn_in:].copy())


def residuals(series: SeriesData, spec: VarmaSpec) -> ResidualSet:
    """Residuals Z_t = X_t - sum_i A_i X_{t-i} - sum_j B_j Z_{t-j}, zero
    initial values."""
    X = series.X
    if X.shape[1] != spec.d:
        raise ModelError(f"series dimension {X.shape[1]} != spec dimension {spec.d}")
    Z = np.zeros_like(X)
    for t in range(X.shape[0]):
        acc = X[t].copy()
        for i, Ai in enumerate(spec.A, 1):
            if t - i >= 0:
                acc -= Ai @ X[t - i]
        for j, Bj in enumerate(spec.B, 1):
            if t - j >= 0:
                acc -= Bj @ Z[t - j]
        Z[t] = acc
    return ResidualSet(Z=Z, theta=spec.theta())


def residuals_from_theta(series: SeriesData, theta, d: int, p: int,
                         q: int) -> ResidualSet:
    return residuals(series, VarmaSpec.from_theta(theta, d, p, q))
