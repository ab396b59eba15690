import json

import numpy as np
import pytest

from rankport import (
    ModelError,
    SeriesData,
    VarmaSpec,
    coeff_blocks,
    green_matrices,
    residuals,
    simulate,
    validate_spec,
)
from rankport.varma import coeff_blocks_auto, green_horizon, residuals_from_theta


class ZeroSampler:
    def sample(self, n, rng):
        return np.zeros((n, 2))


class NormalSampler:
    def __init__(self, d=2):
        self.d = d

    def sample(self, n, rng):
        return rng.standard_normal((n, self.d))


# ---------------------------------------------------------------------------
# validation


def test_validate_null_model_passes(null_spec):
    report = validate_spec(null_spec)
    assert report.ok
    # eigenvalues of [[.5,.2],[-.1,.4]] solve l^2 - .9 l + .22 = 0, complex
    # pair with squared modulus equal to the determinant .22
    assert np.allclose(report.ar_moduli, np.sqrt(0.22), atol=1e-12)
    assert np.allclose(sorted(report.ma_moduli), [0.3, 0.4], atol=1e-12)


def test_validate_unit_root_fails():
    spec = VarmaSpec(d=2, p=1, q=0, A=[np.eye(2)])
    assert not validate_spec(spec).ok


def test_validate_white_noise_vacuous():
    assert validate_spec(VarmaSpec(d=2, p=0, q=0)).ok


def test_validate_singular_last_matrix_fails():
    spec = VarmaSpec(d=2, p=1, q=0, A=[[[0.5, 0.0], [0.5, 0.0]]])
    report = validate_spec(spec)
    assert not report.ok and any("det" in m for m in report.messages)


def test_validate_bad_tol():
    with pytest.raises(ValueError):
        validate_spec(VarmaSpec(d=2, p=0, q=0), tol=0.0)


def test_spec_shape_mismatch():
    with pytest.raises(ModelError):
        VarmaSpec(d=2, p=1, q=0, A=[np.eye(3)])
    with pytest.raises(ModelError):
        VarmaSpec(d=2, p=2, q=0, A=[np.eye(2)])


def test_coprimeness_warning_present(null_spec):
    assert any("coprime" in m for m in validate_spec(null_spec).messages)


# ---------------------------------------------------------------------------
# Green matrices


def test_green_white_noise():
    g = green_matrices(VarmaSpec(d=2, p=0, q=0), U=4)
    assert np.allclose(g.G[0], np.eye(2)) and np.allclose(g.H[0], np.eye(2))
    assert np.allclose(g.G[1:], 0.0) and np.allclose(g.H[1:], 0.0)


def test_green_var1_matrix_powers():
    A = np.array([[0.5, 0.2], [-0.1, 0.4]])
    g = green_matrices(VarmaSpec(d=2, p=1, q=0, A=[A]), U=8)
    for u in range(9):
        assert np.allclose(g.G[u], np.linalg.matrix_power(A, u), atol=1e-13)


def test_green_ma1_powers():
    B = np.array([[0.3, 0.0], [0.0, 0.4]])
    g = green_matrices(VarmaSpec(d=2, p=0, q=1, B=[B]), U=8)
    for u in range(9):
        assert np.allclose(g.H[u], np.linalg.matrix_power(-B, u), atol=1e-13)


def test_green_recursion_residual(null_spec):
    g = green_matrices(null_spec, U=30)
    A, B = null_spec.A, null_spec.B
    for u in range(1, 31):
        gres = g.G[u] - sum(A[i - 1] @ g.G[u - i]
                            for i in range(1, min(1, u) + 1))
        hres = g.H[u] + sum(B[j - 1] @ g.H[u - j]
                            for j in range(1, min(1, u) + 1))
        assert np.linalg.norm(gres) <= 1e-12
        assert np.linalg.norm(hres) <= 1e-12


def test_green_horizon_decays(null_spec):
    U = green_horizon(null_spec, tol=1e-12)
    g = green_matrices(null_spec, U)
    assert max(np.linalg.norm(g.G[U]), np.linalg.norm(g.H[U])) < 1e-12


# ---------------------------------------------------------------------------
# coefficient blocks


def test_coeff_blocks_pure_var1():
    A = np.array([[0.5, 0.2], [-0.1, 0.4]])
    spec = VarmaSpec(d=2, p=1, q=0, A=[A])
    blocks = coeff_blocks(spec, 6)
    g = green_matrices(spec, 6)
    for i in range(1, 7):
        assert np.allclose(blocks.c[i - 1], np.kron(g.G[i - 1], np.eye(2)),
                           atol=1e-13)


def test_coeff_blocks_pure_ma1():
    B = np.array([[0.3, 0.0], [0.0, 0.4]])
    spec = VarmaSpec(d=2, p=0, q=1, B=[B])
    blocks = coeff_blocks(spec, 6)
    g = green_matrices(spec, 6)
    for i in range(1, 7):
        assert np.allclose(blocks.c[i - 1], np.kron(np.eye(2), g.H[i - 1].T),
                           atol=1e-13)


def test_coeff_blocks_varma11_first_lag(null_spec):
    c1 = coeff_blocks(null_spec, 1).c[0]
    assert np.allclose(c1[:4], np.eye(4), atol=1e-14)
    assert np.allclose(c1[4:], np.eye(4), atol=1e-14)


def test_coeff_blocks_geometric_decay(null_spec):
    blocks = coeff_blocks(null_spec, 40)
    norms = np.linalg.norm(blocks.c, axis=(1, 2))
    i = np.arange(1, 41)
    slope = np.polyfit(i, np.log(norms), 1)[0]
    assert slope < 0


def test_coeff_blocks_auto_truncates(null_spec):
    blocks = coeff_blocks_auto(null_spec, tol=1e-12)
    norms = np.linalg.norm(blocks.c, axis=(1, 2))
    assert norms[-1] >= 1e-12 or blocks.m == 1
    tail = coeff_blocks(null_spec, blocks.m + 3).c[blocks.m:]
    assert np.all(np.linalg.norm(tail, axis=(1, 2)) < 1e-12)


def test_coeff_blocks_bad_m(null_spec):
    with pytest.raises(ValueError):
        coeff_blocks(null_spec, 0)


# ---------------------------------------------------------------------------
# simulation / residuals


def test_simulate_zero_sampler(null_spec):
    s = simulate(null_spec, 50, ZeroSampler(), seed=0, burn_in=10)
    assert np.allclose(s.X, 0.0)


def test_simulate_identity_model():
    s = simulate(VarmaSpec(d=2, p=0, q=0), 100, NormalSampler(), seed=1,
                 burn_in=0)
    assert np.allclose(s.X, s.innovations)


def test_simulate_deterministic(null_spec):
    a = simulate(null_spec, 64, NormalSampler(), seed=9, burn_in=32)
    b = simulate(null_spec, 64, NormalSampler(), seed=9, burn_in=32)
    assert np.array_equal(a.X, b.X)


def test_simulate_invalid_spec_errors():
    bad = VarmaSpec(d=2, p=1, q=0, A=[np.eye(2)])
    with pytest.raises(ModelError):
        simulate(bad, 10, NormalSampler(), seed=0)


def test_var1_stationary_covariance_lyapunov():
    # fixed-point iteration for Gamma0 = A Gamma0 A' + I
    A = np.array([[0.5, 0.2], [-0.1, 0.4]])
    gamma = np.eye(2)
    for _ in range(200):
        gamma = A @ gamma @ A.T + np.eye(2)
    spec = VarmaSpec(d=2, p=1, q=0, A=[A])
    n = 100_000
    s = simulate(spec, n, NormalSampler(), seed=5, burn_in=500)
    sample = s.X.T @ s.X / n
    # Gaussian MC standard error of a covariance entry
    se = np.sqrt((np.outer(np.diag(gamma), np.diag(gamma)) + gamma ** 2) / n)
    assert np.all(np.abs(sample - gamma) < 3 * se)


def test_residuals_white_noise_identity():
    X = np.random.default_rng(0).standard_normal((40, 2))
    s = SeriesData(X)
    res = residuals(s, VarmaSpec(d=2, p=0, q=0))
    assert np.array_equal(res.Z, X)


@pytest.mark.parametrize("which", ["null", "alt"])
def test_residual_round_trip(null_spec, alt_spec, which):
    spec = null_spec if which == "null" else alt_spec
    s = simulate(spec, 300, NormalSampler(), seed=3, burn_in=0)
    res = residuals(s, spec)
    assert np.abs(res.Z - s.innovations).max() <= 1e-10


def test_residuals_ma1_hand_expansion():
    B = np.array([[0.3, 0.0], [0.0, 0.4]])
    spec = VarmaSpec(d=2, p=0, q=1, B=[B])
    X = np.array([[1.0, 2.0], [0.5, -1.0], [2.0, 0.0]])
    Z = residuals(SeriesData(X), spec).Z
    z1 = X[0]
    z2 = X[1] - B @ z1
    z3 = X[2] - B @ z2
    assert np.allclose(Z, [z1, z2, z3], atol=1e-15)


def test_residuals_theta_length_mismatch():
    s = SeriesData(np.zeros((10, 2)))
    with pytest.raises(ModelError):
        residuals_from_theta(s, np.zeros(3), 2, 1, 1)


# ---------------------------------------------------------------------------
# parameter vector and serialization


@pytest.mark.parametrize("d,p,q", [(1, 1, 0), (2, 1, 1), (2, 2, 1), (3, 0, 2)])
def test_theta_round_trip(d, p, q):
    rng = np.random.default_rng(d * 100 + p * 10 + q)
    theta = rng.uniform(-0.2, 0.2, size=(p + q) * d * d)
    spec = VarmaSpec.from_theta(theta, d, p, q)
    assert np.array_equal(spec.theta(), theta)
    again = VarmaSpec.from_theta(spec.theta(), d, p, q)
    assert all(np.array_equal(a, b) for a, b in zip(spec.A, again.A))
    assert all(np.array_equal(a, b) for a, b in zip(spec.B, again.B))


def test_spec_json_round_trip(null_spec):
    text = null_spec.to_json()
    obj = json.loads(text)
    assert obj["d"] == 2 and obj["p"] == 1 and obj["q"] == 1
    assert obj["A"][0][0] == [0.5, 0.2]  # row-major matrices
    back = VarmaSpec.from_json(text)
    assert np.array_equal(back.theta(), null_spec.theta())


def test_series_csv_round_trip():
    X = np.random.default_rng(2).standard_normal((17, 3))
    s = SeriesData(X)
    text = s.to_csv()
    assert text.splitlines()[0] == "t,x1,x2,x3"
    back = SeriesData.from_csv(text)
    assert np.array_equal(back.X, X)
