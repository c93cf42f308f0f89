import math

import numpy as np
import pytest

from semistab.riccati import (
    CoupledOscillator,
    LogisticBD,
    MatrixRiccati,
    MultivariateBD,
    ScalarRiccati,
    algebraic_residual,
    bd_generator_drift,
    bd_moment_bound,
    bd_riccati_majorant,
    coupled_oscillator_semigroup,
    matrix_riccati,
    scalar_riccati,
)


def test_scalar_riccati_fixed_points():
    s = ScalarRiccati(1.0, 0.0, 1.0)
    assert s.z_inf == pytest.approx(1.0)
    assert scalar_riccati(s, 0.0, 10.0) == pytest.approx(1.0, abs=1e-8)
    # pure decay: zdot = -z - z^2 solves to z0 e^-t / (1 + z0 (1 - e^-t))
    s = ScalarRiccati(0.0, -1.0, 1.0)
    exact = math.exp(-8.0) / (1 + (1 - math.exp(-8.0)))
    assert scalar_riccati(s, 1.0, 8.0) == pytest.approx(exact, rel=1e-8)
    assert s.z_inf == 0.0
    # worked root
    s = ScalarRiccati(1.0, 1.0, 2.0)
    assert s.z_inf == pytest.approx(1.0)
    assert scalar_riccati(s, 5.0, 10.0) == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(ValueError):
        ScalarRiccati(-1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        scalar_riccati(s, -1.0, 1.0)


def test_scalar_riccati_monotone_and_comparison():
    rng = np.random.default_rng(0)
    for _ in range(100):
        s = ScalarRiccati(rng.uniform(0, 3), rng.uniform(-2, 2), rng.uniform(0.2, 3))
        z0 = rng.uniform(0, 4)
        z0b = z0 + rng.uniform(0, 3)
        ts = [0.3, 0.6, 1.2, 2.4]
        za = [scalar_riccati(s, z0, t) for t in ts]
        zb = [scalar_riccati(s, z0b, t) for t in ts]
        # comparison property and monotone approach to the fixed point
        assert all(a <= b + 1e-10 for a, b in zip(za, zb))
        gaps = [abs(z - s.z_inf) for z in za]
        assert all(g2 <= g1 + 1e-10 for g1, g2 in zip(gaps, gaps[1:]))


def test_matrix_riccati_tanh():
    spec = MatrixRiccati(np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)))
    for t in (0.25, 0.5, 1.0, 2.0):
        p = matrix_riccati(spec, t)
        assert p[0, 0] == pytest.approx(math.tanh(t), abs=1e-8)


def test_matrix_riccati_lyapunov_reduction():
    # S = 0 reduces to the controllability Gramian flow
    from semistab.kernels import gauss_ou_kernel

    A = np.array([[-1.0, 0.3], [0.0, -0.5]])
    Sig = np.array([[1.0, 0.0], [0.2, 0.7]])
    spec = MatrixRiccati(A, Sig @ Sig.T, np.zeros((2, 2)))
    p = matrix_riccati(spec, 1.0)
    _, cov = gauss_ou_kernel(1.0, A, Sig, np.zeros(2))
    np.testing.assert_allclose(p, cov, atol=1e-9)


def test_matrix_riccati_flow_symmetry_and_psd():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(2, 2))
    B = rng.normal(size=(2, 2))
    C = rng.normal(size=(2, 2))
    spec = MatrixRiccati(A, B @ B.T, C @ C.T)
    for t in (0.1, 0.5, 1.0, 3.0):
        p = matrix_riccati(spec, t)
        assert np.abs(p - p.T).max() <= 1e-12
        assert np.linalg.eigvalsh(p).min() >= -1e-10


def test_matrix_riccati_algebraic_fixed_point():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(2, 2))
    Sig = rng.normal(size=(2, 2)) + np.eye(2)
    Cs = rng.normal(size=(2, 2)) + np.eye(2)
    spec = MatrixRiccati(A, Sig @ Sig.T, Cs @ Cs.T)
    p_inf = matrix_riccati(spec, 40.0)
    assert algebraic_residual(spec, p_inf) <= 1e-8


def test_coupled_oscillator_harmonic_reduction():
    res = coupled_oscillator_semigroup(0.0, 1.0, 1.0, np.array([0.0]), 20.0)
    assert res.rho_hat == pytest.approx(-0.5, abs=1e-6)
    # mass at the origin: -2 log Q_t(1)(0) = int Tr(S p_s) = log cosh t
    res1 = coupled_oscillator_semigroup(0.0, 1.0, 1.0, np.array([0.0]), 1.0)
    assert res1.log_mass == pytest.approx(-0.5 * math.log(math.cosh(1.0)), abs=1e-8)
    # mean decays since A - p_inf S is stable
    res2 = coupled_oscillator_semigroup(0.0, 1.0, 1.0, np.array([2.0]), 1.0)
    assert abs(res2.m_t[0]) < 2.0
    assert res2.m_t[0] == pytest.approx(2.0 / math.cosh(1.0), abs=1e-8)


def test_coupled_oscillator_random_2x2():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(2, 2))
    Sig = rng.normal(size=(2, 2)) + 0.5 * np.eye(2)
    Cs = rng.normal(size=(2, 2)) + 0.5 * np.eye(2)
    S = Cs @ Cs.T
    res = coupled_oscillator_semigroup(A, Sig, S, np.array([1.0, -1.0]), 30.0)
    spec = MatrixRiccati(A, Sig @ Sig.T, S)
    p_inf = matrix_riccati(spec, 60.0)
    assert algebraic_residual(spec, p_inf) <= 1e-8
    assert res.rho_hat == pytest.approx(-0.5 * float(np.trace(S @ p_inf)), abs=1e-6)
    # mean flows to zero at large time
    assert np.linalg.norm(res.m_t) < 1e-6


def test_coupled_oscillator_similarity_invariance():
    rng = np.random.default_rng(4)
    A = rng.normal(size=(2, 2))
    Sig = rng.normal(size=(2, 2)) + 0.5 * np.eye(2)
    Cs = rng.normal(size=(2, 2)) + 0.5 * np.eye(2)
    S = Cs @ Cs.T
    x = np.array([0.7, -0.4])
    base = coupled_oscillator_semigroup(A, Sig, S, x, 25.0)
    M = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    Minv = np.linalg.inv(M)
    A2 = M @ A @ Minv
    Sig2 = M @ Sig
    S2 = Minv.T @ S @ Minv
    other = coupled_oscillator_semigroup(A2, Sig2, S2, M @ x, 25.0)
    assert other.rho_hat == pytest.approx(base.rho_hat, abs=1e-6)


def test_coupled_oscillator_controllability_rejection():
    with pytest.raises(ValueError):
        coupled_oscillator_semigroup(
            np.zeros((2, 2)), np.diag([1.0, 0.0]), np.eye(2),
            np.zeros(2), 1.0,
        )


def test_bd_generator_drift_logistic():
    spec = LogisticBD(lam_b=1.0, ups_b=0.5, lam_d=0.2, lam_l=0.1, ups_d=0.3)
    # at x = 1 only the birth move exists
    assert bd_generator_drift(spec, 1) == pytest.approx(spec.birth_rate(1))
    spec2 = LogisticBD(lam_b=1.0, ups_b=0.0, lam_d=0.0, lam_l=0.1, ups_d=0.0)
    assert bd_generator_drift(spec2, 10) == pytest.approx(1.0)  # 1.1*10 - 0.1*100
    with pytest.raises(ValueError):
        bd_generator_drift(spec, 0)


def test_bd_generator_drift_multivariate():
    spec = MultivariateBD(
        lam=np.array([1.0, 0.5]),
        mu=np.array([0.2, 0.2]),
        ups=np.array([0.3, 0.3]),
        sig=np.array([0.0, 0.0]),
        C=np.zeros((2, 2)),
        D=0.2 * np.eye(2),
    )
    e1 = np.array([1, 0])
    up = spec.birth_rates(e1[None, :].astype(float))
    # at a unit state every death is blocked: drift is the total birth rate
    assert bd_generator_drift(spec, e1) == pytest.approx(float(up.sum()))
    x = np.array([3, 2])
    lhs = bd_generator_drift(spec, x)
    a0 = spec.ups.sum() - spec.sig.sum()
    rhs = a0 + float((spec.lam - spec.mu) @ x) - float(x @ (spec.D - spec.C) @ x)
    assert lhs == pytest.approx(rhs)


def test_bd_majorant_quadratic_match():
    spec = LogisticBD(lam_b=2.0, ups_b=0.0, lam_d=0.0, lam_l=0.5, ups_d=0.0)
    maj = bd_riccati_majorant(spec)
    for x in (2, 5, 17, 60):
        assert bd_generator_drift(spec, x) <= maj.rhs(x) + 1e-12


def test_bd_moment_bound_pure_death():
    spec = LogisticBD(lam_b=0.0, ups_b=0.0, lam_d=1.0, lam_l=0.2, ups_d=0.0)
    rep = bd_moment_bound(spec, 30, T=2.0, n_paths=400, seed=7)
    assert rep.ok
    assert not rep.truncated
    assert np.all(np.diff(rep.means) <= 1e-9)  # mean decreasing


def test_bd_moment_bound_logistic():
    spec = LogisticBD(lam_b=2.0, ups_b=0.0, lam_d=0.0, lam_l=0.5, ups_d=0.0)
    rep = bd_moment_bound(spec, 50, T=2.0, n_paths=2000, seed=11)
    assert rep.ok
    assert not rep.truncated
    # the mean settles near the Riccati fixed point from above
    maj = bd_riccati_majorant(spec)
    assert rep.means[-1] <= maj.z_inf + 3 * rep.stderrs[-1] + 0.5


def test_bd_moment_bound_multivariate():
    spec = MultivariateBD(
        lam=np.array([1.5, 1.0]),
        mu=np.array([0.0, 0.0]),
        ups=np.array([0.0, 0.0]),
        sig=np.array([0.0, 0.0]),
        C=np.zeros((2, 2)),
        D=np.array([[0.3, 0.0], [0.0, 0.25]]),
    )
    rep = bd_moment_bound(spec, np.array([20, 15]), T=2.0, n_paths=1000, seed=13)
    assert rep.ok
    assert not rep.truncated


def test_bd_determinism():
    spec = LogisticBD(lam_b=2.0, ups_b=0.0, lam_d=0.0, lam_l=0.5, ups_d=0.0)
    a = bd_moment_bound(spec, 40, T=1.0, n_paths=300, seed=3)
    b = bd_moment_bound(spec, 40, T=1.0, n_paths=300, seed=3)
    np.testing.assert_array_equal(a.means, b.means)
    c = bd_moment_bound(spec, 40, T=1.0, n_paths=300, seed=4)
    assert not np.array_equal(a.means, c.means)


def test_multivariate_spec_validation():
    with pytest.raises(ValueError):
        MultivariateBD(
            lam=np.array([1.0]), mu=np.array([0.0]),
            ups=np.array([0.0]), sig=np.array([1.0]),  # |ups| < |sig|
            C=np.zeros((1, 1)), D=np.eye(1),
        )
    with pytest.raises(ValueError):
        MultivariateBD(
            lam=np.array([1.0]), mu=np.array([0.0]),
            ups=np.array([0.0]), sig=np.array([0.0]),
            C=np.eye(1), D=np.eye(1),  # B = 0 not positive definite
        )
