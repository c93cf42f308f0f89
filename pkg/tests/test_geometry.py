import math

import numpy as np
import pytest

from semistab.geometry import (
    BoundaryProfile,
    MongeSurface,
    boundary_lyapunov,
    coarea_check,
    frame,
    fundamental_forms,
    gram_det_two_ways,
    level_set_density,
    make_polynomial_surface,
    make_surface,
    offset_jacobian,
    signed_distance,
    weingarten_identity_check,
)

PARABOLA = make_surface("parabola")
PARABOLOID = make_surface("paraboloid")
FLAT_IN = make_surface("flat", epsilon=-1)
PARABOLA_IN = make_surface("parabola", epsilon=-1)


def test_frame_parabola_vertex_and_slope():
    fr = frame(PARABOLA, [0.0])
    np.testing.assert_allclose(fr.N, [0.0, -1.0], atol=1e-14)
    np.testing.assert_allclose(fr.T, [[1.0, 0.0]], atol=1e-14)
    assert fr.g[0, 0] == pytest.approx(1.0)

    fr = frame(PARABOLA, [1.0])
    assert fr.g[0, 0] == pytest.approx(5.0)
    np.testing.assert_allclose(fr.N, np.array([2.0, -1.0]) / math.sqrt(5), atol=1e-14)


def test_frame_paraboloid_metric():
    fr = frame(PARABOLOID, [1.0, 0.0])
    np.testing.assert_allclose(fr.g, [[5.0, 0.0], [0.0, 1.0]], atol=1e-14)


def test_frame_invariants_random_points():
    rng = np.random.default_rng(0)
    for surf in (PARABOLA, PARABOLOID):
        for _ in range(1000):
            th = rng.uniform(-1.9, 1.9, size=surf.chart_dim)
            fr = frame(surf, th)
            assert abs(np.linalg.norm(fr.N) - 1) < 1e-10
            assert np.abs(fr.T @ fr.N).max() < 1e-10
            a, b = gram_det_two_ways(surf, th)
            assert a == pytest.approx(b, abs=1e-10)


def test_fundamental_forms_closed_values():
    assert fundamental_forms(PARABOLA, [0.0]).W[0, 0] == pytest.approx(-2.0)
    assert fundamental_forms(PARABOLA, [1.0]).W[0, 0] == pytest.approx(
        -2.0 / 5 ** 1.5
    )
    W = fundamental_forms(PARABOLOID, [0.0, 0.0]).W
    np.testing.assert_allclose(W, -2.0 * np.eye(2), atol=1e-12)


def test_orientation_flip_changes_signs_only():
    ff1 = fundamental_forms(PARABOLA, [0.7])
    ff2 = fundamental_forms(PARABOLA_IN, [0.7])
    np.testing.assert_allclose(ff2.N, -ff1.N, atol=1e-14)
    np.testing.assert_allclose(ff2.W, -ff1.W, atol=1e-14)
    np.testing.assert_allclose(ff2.g, ff1.g, atol=1e-14)


def test_weingarten_identity():
    plane = make_polynomial_surface([0.5, 0.3], (-3, 3), name="plane")
    assert weingarten_identity_check(plane, [0.4]) < 1e-12
    assert np.abs(fundamental_forms(plane, [0.4]).W).max() < 1e-12
    assert weingarten_identity_check(PARABOLA, [0.7]) < 1e-5
    assert weingarten_identity_check(PARABOLOID, [0.5, -0.3]) < 1e-5


def test_weingarten_identity_many_random_points():
    rng = np.random.default_rng(1)
    for surf in (PARABOLA, PARABOLOID):
        for _ in range(100):
            th = rng.uniform(-1.8, 1.8, size=surf.chart_dim)
            assert weingarten_identity_check(surf, th) < 1e-5


def test_offset_jacobian_values():
    assert offset_jacobian(PARABOLA, [0.0], 0.0) == pytest.approx(1.0)
    assert offset_jacobian(PARABOLA, [0.0], 0.1) == pytest.approx(1.2)
    assert offset_jacobian(PARABOLOID, [0.0, 0.0], 0.1) == pytest.approx(1.44)


def test_offset_jacobian_log_derivative_is_trace():
    h = 1e-6
    for surf, th in ((PARABOLA, [0.6]), (PARABOLOID, [0.3, -0.2])):
        ff = fundamental_forms(surf, th)
        lo = math.log(offset_jacobian(surf, th, -h))
        hi = math.log(offset_jacobian(surf, th, h))
        dlog = (hi - lo) / (2 * h)
        assert dlog == pytest.approx(-float(np.trace(ff.W)), abs=1e-6)


def test_offset_jacobian_focal_rejection():
    # curvature -2 at the vertex: focal distance 0.5 on the center side
    with pytest.raises(ValueError):
        offset_jacobian(PARABOLA, [0.0], -0.6)
    assert offset_jacobian(PARABOLA, [0.0], -0.4) > 0


def test_signed_distance_flat():
    res = signed_distance(FLAT_IN, [0.3, 0.7], tube_alpha=2.0)
    assert res.d == pytest.approx(0.7, abs=1e-10)
    assert res.foot_theta[0] == pytest.approx(0.3, abs=1e-10)
    assert res.roundtrip_error < 1e-8


def test_signed_distance_parabola():
    # (0, 0.5) is the focal point of the parabola: the objective is
    # quartic-flat there, so the foot tolerance is looser than d itself
    res = signed_distance(PARABOLA_IN, [0.0, 0.5], tube_alpha=2.0)
    assert res.d == pytest.approx(0.5, abs=1e-9)
    assert abs(res.foot_theta[0]) < 1e-4
    # a surface point projects to itself with zero distance
    on = PARABOLA_IN.embed([0.8])
    res = signed_distance(PARABOLA_IN, on, tube_alpha=2.0)
    assert abs(res.d) < 1e-9
    # orientation flip flips the sign of d
    res_out = signed_distance(PARABOLA, [0.0, 0.5], tube_alpha=2.0)
    assert res_out.d == pytest.approx(-0.5, abs=1e-9)


def test_signed_distance_rejections():
    with pytest.raises(ValueError):
        signed_distance(FLAT_IN, [0.3, 1.5], tube_alpha=1.0)  # outside tube
    with pytest.raises(ValueError):
        # projection foot at the chart edge
        signed_distance(PARABOLA_IN, [5.0, 25.0], tube_alpha=100.0)


def test_signed_distance_roundtrip_random():
    rng = np.random.default_rng(2)
    for _ in range(50):
        th = rng.uniform(-1.5, 1.5)
        u = rng.uniform(-0.2, 0.2)
        fr = frame(PARABOLA_IN, [th])
        x = PARABOLA_IN.embed([th]) + u * fr.N
        res = signed_distance(PARABOLA_IN, x, tube_alpha=0.5)
        assert res.d == pytest.approx(u, abs=1e-8)
        assert res.roundtrip_error <= 1e-8


def test_coarea_flat_strip():
    flat = make_surface("flat", epsilon=-1)
    rep = coarea_check(flat, lambda r: 1.0, alpha=0.5, n_r=16, n_theta=32)
    length = 16.0  # chart (-8, 8)
    assert rep.tube_integral == pytest.approx(0.5 * length, rel=1e-12)
    assert rep.iterated_integral == pytest.approx(0.5 * length, rel=1e-12)
    assert rep.ok


def test_coarea_parabola_singular_profile():
    rep = coarea_check(PARABOLA_IN, lambda r: r ** -0.5, alpha=0.2)
    assert rep.ok
    assert rep.rel_gap <= 1e-3
    assert rep.alpha_used == 0.2


def test_coarea_shrinks_alpha_at_focal_crossing():
    # offsets toward the center of curvature hit the focal point at 0.5
    rep = coarea_check(PARABOLA_IN, lambda r: 1.0, alpha=0.8, n_r=8, n_theta=16)
    assert rep.alpha_used < 0.8


def test_profile_finiteness():
    prof = BoundaryProfile(0.5, alpha=0.2)
    assert prof.chi_bar() == pytest.approx(0.2 ** 0.5 / 0.5)
    assert prof.chi(0.5) == pytest.approx(2 ** 0.5)
    with pytest.raises(ValueError):
        BoundaryProfile(1.5)


def test_level_set_density_flat_gaussian():
    flat = make_surface("flat", epsilon=-1)
    kernel = {"c_t": 1.0 / (2 * math.pi), "sigma_t": 1.0, "m_t": lambda x: x}
    res = level_set_density(kernel, flat, x=[0.0, 1.0], r=0.0, alpha=0.3)
    expected = math.exp(-0.5) / math.sqrt(2 * math.pi)
    assert res.value == pytest.approx(expected, rel=1e-6)
    assert res.ok


def test_level_set_density_far_field_and_bound():
    kernel = {"c_t": 1.0 / (2 * math.pi), "sigma_t": 1.0, "m_t": lambda x: x}
    far = level_set_density(kernel, FLAT_IN, x=[0.0, 9.0], r=0.0, alpha=0.3)
    assert far.value < 1e-10
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = [rng.uniform(-2, 2), rng.uniform(0.3, 3.0)]
        r = rng.uniform(0.0, 0.2)
        res = level_set_density(kernel, PARABOLA_IN, x=x, r=r, alpha=0.25,
                                n_theta=32)
        assert res.ok


def test_boundary_lyapunov_interval():
    prof = BoundaryProfile(0.5)
    assert boundary_lyapunov(prof, (0.0, 1.0), 0.5) == pytest.approx(math.sqrt(2))
    vals = [boundary_lyapunov(prof, (0.0, 1.0), x) for x in (0.4, 0.2, 0.05, 0.01)]
    assert all(b > a for a, b in zip(vals, vals[1:]))  # blows up at the edge


def test_boundary_lyapunov_dirichlet_drift():
    from semistab.kernels import DirichletHeat, discretize

    prof = BoundaryProfile(0.5)
    d = DirichletHeat(50)
    g = d.default_grid(200)
    K = discretize(d, g, 0.5)
    v = np.array([boundary_lyapunov(prof, (0.0, 1.0), x) for x in g.points])
    qv = K.matrix @ v
    c_t = qv.max()
    assert np.isfinite(c_t)
    # Q V_b <= c_t pointwise, so Q(V_b)/V_b <= c_t / V_b decays at the edges
    k = g.size // 20
    assert max(qv[:k].max(), qv[-k:].max()) < c_t


def test_alternate_chart_consistency():
    charts = make_surface("graph_example_8_4")
    psi0 = charts["psi0"]
    # same geometric point x = (theta, theta^2) described in psi0 and in the
    # swapped-axis charts; shape eigenvalues agree in absolute value
    for theta in (1.2, 1.5, 1.9):
        w0 = fundamental_forms(psi0, [theta]).W[0, 0]
        assert w0 == pytest.approx(-2.0 * (1 + 4 * theta**2) ** -1.5, abs=1e-12)
        side = charts["psi_minus"] if theta > 0 else charts["psi_plus"]
        w1 = fundamental_forms(side, [theta**2]).W[0, 0]
        assert abs(w1) == pytest.approx(abs(w0), abs=1e-8)
        # and the two charts embed the same ambient point
        np.testing.assert_allclose(
            side.embed([theta**2]), psi0.embed([theta]), atol=1e-12
        )


def test_chart_domain_enforced():
    with pytest.raises(ValueError):
        frame(PARABOLA, [2.5])
