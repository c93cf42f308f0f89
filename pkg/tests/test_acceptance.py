"""Acceptance suite: every release criterion at its stated tolerance.

Each test prints one PASS/FAIL line (run pytest with -s or check the
captured output).  Budgets: the slow Monte Carlo cases run at their full
populations, so this module dominates the suite runtime.
"""

import json
import math
import time

import numpy as np
import pytest

from semistab.contraction import (
    build_pvc_chain,
    geometric_decay_curve,
    rescaled_lyapunov,
    v_dobrushin,
)
from semistab.core import FunctionVec, GridDomain, LyapunovSpec, MeasureVec
from semistab.geometry import (
    coarea_check,
    fundamental_forms,
    make_surface,
    offset_jacobian,
    weingarten_identity_check,
)
from semistab.kernels import (
    DirichletHeat,
    HalfHarmonicOscillator,
    HarmonicOscillator,
    discretize,
    doob_h_transform,
    hermite_series_kernel,
    mehler_kernel,
)
from semistab.riccati import (
    MatrixRiccati,
    ScalarRiccati,
    algebraic_residual,
    coupled_oscillator_semigroup,
    matrix_riccati,
    scalar_riccati,
)
from semistab.simulate import mc_validate
from semistab.spectral import leading_eigentriple
from semistab.subgeometric import build_subgeo_chain, ode_majorant, prototype_drift
from semistab.cli import run_experiment


def report(name, ok, detail=""):
    print(f"{'PASS' if ok else 'FAIL'} {name}  {detail}")
    assert ok, f"{name}: {detail}"


# -- criterion 1: eigenvalue recovery ---------------------------------------

def test_criterion_1_harmonic_eigenpair():
    t0 = time.perf_counter()
    m = HarmonicOscillator()
    g = GridDomain.uniform_closed(-8, 8, 400)
    triple = leading_eigentriple(discretize(m, g, 0.5), tol=1e-12)
    rho_err = abs(triple.rho - (-0.5))
    h = triple.h.values / math.sqrt(float(triple.h.values**2 @ g.cell_weights))
    href = m.exact_h(g.points)
    if h @ href < 0:
        h = -h
    l2 = math.sqrt(float((h - href) ** 2 @ g.cell_weights))
    dt = time.perf_counter() - t0
    report("criterion 1a (harmonic rho, h)",
           rho_err <= 1e-3 and l2 <= 1e-3 and dt <= 10,
           f"|rho_err|={rho_err:.2e} L2(h)={l2:.2e} [{dt:.1f}s]")


def test_criterion_1_dirichlet_eigenvalue():
    t0 = time.perf_counter()
    d = DirichletHeat(50)
    triple = leading_eigentriple(discretize(d, d.default_grid(200), 0.5),
                                 tol=1e-12)
    err = abs(triple.rho - (-math.pi**2 / 2))
    dt = time.perf_counter() - t0
    report("criterion 1b (dirichlet rho)", err <= 1e-2 and dt <= 10,
           f"err={err:.2e} [{dt:.1f}s]")


def test_criterion_1_half_harmonic_eigenvalue():
    t0 = time.perf_counter()
    hh = HalfHarmonicOscillator()
    triple = leading_eigentriple(discretize(hh, hh.default_grid(400), 0.5),
                                 tol=1e-12)
    err = abs(triple.rho - (-1.5))
    dt = time.perf_counter() - t0
    report("criterion 1c (half-harmonic rho)", err <= 5e-3 and dt <= 10,
           f"err={err:.2e} [{dt:.1f}s]")


# -- criterion 2: kernel identities ------------------------------------------

def test_criterion_2_kernel_identities():
    t0 = time.perf_counter()
    xs = np.linspace(-4, 4, 81)
    sup = 0.0
    for t in (0.5, 1.0, 2.0):
        direct = np.array([[mehler_kernel(t, x, y) for y in xs] for x in xs])
        series = hermite_series_kernel(t, xs, xs, 40)
        sup = max(sup, float(np.abs(direct - series).max()))
    m = HarmonicOscillator()
    g = GridDomain.uniform_closed(-8, 8, 400)
    K05 = discretize(m, g, 0.5)
    ck = float(np.abs(K05.compose(K05).matrix - discretize(m, g, 1.0).matrix).max())
    dt = time.perf_counter() - t0
    report("criterion 2 (kernel identities)",
           sup <= 1e-8 and ck <= 1e-4 and dt <= 5,
           f"hermite_sup={sup:.2e} ck_sup={ck:.2e} [{dt:.1f}s]")


# -- criterion 3: Riccati -----------------------------------------------------

def test_criterion_3_riccati():
    spec = ScalarRiccati(1.0, 1.0, 2.0)
    gap = abs(scalar_riccati(spec, 5.0, 12.0) - spec.z_inf)

    one = MatrixRiccati(np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)))
    tanh_err = max(
        abs(matrix_riccati(one, t, dt=1e-3)[0, 0] - math.tanh(t))
        for t in (0.5, 1.0, 2.0)
    )

    rng = np.random.default_rng(2024)
    A = rng.normal(size=(2, 2))
    Sig = rng.normal(size=(2, 2)) + 0.5 * np.eye(2)
    Cs = rng.normal(size=(2, 2)) + 0.5 * np.eye(2)
    S = Cs @ Cs.T
    res = coupled_oscillator_semigroup(A, Sig, S, np.array([1.0, -1.0]), 30.0)
    mspec = MatrixRiccati(A, Sig @ Sig.T, S)
    p_inf = matrix_riccati(mspec, 60.0)
    rho_err = abs(res.rho_hat - (-0.5 * float(np.trace(S @ p_inf))))
    resid = algebraic_residual(mspec, p_inf)

    red = coupled_oscillator_semigroup(0.0, 1.0, 1.0, np.array([0.0]), 20.0)
    red_err = abs(red.rho_hat - (-0.5))
    ok = gap <= 1e-8 and tanh_err <= 1e-8 and rho_err <= 1e-6 \
        and resid <= 1e-8 and red_err <= 1e-6
    report("criterion 3 (riccati)", ok,
           f"z_gap={gap:.1e} tanh={tanh_err:.1e} rho_err={rho_err:.1e} "
           f"residual={resid:.1e} n1_err={red_err:.1e}")


# -- criterion 4: contraction suite -------------------------------------------

def test_criterion_4_contraction():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst_slack = math.inf
    for _ in range(200):
        n = int(rng.integers(10, 40))
        eps = float(rng.uniform(0.2, 0.85))
        P, V, eps, r, alpha_r = build_pvc_chain(rng, n, eps)
        Vr, margin = rescaled_lyapunov(eps, 0.5, alpha_r, r, V)
        beta = v_dobrushin(P, Vr).beta
        worst_slack = min(worst_slack, (1 - margin) - beta)
        assert beta <= 1 - margin + 1e-10

    m = HarmonicOscillator()
    g = GridDomain.uniform_closed(-8, 8, 400)
    K = discretize(m, g, 1.0)
    h = FunctionVec(m.exact_h(g.points), g)
    P = doob_h_transform(K, h, m.exact_rho)
    i = int(np.argmin(np.abs(g.points + 2)))
    j = int(np.argmin(np.abs(g.points - 2)))
    curve = geometric_decay_curve(P, LyapunovSpec.poly(2),
                                  MeasureVec.dirac(g, i),
                                  MeasureVec.dirac(g, j), 12)
    rate_err = abs(curve.fitted_rate - 1.0)
    dt = time.perf_counter() - t0
    report("criterion 4 (contraction)",
           rate_err <= 0.1 and dt <= 30,
           f"min_slack={worst_slack:.3e} rate={curve.fitted_rate:.4f} [{dt:.1f}s]")


# -- criterion 5: subgeometric suite ------------------------------------------

def test_criterion_5_subgeometric():
    t0 = time.perf_counter()
    rng = np.random.default_rng(21)
    chi = 2.0
    varsigma = lambda v: np.asarray(v) ** (1 + chi)
    T = 30
    bounds = ode_majorant(1.0, varsigma, T)
    violations = 0
    for _ in range(500):
        u = 1.0
        seq = []
        for _ in range(T):
            u = min(u - float(varsigma(u)), u * rng.uniform(0.3, 1.0))
            seq.append(u)
        if np.any(np.asarray(seq) > bounds + 1e-12):
            violations += 1
    ok_majorant = violations == 0

    P, V, drift, c = build_subgeo_chain()
    n = P.grid.size
    nu = np.zeros(n)
    nu[149], nu[0] = 1.0, -1.0
    tvs = []
    for t in range(1, 501):
        nu = nu @ P.matrix
        tvs.append(0.5 * np.abs(nu).sum())
    ts = np.arange(1, 501)
    tvs = np.asarray(tvs)
    sel = (ts >= 50) & (tvs > 1e-13)
    slope = float(np.polyfit(np.log(ts[sel]), np.log(tvs[sel]), 1)[0])

    ok_proto = True
    for nn, ii in ((4, 2), (4, 3), (5, 4)):
        d = prototype_drift((nn - 1) / nn, (ii - 1) / (nn - 1), 1.0, 2.0)
        ok_proto &= abs(1.0 / d.chi - (ii - 1)) <= 1e-12
    dt = time.perf_counter() - t0
    report("criterion 5 (subgeometric)",
           ok_majorant and slope <= -0.4 and ok_proto and dt <= 30,
           f"majorant_violations={violations} slope={slope:.3f} [{dt:.1f}s]")


# -- criterion 6: geometry suite ----------------------------------------------

def test_criterion_6_geometry():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    parab = make_surface("parabola")
    parab_in = make_surface("parabola", epsilon=-1)
    solid = make_surface("paraboloid")
    worst = 0.0
    for surf in (parab, solid):
        for _ in range(100):
            th = rng.uniform(-1.8, 1.8, size=surf.chart_dim)
            worst = max(worst, weingarten_identity_check(surf, th))
    ok_w = worst <= 1e-5

    h = 1e-6
    trace_err = 0.0
    for surf, th in ((parab, [0.6]), (solid, [0.3, -0.2])):
        ff = fundamental_forms(surf, th)
        dlog = (math.log(offset_jacobian(surf, th, h))
                - math.log(offset_jacobian(surf, th, -h))) / (2 * h)
        trace_err = max(trace_err, abs(dlog + float(np.trace(ff.W))))
    ok_t = trace_err <= 1e-6

    rep = coarea_check(parab_in, lambda r: r ** -0.5, alpha=0.2)
    ok_c = rep.ok and rep.rel_gap <= 1e-3

    charts = make_surface("graph_example_8_4")
    cross = 0.0
    for theta in (1.2, 1.5, 1.9):
        w0 = fundamental_forms(charts["psi0"], [theta]).W[0, 0]
        w1 = fundamental_forms(charts["psi_minus"], [theta**2]).W[0, 0]
        cross = max(cross, abs(abs(w0) - abs(w1)))
    ok_x = cross <= 1e-8
    dt = time.perf_counter() - t0
    report("criterion 6 (geometry)",
           ok_w and ok_t and ok_c and ok_x and dt <= 10,
           f"weingarten={worst:.1e} jacobi={trace_err:.1e} "
           f"coarea={rep.rel_gap:.1e} cross={cross:.1e} [{dt:.1f}s]")


# -- criterion 7: Monte Carlo validation --------------------------------------

@pytest.mark.parametrize("case,budget", [
    ("harmonic_mass_t1", 1.0),
    ("dirichlet_survival_t03", 1.0),
    ("ou_stationary_var", 1.0),
    ("qsd_harmonic_rho", 1.0),
    ("qsd_dirichlet_rho", 1.0),
])
def test_criterion_7_monte_carlo(case, budget):
    t0 = time.perf_counter()
    rep = mc_validate(case, budget=budget, seed=20240)
    dt = time.perf_counter() - t0
    detail = (f"est={rep.estimate:.6f} oracle={rep.oracle:.6f} "
              f"se={rep.stderr:.1e} z={rep.z:+.2f} [{dt:.1f}s]")
    report(f"criterion 7 ({case})", rep.ok and dt <= 60, detail)


# -- criterion 8: determinism --------------------------------------------------

def test_criterion_8_determinism(tmp_path):
    configs = [
        {
            "command": "eigen",
            "model": {"name": "dirichlet_heat", "params": {"n_terms": 50}},
            "grid": {"min": 0.0, "max": 1.0, "n": 200},
            "time": {"tau": 0.5},
            "seed": 1,
        },
        {
            "command": "simulate",
            "extra": {"case": "harmonic_mass_t1", "budget": 0.1},
            "seed": 1,
        },
        {
            "command": "decay",
            "model": {"name": "harmonic"},
            "grid": {"min": -8.0, "max": 8.0, "n": 150},
            "lyapunov": "poly:2",
            "time": {"tau": 1.0, "t_max": 8},
            "seed": 1,
        },
    ]
    ok = True
    for k, cfg in enumerate(configs):
        fmt = "csv" if cfg["command"] == "decay" else "json"
        p1 = tmp_path / f"run{k}_a.{fmt}"
        p2 = tmp_path / f"run{k}_b.{fmt}"
        assert run_experiment({**cfg, "output": {"path": str(p1), "format": fmt}}) == 0
        assert run_experiment({**cfg, "output": {"path": str(p2), "format": fmt}}) == 0
        ok &= p1.read_bytes() == p2.read_bytes()
    report("criterion 8 (determinism)", ok, f"{len(configs)} commands byte-identical")
