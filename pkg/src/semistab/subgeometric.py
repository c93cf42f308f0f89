"""Subexponential drift verification and polynomial-rate envelopes.

The drift prototype is phi(v) = kappa0 v^delta paired with the concave
companion phi1(v) = kappa1 v^(1 - upsilon delta); the induced exponent is
chi = (1 - delta)/(upsilon delta) and rates decay like t^(-1/chi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.integrate import quad

from .core import GridDomain, LyapunovSpec, MeasureVec
from .kernels import DiscreteOperator

__all__ = [
    "SubGeoDrift",
    "prototype_drift",
    "JensenReport",
    "jensen_drift_check",
    "ode_majorant",
    "RateBound",
    "general_rate_bound",
    "RateReport",
    "polynomial_rate_check",
    "build_subgeo_chain",
    "build_certified_chain",
]


@dataclass(frozen=True)
class SubGeoDrift:
    delta: float
    upsilon: float
    kappa0: float
    kappa1: float

    def __post_init__(self):
        if not 0 < self.delta < 1 or not 0 < self.upsilon < 1:
            raise ValueError("delta and upsilon must lie in (0, 1)")
        if self.kappa0 <= 0:
            raise ValueError("kappa0 must be positive")
        if self.kappa1 < 1:
            raise ValueError("kappa1 must be >= 1")

    @property
    def chi(self) -> float:
        return (1 - self.delta) / (self.upsilon * self.delta)

    @property
    def kappa2(self) -> float:
        return self.kappa0 * self.kappa1 ** (-self.chi) * (1 - self.upsilon * self.delta)

    def phi(self, v):
        return self.kappa0 * np.asarray(v, dtype=float) ** self.delta

    def phi1(self, v):
        return self.kappa1 * np.asarray(v, dtype=float) ** (1 - self.upsilon * self.delta)

    def dphi1(self, v):
        e = 1 - self.upsilon * self.delta
        return self.kappa1 * e * np.asarray(v, dtype=float) ** (e - 1)

    def phi2(self, v):
        v = np.asarray(v, dtype=float)
        return self.kappa2 * v * (self.phi1(v) / v) ** (1 + self.chi)


def prototype_drift(delta: float, upsilon: float, kappa0: float,
                    kappa1: float) -> SubGeoDrift:
    """Build the power-law drift family and verify its defining identity.

    The identity dphi1(v) phi(v) = phi2(v) is checked pointwise on random
    arguments before the object is handed out.
    """
    d = SubGeoDrift(delta, upsilon, kappa0, kappa1)
    rng = np.random.default_rng(12345)
    v = rng.uniform(1.0, 1e4, size=100)
    lhs = d.dphi1(v) * d.phi(v)
    rhs = d.phi2(v)
    if not np.allclose(lhs, rhs, rtol=1e-10):
        raise AssertionError("prototype identity dphi1 * phi = phi2 failed")
    return d


class JensenReport(NamedTuple):
    ok: bool
    c: float
    c1: float
    worst_hypothesis_gap: float   # max of P(V) - (V - phi(V) + c); <= 0 when ok
    worst_phi1_gap: float         # max of P(phi1 V) - (phi1 V - phi2 V + c1)
    worst_point: int


def jensen_drift_check(P: DiscreteOperator, V: LyapunovSpec,
                       drift: SubGeoDrift, c: float) -> JensenReport:
    """Concavity transfer of the drift inequality to phi1(V).

    First verifies P(V) <= V - phi(V) + c on the grid; on success asserts
    P(phi1(V)) <= phi1(V) - phi2(V) + c1 with c1 = c * dphi1(1).
    """
    vals = V(P.grid.points)
    pv = P.matrix @ vals
    hyp_gap = pv - (vals - drift.phi(vals) + c)
    worst = int(np.argmax(hyp_gap))
    if hyp_gap[worst] > 1e-10:
        return JensenReport(False, c, math.nan, float(hyp_gap[worst]),
                            math.nan, worst)
    c1 = c * float(drift.dphi1(1.0))
    p1 = P.matrix @ drift.phi1(vals)
    gap1 = p1 - (drift.phi1(vals) - drift.phi2(vals) + c1)
    worst1 = int(np.argmax(gap1))
    ok = gap1[worst1] <= 1e-10
    return JensenReport(bool(ok), c, c1, float(hyp_gap[worst]),
                        float(gap1[worst1]), worst1)


def ode_majorant(u0: float, varsigma: Callable, T: int) -> np.ndarray:
    """Bounds u_t <= I^{-1}(t) for decreasing sequences with steps <= -varsigma(u).

    I(u) is the integral of 1/varsigma from u to u0, inverted by monotone
    bisection; the integrand must be positive and increasing on (0, u0].
    """
    if u0 <= 0:
        raise ValueError("u0 must be positive")
    probe = varsigma(np.linspace(u0 * 1e-6, u0, 32))
    if np.any(probe <= 0) or np.any(np.diff(probe) < -1e-12):
        raise ValueError("varsigma must be positive increasing on (0, u0]")

    def I(u):
        # substitute v = e^w: robust across the many decades between u and u0
        val, _ = quad(lambda w: math.exp(w) / float(varsigma(math.exp(w))),
                      math.log(u), math.log(u0), limit=200)
        return val

    lo_floor = u0 * 1e-14
    out = np.empty(T)
    for t in range(1, T + 1):
        lo = u0 / 2
        while I(lo) < t and lo > lo_floor:
            lo /= 2
        if I(lo) < t:
            out[t - 1] = lo
            continue
        hi = min(2 * lo, u0)
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            if I(mid) >= t:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-12 * hi:
                break
        out[t - 1] = math.sqrt(lo * hi)
    return out


class RateBound(NamedTuple):
    value: float
    vacuous: bool


def general_rate_bound(psi: Callable, rho: float, iota: float,
                       t: float) -> RateBound:
    """Inverse of J(u) = int_u^iota dv / psi_rho(v) at time t.

    psi_rho(v) = psi(rho^2 v / (1+rho)^2) / (1+rho) is the rescaled convex
    rate function; the returned bound decreases in t and specializes to the
    polynomial bound for power-law psi.
    """
    if rho <= 0 or iota <= 0:
        raise ValueError("rho and iota must be positive")

    def psi_rho(v):
        return psi(rho * rho * v / (1 + rho) ** 2) / (1 + rho)

    if t <= 0:
        return RateBound(iota, True)

    def J(u):
        val, _ = quad(lambda w: math.exp(w) / float(psi_rho(math.exp(w))),
                      math.log(u), math.log(iota), limit=200)
        return val

    lo_floor = iota * 1e-14
    lo = iota / 2
    while J(lo) < t and lo > lo_floor:
        lo /= 2
    if J(lo) < t:
        return RateBound(lo, False)
    hi = min(2 * lo, iota)
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if J(mid) >= t:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return RateBound(math.sqrt(lo * hi), False)


@dataclass(frozen=True)
class RateReport:
    times: np.ndarray
    values: np.ndarray              # |mu P^t|_{1 + rho phi1(V)}
    certified: bool
    assertion_ok: Optional[bool]    # None when hypotheses were not certified
    envelope: Optional[np.ndarray]
    rho: float
    r: Optional[float]
    alphas: tuple
    note: str = ""


def _alpha_over(P: DiscreteOperator, mask: np.ndarray) -> float:
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        raise ValueError("empty sub-level set")
    rows = P.matrix[idx]
    worst = 0.0
    for a in range(len(idx) - 1):
        tv = 0.5 * np.abs(rows[a] - rows[a + 1:]).sum(axis=1).max()
        worst = max(worst, float(tv))
    return 1.0 - worst


def polynomial_rate_check(P: DiscreteOperator, V: LyapunovSpec,
                          drift: SubGeoDrift, rho: float, mu: MeasureVec,
                          T: int) -> RateReport:
    """Measured weighted-norm decay against the t^(-1/chi) envelope.

    The hypotheses are re-certified from scratch: the phi1 drift transfer
    and minorization over the sub-level sets of phi(V) and phi2(V), scanning
    candidate radii for a nonempty admissibility window at the given rho.
    When no radius qualifies, the curve is returned without assertion.
    """
    vals = V(P.grid.points)
    if abs(float(mu.masses.sum())) > 1e-12:
        raise ValueError("mu must have zero total mass")
    c = float(np.max(P.matrix @ vals - vals + drift.phi(vals)))
    c = max(c, 0.0)
    jr = jensen_drift_check(P, V, drift, c)
    chi = drift.chi
    w1 = 1.0 + rho * drift.phi1(vals)
    w0 = 1.0 + rho * vals
    norm0 = float(np.abs(mu.masses) @ w0)
    nu = mu.masses.copy()
    values = np.empty(T)
    for t in range(1, T + 1):
        nu = nu @ P.matrix
        values[t - 1] = np.abs(nu) @ w1
    times = np.arange(1, T + 1) * P.time_step

    if not jr.ok:
        return RateReport(times, values, False, None, None, rho, None, (),
                          note="phi1 drift transfer failed")
    phi2v = drift.phi2(vals)
    best = None
    for q in (1.0, 0.9, 0.75, 0.5):
        r = float(np.quantile(phi2v, q))
        try:
            a1 = _alpha_over(P, drift.phi(vals) <= r)
            a2 = _alpha_over(P, phi2v <= r)
        except ValueError:
            continue
        if a1 <= 0 or a2 <= 0:
            continue
        lo = 2.0 * max(a1, a2) / r
        hi = min(a1, a2) / min(jr.c1, c) if min(jr.c1, c) > 0 else math.inf
        if rho > lo and rho <= hi:
            delta_rho = drift.kappa2 * (rho - lo)
            if best is None or delta_rho > best[0]:
                best = (delta_rho, r, a1, a2)
    if best is None:
        return RateReport(times, values, False, None, None, rho, None, (),
                          note="admissibility window empty at this rho")
    delta_rho, r, a1, a2 = best
    omega = rho ** chi * delta_rho / (1 + rho) ** (1 + chi)
    c_rho = (chi * omega) ** (-1.0 / chi)
    envelope = c_rho * np.arange(1, T + 1, dtype=float) ** (-1.0 / chi) * norm0
    ok = bool(np.all(values <= envelope + 1e-12))
    return RateReport(times, values, True, ok, envelope, rho, r, (a1, a2))


# ---------------------------------------------------------------------------
# Canonical fixtures.
# ---------------------------------------------------------------------------

def build_subgeo_chain(n: int = 200, delta: float = 0.5, L: int = 7,
                       kappa0: float = 0.25):
    """Reflected random walk on {1..n} with polynomial inward drift.

    Steps are uniform over {1..L} upward or downward (clipped to the state
    space); the downward bias at x is 2 kappa0 x^delta / (L+1), so the mean
    drift is exactly -kappa0 x^delta away from the edges.  Returns
    (P, V, drift, c) with the drift inequality P(V) <= V - phi(V) + c
    holding at every state.
    """
    xs = np.arange(1, n + 1, dtype=float)
    g = 2.0 * kappa0 * xs ** delta / (L + 1)
    if g.max() > 1:
        raise ValueError("kappa0 too large for this state space and step width")
    P = np.zeros((n, n))
    for i in range(n):
        x = i + 1
        for s in range(1, L + 1):
            up = min(x + s, n)
            dn = max(x - s, 1)
            P[i, up - 1] += (1 - g[i]) / (2 * L)
            P[i, dn - 1] += (1 + g[i]) / (2 * L)
    grid = GridDomain.uniform_closed(1.0, float(n), n)
    V = LyapunovSpec.table(xs, grid)
    op = DiscreteOperator(P, grid, 1.0, is_markov=True, quad_tol=1e-9)
    drift = prototype_drift(delta, 0.5, kappa0, 1.0)
    c = float(np.max(P @ xs - xs + drift.phi(xs)))
    return op, V, drift, c


def build_certified_chain(n: int = 500, kappa0: float = 0.4,
                          theta: float = 0.3):
    """Jump-to-bottom chain whose rate constants are certifiable.

    Each state keeps mass 1 - s(x) and sends s(x) = kappa0 sqrt(x)/(x-1)
    + theta to the bottom state, giving drift <= -kappa0 sqrt(x) with a
    uniform overlap floor; the admissibility window of the polynomial rate
    lemma is nonempty here, unlike on the local-step walk.
    """
    xs = np.arange(1, n + 1, dtype=float)
    P = np.zeros((n, n))
    P[0, 0] = 1.0
    for i in range(1, n):
        x = xs[i]
        s = kappa0 * math.sqrt(x) / (x - 1) + theta
        if s > 1:
            raise ValueError("infeasible jump probability; lower kappa0/theta")
        P[i, i] = 1 - s
        P[i, 0] = s
    grid = GridDomain.uniform_closed(1.0, float(n), n)
    V = LyapunovSpec.table(xs, grid)
    op = DiscreteOperator(P, grid, 1.0, is_markov=True, quad_tol=1e-9)
    drift = prototype_drift(0.5, 0.5, kappa0, 1.0)
    c = float(np.max(P @ xs - xs + drift.phi(xs)))
    return op, V, drift, c
