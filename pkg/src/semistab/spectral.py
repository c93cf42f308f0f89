"""Normalized semigroup flows, leading eigen-triples and spectral gaps.

The leading eigenvalue is extracted from the mass of the normalized flow
(Collatz-Wielandt style), not from a dense eigensolver: rho = log(mass)/tau
where mass is the one-step normalization of the fixed-point measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    FunctionVec,
    LyapunovSpec,
    MeasureVec,
    boltzmann_gibbs,
    tv_norm,
)
from .kernels import DiscreteOperator, discretize, doob_h_transform

__all__ = [
    "EigenTriple",
    "FlowExtinctionError",
    "normalized_flow",
    "leading_eigentriple",
    "GroundStateProduct",
    "ground_state_product",
    "GapCurve",
    "finite_rank_gap",
    "SpectralDecayReport",
    "spectral_decay_check",
    "h_transform_commute",
]


class FlowExtinctionError(RuntimeError):
    """Total mass of the flow hit zero; carries the offending step index."""

    def __init__(self, step: int):
        super().__init__(f"flow mass reached zero at step {step}")
        self.step = step


@dataclass(frozen=True)
class EigenTriple:
    rho: float
    h: FunctionVec
    eta_inf: MeasureVec
    converged: bool
    residual_right: float
    residual_left: float
    iterations: int

    def __post_init__(self):
        if np.any(self.h.values <= 0):
            raise ValueError("ground state must be positive")
        m = self.eta_inf.masses
        if np.any(m < -1e-15) or abs(m.sum() - 1.0) > 1e-10:
            raise ValueError("eta_inf must be a probability vector")
        pairing = float(m @ self.h.values)
        if abs(pairing - 1.0) > 1e-10:
            raise ValueError(f"normalization eta_inf(h) = {pairing} != 1")


def normalized_flow(Q: DiscreteOperator, eta0: MeasureVec, n: int):
    """Normalized evolution of eta0 under Q with the per-step mass record.

    Returns (measures, masses): measures[k] is the probability vector after
    k steps, masses[k] the normalization eaten at step k.  The product of
    the masses reconstructs the unnormalized total mass eta0 Q^n(1).
    """
    if abs(eta0.total_mass() - 1.0) > 1e-9 or np.any(eta0.masses < -1e-12):
        raise ValueError("eta0 must be a probability vector")
    K = Q.matrix
    measures = [eta0]
    masses = []
    cur = eta0.masses
    for k in range(n):
        nxt = cur @ K
        mass = float(nxt.sum())
        if mass <= 0:
            raise FlowExtinctionError(k)
        cur = nxt / mass
        masses.append(mass)
        measures.append(MeasureVec(cur, Q.grid))
    return measures, masses


def _connected(K: np.ndarray) -> bool:
    n = K.shape[0]
    adj = K > 0
    for mat in (adj, adj.T):
        seen = np.zeros(n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            i = stack.pop()
            nbrs = np.nonzero(mat[i] & ~seen)[0]
            seen[nbrs] = True
            stack.extend(nbrs.tolist())
        if not seen.all():
            return False
    return True


def leading_eigentriple(Q: DiscreteOperator, tol: float = 1e-12,
                        max_iter: int = 1000) -> EigenTriple:
    """Leading (rho, h, eta_inf) by simultaneous left/right power iteration.

    Residuals: sup-norm eigen-relation defect for h, total-variation defect
    for the fixed-point measure.  On non-convergence the best iterate is
    returned with converged=False rather than raising.
    """
    K = Q.matrix
    n = K.shape[0]
    if np.any(K.sum(axis=1) <= 0):
        raise ValueError("power iteration needs all row sums positive")
    if not _connected(K):
        raise ValueError("operator support graph is not strongly connected")
    eta = np.full(n, 1.0 / n)
    h = np.ones(n)
    lam = 1.0
    res_r = res_l = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        eta_raw = eta @ K
        lam = float(eta_raw.sum())
        if lam <= 0:
            raise FlowExtinctionError(it)
        eta_new = eta_raw / lam
        h_raw = K @ h
        h_new = h_raw / h_raw.max()
        res_l = 0.5 * np.abs(eta_new - eta).sum()
        res_r = float(np.abs(K @ h_new - lam * h_new).max() / np.abs(h_new).max())
        eta, h = eta_new, h_new
        if res_l <= tol and res_r <= tol:
            break
    h = h / float(eta @ h)  # pairing normalization eta_inf(h) = 1
    rho = math.log(lam) / Q.time_step
    return EigenTriple(
        rho,
        FunctionVec(h, Q.grid),
        MeasureVec(np.maximum(eta, 0.0) / eta.sum(), Q.grid),
        bool(res_l <= tol and res_r <= tol),
        res_r,
        res_l,
        it,
    )


@dataclass(frozen=True)
class GroundStateProduct:
    partials: np.ndarray   # running partial products
    value: float           # last partial
    factors: np.ndarray


def ground_state_product(Q: DiscreteOperator, triple: EigenTriple,
                         x_index: int, N: int) -> GroundStateProduct:
    """Partial products of the mass-ratio series representation of h(x).

    Factor n is 1 + e^{-rho tau} (mass_n(delta_x) - mass_n(eta_inf)); the
    running product converges to h(x) in the eta_inf(h) = 1 normalization.
    A nonpositive factor aborts with the offending index (grid too coarse).
    """
    lam = math.exp(triple.rho * Q.time_step)
    _, masses_x = normalized_flow(Q, MeasureVec.dirac(Q.grid, x_index), N)
    _, masses_eta = normalized_flow(Q, triple.eta_inf, N)
    factors = 1.0 + (np.asarray(masses_x) - np.asarray(masses_eta)) / lam
    if np.any(factors <= 0):
        bad = int(np.nonzero(factors <= 0)[0][0])
        raise ArithmeticError(f"nonpositive product factor at n = {bad}")
    partials = np.cumprod(factors)
    return GroundStateProduct(partials, float(partials[-1]), factors)


@dataclass(frozen=True)
class GapCurve:
    times: np.ndarray
    values: np.ndarray
    fitted_rate: Optional[float]


def finite_rank_gap(Q: DiscreteOperator, mu: MeasureVec, H: FunctionVec,
                    T: int, V: LyapunovSpec) -> GapCurve:
    """V-operator-norm distance to the rank-one ground-state projector.

    At each step t the normalized operator Q^t / mu Q^t(1) is compared with
    the rank-one map f -> Q^t(H) mu_t(f) / mu Q^t(1); the curve decays at
    the spectral gap, recovered by a tail-half exponential fit.
    """
    K = Q.matrix
    vals = V(Q.grid.points)
    Mt = np.eye(K.shape[0])
    out = np.empty(T)
    for t in range(1, T + 1):
        Mt = Mt @ K
        z = float(mu.masses @ Mt.sum(axis=1))
        if z <= 0:
            raise FlowExtinctionError(t)
        mu_t = (mu.masses @ Mt)
        mu_t = mu_t / mu_t.sum()
        G = Mt / z - np.outer((Mt @ H.values) / z, mu_t)
        out[t - 1] = np.max((np.abs(G) @ vals) / vals)
    times = np.arange(1, T + 1) * Q.time_step
    pos = out > 1e-250
    tail = np.arange(T) >= T // 2
    sel = pos & tail
    rate = None
    if sel.sum() >= 2:
        rate = -float(np.polyfit(times[sel], np.log(out[sel]), 1)[0])
    return GapCurve(times, out, rate)


@dataclass(frozen=True)
class SpectralDecayReport:
    lhs: float
    rhs: float
    ok: bool
    decay_rate: float  # the second conjugate eigenvalue used in the bound


def spectral_decay_check(model, f: FunctionVec, t: float,
                         slack: float = 1e-6) -> SpectralDecayReport:
    """L2 distance to the ground-state projection against the gap bound.

    Valid for the self-adjoint models only; uses the model's exact leading
    pair and second eigenvalue.  The reference measure is the grid
    quadrature of the Lebesgue measure.
    """
    if not getattr(model, "self_adjoint", False):
        raise ValueError(f"model {model.name!r} is not self-adjoint")
    grid = f.grid
    w = grid.cell_weights
    K = discretize(model, grid, t).matrix
    h = model.exact_h(grid.points)
    h = h / math.sqrt(float(h @ (h * w)))  # nu(h^2) = 1 on the grid
    rho = model.exact_rho
    gap2 = model.eigenvalue(2) - model.eigenvalue(1)
    nu_hf = float(h @ (f.values * w))
    lhs_vec = math.exp(-rho * t) * (K @ f.values) - h * nu_hf
    lhs = math.sqrt(float(lhs_vec @ (lhs_vec * w)))
    var = float(f.values @ (f.values * w)) - nu_hf ** 2
    rhs = math.exp(gap2 * t) * math.sqrt(max(var, 0.0))
    return SpectralDecayReport(lhs, rhs, bool(lhs <= rhs + slack), gap2)


def h_transform_commute(Q: DiscreteOperator, triple: EigenTriple,
                        eta: MeasureVec, steps=(1, 2, 5)) -> dict:
    """Conjugation identity: reweighting the normalized flow by h equals
    pushing the reweighted start through the ground-state Markov kernel.

    Returns the tv distance between the two routes at the requested step
    counts.
    """
    P = doob_h_transform(Q, triple.h, triple.rho)
    out = {}
    for n in steps:
        flow, _ = normalized_flow(Q, eta, n)
        lhs = boltzmann_gibbs(triple.h, flow[-1])
        rhs = boltzmann_gibbs(triple.h, eta).masses
        for _ in range(n):
            rhs = rhs @ P.matrix
        out[n] = tv_norm(MeasureVec(lhs.masses - rhs, Q.grid))
    return out
