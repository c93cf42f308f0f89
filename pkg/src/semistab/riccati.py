"""Scalar and matrix Riccati flows, coupled-oscillator quantities, and
birth-death moment majorants.

All deterministic flows use classical RK4 with a fixed default step
(dt = 1e-3); matrix flows are symmetrized after every step.  Birth-death
moments are estimated by exact event-clock simulation, never tau-leaping,
so the drift inequalities are tested without discretization bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .kernels import _psd_sqrt, controllable

__all__ = [
    "ScalarRiccati",
    "MatrixRiccati",
    "LogisticBD",
    "MultivariateBD",
    "scalar_riccati",
    "matrix_riccati",
    "algebraic_residual",
    "CoupledOscillator",
    "coupled_oscillator_semigroup",
    "bd_generator_drift",
    "bd_riccati_majorant",
    "MomentBoundReport",
    "bd_moment_bound",
]


@dataclass(frozen=True)
class ScalarRiccati:
    a0: float
    a1: float
    b: float

    def __post_init__(self):
        if self.a0 < 0:
            raise ValueError("a0 must be nonnegative")
        if self.b <= 0:
            raise ValueError("b must be positive")

    @property
    def z_inf(self) -> float:
        return (self.a1 + math.sqrt(self.a1 ** 2 + 4 * self.a0 * self.b)) / (2 * self.b)

    def rhs(self, z):
        return self.a0 + self.a1 * z - self.b * z * z


def scalar_riccati(spec: ScalarRiccati, z0: float, t: float,
                   dt: float = 1e-3) -> float:
    """RK4 flow of zdot = a0 + a1 z - b z^2 from z0 >= 0.

    Monotone toward the positive fixed point from either side; on numeric
    blow-up the step is halved a few times before giving up.
    """
    if z0 < 0:
        raise ValueError("z0 must be nonnegative")
    if t == 0:
        return float(z0)
    for attempt in range(13):
        h_target = dt / 2 ** attempt
        n_steps = max(1, int(math.ceil(t / h_target)))
        h = t / n_steps
        z = float(z0)
        ok = True
        for _ in range(n_steps):
            k1 = spec.rhs(z)
            k2 = spec.rhs(z + 0.5 * h * k1)
            k3 = spec.rhs(z + 0.5 * h * k2)
            k4 = spec.rhs(z + h * k3)
            z = z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not math.isfinite(z) or z < -1e-9:
                ok = False
                break
        if ok:
            return z
    raise ArithmeticError(
        f"scalar Riccati integration unstable down to step {h:.3e}"
    )


@dataclass(frozen=True)
class MatrixRiccati:
    A: np.ndarray
    R: np.ndarray
    S: np.ndarray
    p0: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        p0 = self.p0
        p0 = np.zeros_like(A) if p0 is None else np.atleast_2d(np.asarray(p0, dtype=float))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "p0", p0)
        for name, M in (("R", R), ("S", S), ("p0", p0)):
            if not np.allclose(M, M.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M).min() < -1e-12:
                raise ValueError(f"{name} must be positive semi-definite")

    def rhs(self, p):
        return self.A @ p + p @ self.A.T + self.R - p @ self.S @ p


def matrix_riccati(spec: MatrixRiccati, t: float, dt: float = 1e-3) -> np.ndarray:
    """Symmetrized RK4 flow of pdot = A p + p A' + R - p S p."""
    n_steps = max(1, int(math.ceil(t / dt)))
    h = t / n_steps
    p = spec.p0.copy()
    for k in range(n_steps):
        k1 = spec.rhs(p)
        k2 = spec.rhs(p + 0.5 * h * k1)
        k3 = spec.rhs(p + 0.5 * h * k2)
        k4 = spec.rhs(p + h * k3)
        p = p + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        p = 0.5 * (p + p.T)
        lo = np.linalg.eigvalsh(p).min()
        if not np.all(np.isfinite(p)) or lo < -1e-8:
            raise ArithmeticError(
                f"matrix Riccati flow left the PSD cone at step {k} "
                f"(min eig {lo:.3e}, h = {h:.3e})"
            )
    return p


def algebraic_residual(spec: MatrixRiccati, p: np.ndarray) -> float:
    """Norm of A p + p A' + R - p S p at a candidate fixed point."""
    return float(np.linalg.norm(spec.rhs(p)))


@dataclass(frozen=True)
class CoupledOscillator:
    m_t: np.ndarray
    p_t: np.ndarray
    log_mass: float          # log Q_t(1)(x)
    rho_hat: float           # tail average of -Tr(S p_s)/2
    trace_history: np.ndarray


def coupled_oscillator_semigroup(A, Sigma, S, x, t: float,
                                 dt: float = 1e-3) -> CoupledOscillator:
    """Joint RK4 integration of the mean, covariance, fundamental matrix and
    mass accumulators of the quadratic-potential linear diffusion.

    -2 log Q_t(1)(x) = x' (int F' S F) x + int Tr(S p); the decay-rate
    estimate is the tail average of -Tr(S p_s)/2, which converges to
    -Tr(p_inf S)/2.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = A.shape[0]
    R = Sigma @ Sigma.T
    if not controllable(A, _psd_sqrt(R)):
        raise ValueError("(A, R^{1/2}) fails the controllability rank check")
    if not controllable(A.T, _psd_sqrt(S)):
        raise ValueError("(A', S^{1/2}) fails the controllability rank check")
    spec = MatrixRiccati(A, R, S)
    n_steps = max(1, int(math.ceil(t / dt)))
    h = t / n_steps
    p = np.zeros((n, n))
    m = x.copy()
    F = np.eye(n)
    g1 = np.zeros((n, n))
    g2 = 0.0
    traces = np.empty(n_steps)

    def deriv(state):
        p_, m_, F_, _, _ = state
        drift = A - p_ @ S
        return (
            spec.rhs(p_),
            drift @ m_,
            drift @ F_,
            F_.T @ S @ F_,
            float(np.trace(S @ p_)),
        )

    for k in range(n_steps):
        s0 = (p, m, F, g1, g2)
        k1 = deriv(s0)
        k2 = deriv(tuple(a + 0.5 * h * b for a, b in zip(s0, k1)))
        k3 = deriv(tuple(a + 0.5 * h * b for a, b in zip(s0, k2)))
        k4 = deriv(tuple(a + h * b for a, b in zip(s0, k3)))
        p, m, F, g1, g2 = tuple(
            a + (h / 6.0) * (b1 + 2 * b2 + 2 * b3 + b4)
            for a, b1, b2, b3, b4 in zip(s0, k1, k2, k3, k4)
        )
        p = 0.5 * (p + p.T)
        traces[k] = float(np.trace(S @ p))
    log_mass = -0.5 * (float(x @ g1 @ x) + g2)
    tail = traces[int(0.8 * n_steps):]
    rho_hat = -0.5 * float(tail.mean())
    return CoupledOscillator(m, p, log_mass, rho_hat, traces)


# ---------------------------------------------------------------------------
# Birth-death processes.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogisticBD:
    """Birth rate lam_b x + ups_b; death rate lam_d x + lam_l x(x-1) + ups_d.

    Lives on the positive integers; the death move from state 1 is blocked.
    """

    lam_b: float = 0.0
    ups_b: float = 0.0
    lam_d: float = 0.0
    lam_l: float = 1.0
    ups_d: float = 0.0

    def __post_init__(self):
        for name in ("lam_b", "ups_b", "lam_d", "ups_d"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.lam_l <= 0:
            raise ValueError("lam_l must be positive")

    def birth_rate(self, x):
        return self.lam_b * x + self.ups_b

    def death_rate(self, x):
        x = np.asarray(x)
        raw = self.lam_d * x + self.lam_l * x * (x - 1) + self.ups_d
        return np.where(x >= 2, raw, 0.0)


@dataclass(frozen=True)
class MultivariateBD:
    """Coordinatewise birth-death on N^n minus the origin.

    Birth in direction i at rate ups_i + x_i (lam_i + (C x)_i); death at
    rate sig_i + x_i (mu_i + (D x)_i), blocked when it would leave the
    state space.  Requires |ups| >= |sig| and D - C uniformly positive
    definite in the symmetric part.
    """

    lam: np.ndarray
    mu: np.ndarray
    ups: np.ndarray
    sig: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in ("lam", "mu", "ups", "sig"):
            v = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, v)
            if np.any(v < 0):
                raise ValueError(f"{name} must be nonnegative")
        for name in ("C", "D"):
            object.__setattr__(self, name,
                               np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        if self.ups.sum() < self.sig.sum():
            raise ValueError("need |ups| >= |sig|")
        B = self.D - self.C
        if np.linalg.eigvalsh(0.5 * (B + B.T)).min() <= 0:
            raise ValueError("D - C must be uniformly positive definite")

    @property
    def dim(self):
        return len(self.lam)

    def birth_rates(self, x):
        # x: (paths, d)
        r = self.ups[None, :] + x * (self.lam[None, :] + x @ self.C.T)
        if np.any(r < -1e-12):
            raise ValueError("negative birth rate encountered; rejecting spec")
        return np.clip(r, 0.0, None)

    def death_rates(self, x):
        r = self.sig[None, :] + x * (self.mu[None, :] + x @ self.D.T)
        if np.any(r < -1e-12):
            raise ValueError("negative death rate encountered; rejecting spec")
        blocked = (x - 1 < 0) | ((x.sum(axis=1, keepdims=True) - 1) == 0)
        return np.where(blocked, 0.0, np.clip(r, 0.0, None))


def bd_generator_drift(spec, x) -> float:
    """Exact generator drift of the natural Lyapunov coordinate at state x.

    Logistic: V(x) = x; multivariate: V(x) = |x| (coordinate sum).  Blocked
    boundary moves contribute nothing, exactly as in the jump dynamics.
    """
    if isinstance(spec, LogisticBD):
        x = int(x)
        if x < 1:
            raise ValueError("state must be a positive integer")
        return float(spec.birth_rate(x) - spec.death_rate(x))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if np.any(x < 0) or x.sum() < 1:
        raise ValueError("state must lie in N^n minus the origin")
    up = spec.birth_rates(x)
    dn = spec.death_rates(x)
    return float((up - dn).sum())


def bd_riccati_majorant(spec) -> ScalarRiccati:
    """Quadratic majorant of d/dt E[V(X_t)] including boundary allowances."""
    if isinstance(spec, LogisticBD):
        return ScalarRiccati(
            a0=spec.ups_b + spec.lam_d,
            a1=spec.lam_b + spec.lam_l - spec.lam_d,
            b=spec.lam_l,
        )
    d = spec.dim
    B = spec.D - spec.C
    bmin = float(np.linalg.eigvalsh(0.5 * (B + B.T)).min())
    a0 = float(spec.ups.sum() - spec.sig.sum())
    # unit-state corrections plus the blocked-death allowance at zero
    # coordinates (each blocked move removes a -sig_i term from the drift)
    a0_plus = a0 + float(
        np.sum(spec.sig.sum() + spec.mu + np.diag(spec.D))
    ) + float(spec.sig.sum())
    a1 = float(np.max(spec.lam - spec.mu))
    # |x|^2 >= ||x||^2 / d relates the coordinate-sum square to the
    # quadratic form lower bound b ||x||^2
    return ScalarRiccati(a0=a0_plus, a1=a1, b=bmin / d)


@dataclass(frozen=True)
class MomentBoundReport:
    checkpoints: np.ndarray
    means: np.ndarray
    stderrs: np.ndarray
    majorant: np.ndarray
    ok: bool
    truncated: bool


def _record_checkpoints(records, counts, state_V, t_old, t_new, checkpoints):
    for k, cp in enumerate(checkpoints):
        newly = (t_old <= cp) & (t_new > cp)
        if newly.any():
            records[k, newly] = state_V[newly]
            counts[k] += int(newly.sum())


def bd_moment_bound(spec, x0, T: float, n_paths: int, seed: int,
                    n_checkpoints: int = 10,
                    state_cap: int = 10 ** 6) -> MomentBoundReport:
    """Event-clock simulation of the jump process against the Riccati majorant.

    Runs n_paths independent chains from x0, records V at evenly spaced
    checkpoints, and checks mean V <= majorant + 3 standard errors, where
    the majorant is the scalar Riccati flow started at V(x0).  Hitting the
    state cap flags the report as truncated.
    """
    rng = np.random.default_rng([seed, 0x5D])
    checkpoints = np.linspace(T / n_checkpoints, T, n_checkpoints)
    logistic = isinstance(spec, LogisticBD)
    if logistic:
        x = np.full(n_paths, int(x0), dtype=np.int64)
        V0 = float(x0)
    else:
        x = np.tile(np.asarray(x0, dtype=np.int64), (n_paths, 1))
        V0 = float(np.sum(x0))
    t = np.zeros(n_paths)
    records = np.full((n_checkpoints, n_paths), np.nan)
    counts = np.zeros(n_checkpoints, dtype=int)
    truncated = False
    active = np.ones(n_paths, dtype=bool)
    while active.any():
        if logistic:
            up = spec.birth_rate(x.astype(float))
            dn = spec.death_rate(x.astype(float))
            total = up + dn
            stateV = x.astype(float)
        else:
            up = spec.birth_rates(x.astype(float))
            dn = spec.death_rates(x.astype(float))
            total = up.sum(axis=1) + dn.sum(axis=1)
            stateV = x.sum(axis=1).astype(float)
        parked = active & (total <= 0)
        t_new = t.copy()
        if parked.any():
            t_new[parked] = np.inf
        moving = active & (total > 0)
        if moving.any():
            t_new[moving] = t[moving] + rng.exponential(1.0, size=int(moving.sum())) / total[moving]
        _record_checkpoints(records, counts, stateV, t, t_new, checkpoints)
        if moving.any():
            apply = moving & (t_new <= T)
            if apply.any():
                u = rng.uniform(size=n_paths)
                if logistic:
                    go_up = u[apply] < up[apply] / total[apply]
                    xa = x[apply]
                    xa = np.where(go_up, xa + 1, xa - 1)
                    if np.any(xa >= state_cap):
                        truncated = True
                        xa = np.minimum(xa, state_cap)
                    x[apply] = xa
                else:
                    rates = np.concatenate([up, dn], axis=1)
                    csum = np.cumsum(rates, axis=1)
                    pick = (u[:, None] * total[:, None] > csum).sum(axis=1)
                    d = spec.dim
                    rows = np.nonzero(apply)[0]
                    j = pick[rows]
                    ups_sel = j < d
                    np.add.at(x, (rows[ups_sel], j[ups_sel]), 1)
                    np.add.at(x, (rows[~ups_sel], j[~ups_sel] - d), -1)
                    if np.any(x >= state_cap):
                        truncated = True
                        np.minimum(x, state_cap, out=x)
        done = t_new > T
        t = np.where(done, np.inf, t_new)
        active = active & ~done
    means = np.nanmean(records, axis=1)
    stds = np.nanstd(records, axis=1, ddof=1)
    stderrs = stds / np.sqrt(np.maximum(counts, 1))
    maj = bd_riccati_majorant(spec)
    majorant = np.array([scalar_riccati(maj, V0, cp) for cp in checkpoints])
    ok = bool(np.all(means <= majorant + 3 * stderrs))
    return MomentBoundReport(checkpoints, means, stderrs, majorant, ok, truncated)
