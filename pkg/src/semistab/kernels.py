"""Closed-form solvable sub-Markov semigroups and their grid discretization.

Implemented models: the quadratic-potential oscillator kernel on the line
(Gaussian with contracting mean, so-called Mehler form), its restriction to
the half line with absorption at the origin, the absorbed heat kernel on the
unit interval, linear Gaussian diffusions, and the half-line linear diffusion
in a quadratic potential.  Each exposes a pointwise transition density and,
where available, a closed-form total-mass function used to validate the
quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm
from scipy.special import erf

from .core import FunctionVec, GridDomain, LyapunovSpec, MeasureVec

__all__ = [
    "DiscreteOperator",
    "HarmonicOscillator",
    "HalfHarmonicOscillator",
    "DirichletHeat",
    "GaussOU",
    "HalfHarmonicLinear",
    "mehler_kernel",
    "mehler_mass",
    "hermite_polynomial",
    "hermite_functions",
    "hermite_series_kernel",
    "half_harmonic",
    "dirichlet_heat",
    "dirichlet_mass",
    "gauss_ou_kernel",
    "half_harmonic_linear",
    "half_linear_fixed_point",
    "controllable",
    "doob_h_transform",
    "undo_h_transform",
    "discretize",
    "generator_apply",
    "domination_transfer",
    "make_model",
]

_SUB_MARKOV_SLACK = 1e-9


@dataclass(frozen=True)
class DiscreteOperator:
    """Kernel mass between grid cells: entry (i, j) = q_tau(x_i, x_j) w_j."""

    matrix: np.ndarray
    grid: GridDomain
    time_step: float
    is_markov: bool = False
    quad_tol: float = 1e-6

    def __post_init__(self):
        K = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", K)
        n = self.grid.size
        if K.shape != (n, n):
            raise ValueError("operator matrix must be square of the grid size")
        if self.time_step <= 0:
            raise ValueError("time_step must be positive")
        if np.any(K < 0):
            raise ValueError("operator entries must be nonnegative")
        rows = K.sum(axis=1)
        if self.is_markov:
            if np.any(np.abs(rows - 1.0) > self.quad_tol):
                raise ValueError(
                    f"Markov rows must sum to 1 within {self.quad_tol:g}; "
                    f"worst deviation {np.abs(rows - 1).max():.3e}"
                )
        elif np.any(rows > 1.0 + _SUB_MARKOV_SLACK):
            raise ValueError(
                f"sub-Markov rows must sum to <= 1; worst {rows.max():.17g}"
            )

    def apply_function(self, f: FunctionVec) -> FunctionVec:
        return FunctionVec(self.matrix @ f.values, self.grid)

    def apply_measure(self, mu: MeasureVec) -> MeasureVec:
        return MeasureVec(mu.masses @ self.matrix, self.grid)

    def compose(self, other: "DiscreteOperator") -> "DiscreteOperator":
        if other.grid is not self.grid and not np.array_equal(
            other.grid.points, self.grid.points
        ):
            raise ValueError("composition needs a common grid")
        return DiscreteOperator(
            self.matrix @ other.matrix,
            self.grid,
            self.time_step + other.time_step,
            is_markov=self.is_markov and other.is_markov,
            quad_tol=max(self.quad_tol, other.quad_tol) * 2,
        )

    def power(self, n: int) -> "DiscreteOperator":
        out = np.linalg.matrix_power(self.matrix, n)
        return DiscreteOperator(out, self.grid, n * self.time_step,
                                is_markov=self.is_markov,
                                quad_tol=self.quad_tol * n)

    def row_sums(self) -> np.ndarray:
        return self.matrix.sum(axis=1)


# ---------------------------------------------------------------------------
# Oscillator kernel on the line (Brownian motion killed at rate x^2/2).
# ---------------------------------------------------------------------------

def mehler_mass(t: float, x) -> np.ndarray:
    """Total mass Q_t(1)(x) = exp(-x^2 tanh(t)/2)/sqrt(cosh t)."""
    if t <= 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    return np.exp(-(x ** 2) * np.tanh(t) / 2.0) / math.sqrt(math.cosh(t))


def mehler_kernel(t: float, x, y) -> np.ndarray:
    """Transition density q_t(x, y): contracting Gaussian times mass factor.

    Mean x/cosh(t), variance tanh(t); total y-integral is mehler_mass(t, x).
    """
    if t <= 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = math.tanh(t)
    m = x / math.cosh(t)
    gauss = np.exp(-((y - m) ** 2) / (2 * p)) / math.sqrt(2 * math.pi * p)
    return mehler_mass(t, x) * gauss


def hermite_polynomial(n: int, x) -> np.ndarray:
    """Physicists' Hermite polynomial by the two-term recurrence."""
    x = np.asarray(x, dtype=float)
    h0 = np.ones_like(x)
    if n == 0:
        return h0
    h1 = 2 * x
    for k in range(1, n):
        h0, h1 = h1, 2 * x * h1 - 2 * k * h0
    return h1


def hermite_functions(N: int, x) -> np.ndarray:
    """First N orthonormal Hermite functions, shape (N, len(x)).

    Normalized recurrence; stable for N up to a few hundred without
    overflow since the Gaussian weight is folded in from the start.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((N, x.size))
    out[0] = math.pi ** -0.25 * np.exp(-x ** 2 / 2)
    if N > 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for k in range(2, N):
        out[k] = math.sqrt(2.0 / k) * x * out[k - 1] \
            - math.sqrt((k - 1.0) / k) * out[k - 2]
    return out


def hermite_series_kernel(t: float, x, y, N: int) -> np.ndarray:
    """Spectral form of the oscillator kernel truncated to N eigenstates."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if N > 200:
        raise ValueError("N > 200 rejected (normalization-stable range)")
    if t <= 0:
        raise ValueError("t must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    fx = hermite_functions(N, x)
    fy = hermite_functions(N, y)
    lam = np.exp(-(np.arange(N) + 0.5) * t)
    out = np.einsum("k,ki,kj->ij", lam, fx, fy)
    return out[0, 0] if out.size == 1 else np.squeeze(out)


# ---------------------------------------------------------------------------
# Half-line oscillator: absorption at the origin.
# ---------------------------------------------------------------------------

def _gauss_cdf_0_to(z):
    # P(0 <= Z <= z) for standard normal Z
    return 0.5 * erf(np.asarray(z) / math.sqrt(2.0))


def half_harmonic(t: float, x: float):
    """Mass and normalized density of the absorbed oscillator on (0, inf).

    The density is the mean-reflected difference of Gaussians (equivalently
    the sinh(y m_t(x)/p_t) form), normalized to integrate to one.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if x <= 0:
        raise ValueError("x must be positive (origin is absorbing)")
    p = math.tanh(t)
    m = x / math.cosh(t)
    z = _gauss_cdf_0_to(m / math.sqrt(p))
    mass = 2.0 * math.exp(-(x ** 2) * p / 2.0) / math.sqrt(math.cosh(t)) * z

    def density(y):
        y = np.asarray(y, dtype=float)
        plus = np.exp(-((y - m) ** 2) / (2 * p))
        minus = np.exp(-((y + m) ** 2) / (2 * p))
        out = (plus - minus) / (2.0 * math.sqrt(2 * math.pi * p) * z)
        return np.where(y > 0, out, 0.0)

    return float(mass), density


# ---------------------------------------------------------------------------
# Absorbed heat kernel on the unit interval.
# ---------------------------------------------------------------------------

def dirichlet_heat(t: float, x, y, N: int) -> np.ndarray:
    """Sine eigenexpansion of the absorbed heat kernel on (0, 1).

    Raw truncated series; may dip microscopically negative.  Clamping is
    applied only when assembling operators.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if t <= 0:
        raise ValueError("t must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any((x <= 0) | (x >= 1)) or np.any((y <= 0) | (y >= 1)):
        raise ValueError("x and y must lie in the open interval (0, 1)")
    ns = np.arange(1, N + 1)
    lam = np.exp(-((ns * math.pi) ** 2) * t / 2.0)
    sx = np.sqrt(2.0) * np.sin(np.outer(ns, x) * math.pi)
    sy = np.sqrt(2.0) * np.sin(np.outer(ns, y) * math.pi)
    out = np.einsum("k,ki,kj->ij", lam, sx, sy)
    return out[0, 0] if out.size == 1 else np.squeeze(out)


def dirichlet_mass(t: float, x, N: int = 100) -> np.ndarray:
    """Survival probability: integral of the kernel over (0, 1)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ns = np.arange(1, N + 1)
    integ = np.sqrt(2.0) * (1 - np.cos(ns * math.pi)) / (ns * math.pi)
    lam = np.exp(-((ns * math.pi) ** 2) * t / 2.0)
    sx = np.sqrt(2.0) * np.sin(np.outer(ns, x) * math.pi)
    out = (lam * integ) @ sx
    return out[0] if out.size == 1 else out


# ---------------------------------------------------------------------------
# Linear Gaussian diffusions.
# ---------------------------------------------------------------------------

def _lyapunov_rk4(A: np.ndarray, R: np.ndarray, t: float, dt: float = 1e-3):
    """RK4 integration of Cdot = A C + C A' + R from C(0) = 0."""
    n_steps = max(1, int(math.ceil(t / dt)))
    h = t / n_steps
    C = np.zeros_like(R)

    def f(C):
        return A @ C + C @ A.T + R

    for _ in range(n_steps):
        k1 = f(C)
        k2 = f(C + 0.5 * h * k1)
        k3 = f(C + 0.5 * h * k2)
        k4 = f(C + h * k3)
        C = C + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        C = 0.5 * (C + C.T)
    return C


def controllable(A: np.ndarray, B: np.ndarray) -> bool:
    """Kalman rank condition on [B, AB, ..., A^{n-1}B]."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.linalg.matrix_rank(np.hstack(blocks)) == n


def _psd_sqrt(M: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(M)
    w = np.clip(w, 0.0, None)
    return U @ np.diag(np.sqrt(w)) @ U.T


def gauss_ou_kernel(t: float, A, Sigma, x):
    """Mean exp(tA) x and covariance of the linear diffusion at time t.

    The covariance solves the Lyapunov ODE driven by R = Sigma Sigma' and is
    positive definite for t > 0 under the Kalman rank condition.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if A.shape[0] != A.shape[1] or Sigma.shape[0] != A.shape[0]:
        raise ValueError("inconsistent dimensions for A, Sigma")
    if x.shape[0] != A.shape[0]:
        raise ValueError("state dimension does not match A")
    R = Sigma @ Sigma.T
    mean = expm(t * A) @ x
    cov = _lyapunov_rk4(A, R, t)
    if controllable(A, _psd_sqrt(R)):
        lo = np.linalg.eigvalsh(cov).min()
        if lo <= 0:
            raise ArithmeticError(
                f"covariance not positive definite (min eig {lo:.3e})"
            )
    return mean, cov


class LinearFlowState(NamedTuple):
    p: float      # variance parameter
    F: float      # fundamental solution of the mean flow
    chi: float    # integral of F^2 (quadratic mass coefficient)
    pbar: float   # integral of p


def _half_linear_flow(t: float, a: float, varsigma: float,
                      dt: float = 1e-4) -> LinearFlowState:
    """RK4 on pdot = 2ap + 1 - varsigma p^2, Fdot = (a - p varsigma) F."""
    n_steps = max(1, int(math.ceil(t / dt)))
    h = t / n_steps
    y = np.array([0.0, 1.0, 0.0, 0.0])  # p, F, chi, pbar

    def f(y):
        p, F, _, _ = y
        return np.array([
            2 * a * p + 1 - varsigma * p * p,
            (a - p * varsigma) * F,
            F * F,
            p,
        ])

    for _ in range(n_steps):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)) or y[0] <= 0:
            raise ArithmeticError(
                f"linear-flow integration unstable at step size {h:.3e}; "
                f"state {y}"
            )
    return LinearFlowState(*y)


def half_harmonic_linear(t: float, x: float, a: float, varsigma: float):
    """Mass and density of the half-line linear diffusion, killed at 0,
    in the quadratic potential varsigma x^2 / 2.

    Reduces to `half_harmonic` at (a, varsigma) = (0, 1).  The unabsorbed
    mass factor is exp(-(varsigma/2)(pbar_t + chi_t x^2)); absorption at the
    origin contributes the reflected Gaussian bracket.
    """
    if t <= 0 or varsigma <= 0:
        raise ValueError("t and varsigma must be positive")
    if x <= 0:
        raise ValueError("x must be positive")
    st = _half_linear_flow(t, a, varsigma)
    p, m = st.p, x * st.F
    z = _gauss_cdf_0_to(m / math.sqrt(p))
    mass = 2.0 * math.exp(-(varsigma / 2.0) * (st.pbar + st.chi * x * x)) * z

    def density(y):
        y = np.asarray(y, dtype=float)
        plus = np.exp(-((y - m) ** 2) / (2 * p))
        minus = np.exp(-((y + m) ** 2) / (2 * p))
        out = (plus - minus) / (2.0 * math.sqrt(2 * math.pi * p) * z)
        return np.where(y > 0, out, 0.0)

    return float(mass), density


def half_linear_fixed_point(a: float, varsigma: float) -> float:
    """Positive root of 2ap + 1 - varsigma p^2 = 0."""
    return (a + math.sqrt(a * a + varsigma)) / varsigma


# ---------------------------------------------------------------------------
# Model registry objects used by discretize and the CLI.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HarmonicOscillator:
    name: str = "harmonic"
    is_markov: bool = False
    self_adjoint: bool = True
    exact_rho: float = -0.5

    def density(self, t, x, y):
        return mehler_kernel(t, x, y)

    def mass(self, t, x):
        return mehler_mass(t, x)

    def exact_h(self, x):
        return math.pi ** -0.25 * np.exp(-np.asarray(x) ** 2 / 2)

    def eigenvalue(self, n):
        return -(n - 0.5)

    def default_grid(self, n=400, halfwidth=8.0):
        return GridDomain.uniform_closed(-halfwidth, halfwidth, n)


@dataclass(frozen=True)
class HalfHarmonicOscillator:
    name: str = "half_harmonic"
    is_markov: bool = False
    self_adjoint: bool = True
    exact_rho: float = -1.5

    def density(self, t, x, y):
        mass, dens = half_harmonic(t, float(x))
        return mass * dens(y)

    def mass(self, t, x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.array([half_harmonic(t, float(xi))[0] for xi in xs])
        return out[0] if out.size == 1 else out

    def exact_h(self, x):
        x = np.asarray(x)
        return 2 * math.pi ** -0.25 * x * np.exp(-x ** 2 / 2)

    def eigenvalue(self, n):
        return -((2 * n - 1) + 0.5)

    def default_grid(self, n=400, xmax=8.0):
        return GridDomain.uniform_open(0.0, xmax, n)


@dataclass(frozen=True)
class DirichletHeat:
    n_terms: int = 50
    name: str = "dirichlet_heat"
    is_markov: bool = False
    self_adjoint: bool = True
    exact_rho: float = -math.pi ** 2 / 2

    def __post_init__(self):
        if self.n_terms < 1:
            raise ValueError("n_terms must be >= 1")

    def density(self, t, x, y):
        return dirichlet_heat(t, x, y, self.n_terms)

    def mass(self, t, x):
        return dirichlet_mass(t, x, self.n_terms)

    def exact_h(self, x):
        return math.sqrt(2.0) * np.sin(math.pi * np.asarray(x))

    def eigenvalue(self, n):
        return -((n * math.pi) ** 2) / 2

    def default_grid(self, n=200):
        return GridDomain.uniform_open(0.0, 1.0, n)


@dataclass(frozen=True)
class GaussOU:
    """Scalar linear diffusion dX = a X dt + sigma dB (Markov)."""

    a: float = -1.0
    sigma: float = 1.0
    name: str = "gauss_ou"
    is_markov: bool = True
    self_adjoint: bool = False
    exact_rho: float = 0.0

    def _moments(self, t, x):
        mean = np.exp(self.a * t) * np.asarray(x, dtype=float)
        if self.a == 0:
            var = self.sigma ** 2 * t
        else:
            var = self.sigma ** 2 * (math.expm1(2 * self.a * t)) / (2 * self.a)
        return mean, var

    def density(self, t, x, y):
        mean, var = self._moments(t, x)
        y = np.asarray(y, dtype=float)
        return np.exp(-((y - mean) ** 2) / (2 * var)) / math.sqrt(2 * math.pi * var)

    def mass(self, t, x):
        return np.ones_like(np.asarray(x, dtype=float))

    def stationary_cov(self):
        if self.a >= 0:
            raise ValueError("stationary quantities need a stable drift (a < 0)")
        return self.sigma ** 2 / (-2 * self.a)

    def default_grid(self, n=400, halfwidth_std=8.0):
        # cover both the driving noise and the stationary law so edge rows
        # keep their Gaussian mass inside the box
        w = halfwidth_std * max(self.sigma, math.sqrt(self.stationary_cov()))
        return GridDomain.uniform_closed(-w, w, n)


@dataclass(frozen=True)
class HalfHarmonicLinear:
    a: float = 0.0
    varsigma: float = 1.0
    name: str = "half_harmonic_linear"
    is_markov: bool = False
    self_adjoint: bool = False

    def __post_init__(self):
        if self.varsigma <= 0:
            raise ValueError("varsigma must be positive")

    @property
    def beta(self):
        return self.a + math.sqrt(self.a ** 2 + self.varsigma)

    @property
    def exact_rho(self):
        # free quadratic-potential rate -beta/2 plus the killed h-process
        # rate -(beta - a) at the origin barrier
        return self.a - 1.5 * self.beta

    def density(self, t, x, y):
        mass, dens = half_harmonic_linear(t, float(x), self.a, self.varsigma)
        return mass * dens(y)

    def mass(self, t, x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.array([
            half_harmonic_linear(t, float(xi), self.a, self.varsigma)[0]
            for xi in xs
        ])
        return out[0] if out.size == 1 else out

    def default_grid(self, n=400, xmax=8.0):
        return GridDomain.uniform_open(0.0, xmax, n)


def make_model(name: str, **params):
    registry = {
        "harmonic": HarmonicOscillator,
        "half_harmonic": HalfHarmonicOscillator,
        "dirichlet_heat": DirichletHeat,
        "gauss_ou": GaussOU,
        "half_harmonic_linear": HalfHarmonicLinear,
    }
    if name not in registry:
        raise ValueError(f"unknown model {name!r}; known: {sorted(registry)}")
    return registry[name](**params)


# ---------------------------------------------------------------------------
# Discretization and operator-level transforms.
# ---------------------------------------------------------------------------

def discretize(model, grid: GridDomain, t: float,
               quad_tol: float = 1e-6) -> DiscreteOperator:
    """Quadrature realization of the kernel on the grid.

    Entry (i, j) = density(t, x_i, x_j) * cell_weight(j), clamped at zero
    (truncated eigenseries may dip microscopically negative).
    """
    if t <= 0:
        raise ValueError("t must be positive")
    pts, w = grid.points, grid.cell_weights
    n = grid.size
    K = np.empty((n, n))
    for i in range(n):
        try:
            K[i] = model.density(t, pts[i], pts) * w
        except Exception as exc:  # keep the offending row identifiable
            raise ArithmeticError(
                f"density evaluation failed at grid row {i} (x={pts[i]!r})"
            ) from exc
    np.clip(K, 0.0, None, out=K)
    return DiscreteOperator(K, grid, t, is_markov=model.is_markov,
                            quad_tol=quad_tol)


def doob_h_transform(Q: DiscreteOperator, h: FunctionVec,
                     rho: float) -> DiscreteOperator:
    """Ground-state conjugation P_ij = e^{-rho tau} Q_ij h_j / h_i.

    With the exact leading pair this is Markov up to discretization error;
    the conjugation is algebraically invertible entrywise.
    """
    if np.any(h.values <= 0):
        raise ValueError("h must be positive everywhere on the grid")
    lam = math.exp(-rho * Q.time_step)
    P = lam * Q.matrix * (h.values[None, :] / h.values[:, None])
    return DiscreteOperator(P, Q.grid, Q.time_step, is_markov=False,
                            quad_tol=Q.quad_tol)


def undo_h_transform(P: DiscreteOperator, h: FunctionVec,
                     rho: float) -> DiscreteOperator:
    """Entrywise inverse of `doob_h_transform`."""
    lam = math.exp(rho * P.time_step)
    Q = lam * P.matrix * (h.values[:, None] / h.values[None, :])
    return DiscreteOperator(Q, P.grid, P.time_step, is_markov=False,
                            quad_tol=P.quad_tol)


# ---------------------------------------------------------------------------
# Generators by finite differences.
# ---------------------------------------------------------------------------

class GeneratorValue(NamedTuple):
    lv: float       # L(V)(x)
    gamma: float    # Gamma_L(V, V)(x) = (grad V)' Sigma^2 grad V
    fd_error: float  # Richardson estimate of the finite-difference error


def _as_point_fun(V):
    if isinstance(V, LyapunovSpec):
        return V.at
    return lambda x: float(V(np.asarray(x, dtype=float)))


def _grad_hess(f, x, h):
    d = x.size
    g = np.zeros(d)
    H = np.zeros((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
        H[i, i] = (f(x + e) - 2 * f(x) + f(x - e)) / (h * h)
    for i in range(d):
        for j in range(i + 1, d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = h
            ej[j] = h
            H[i, j] = H[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4 * h * h)
    return g, H


def generator_apply(drift, diffusion, V, x, fd_step: float = 1e-4) -> GeneratorValue:
    """Diffusion generator L(V) = b' grad V + Tr(Sigma^2 Hess V)/2 at x.

    Derivatives by central differences at fd_step, with a half-step
    Richardson pass; the returned values use the finer step and fd_error
    reports the difference between the two levels.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.size
    f = _as_point_fun(V)
    b = np.atleast_1d(np.asarray(drift(x), dtype=float))
    sig = diffusion(x) if callable(diffusion) else diffusion
    sig = np.atleast_2d(np.asarray(sig, dtype=float))
    if sig.shape == (1, 1) and d > 1:
        sig = sig[0, 0] * np.eye(d)
    S2 = sig @ sig.T

    def lv_at(h):
        g, H = _grad_hess(f, x, h)
        return float(b @ g + 0.5 * np.trace(S2 @ H)), g

    coarse, _ = lv_at(fd_step)
    fine, g = lv_at(fd_step / 2)
    gamma = float(g @ S2 @ g)
    return GeneratorValue(fine, gamma, abs(fine - coarse))


# ---------------------------------------------------------------------------
# Domination transfer via Hoelder.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DominationReport:
    holder_max: float
    theta: FunctionVec          # transferred drift ratio Q(V^{1/p}) / V^{1/p}
    excluded: np.ndarray        # grid indices where Q(1) vanished
    p: float
    edge_decay_ok: bool


def domination_transfer(Q: DiscreteOperator, V: LyapunovSpec,
                        p: float) -> DominationReport:
    """Check Q(V^{1/p}) <= Q(V)^{1/p} Q(1)^{1-1/p} pointwise on the grid.

    The report also carries the transferred drift function
    theta = Q(V^{1/p}) / V^{1/p}, whose decay toward the grid edges is the
    surrogate vanishing-at-infinity statement.
    """
    if p <= 1:
        raise ValueError("p must exceed 1")
    K = Q.matrix
    vals = V(Q.grid.points)
    Q1 = K.sum(axis=1)
    QV = K @ vals
    QVp = K @ (vals ** (1.0 / p))
    ok = Q1 > 0
    excluded = np.nonzero(~ok)[0]
    ratio = np.zeros_like(Q1)
    denom = (QV[ok] ** (1.0 / p)) * (Q1[ok] ** (1.0 - 1.0 / p))
    ratio[ok] = QVp[ok] / denom
    theta = FunctionVec(QVp / (vals ** (1.0 / p)), Q.grid)
    k = max(1, Q.grid.size // 20)
    interior_max = theta.values[k:-k].max() if Q.grid.size > 2 * k else theta.values.max()
    edge = max(theta.values[:k].max(), theta.values[-k:].max())
    return DominationReport(
        holder_max=float(ratio[ok].max()),
        theta=theta,
        excluded=excluded,
        p=p,
        edge_decay_ok=bool(edge <= interior_max),
    )
