"""Time-domain optimisation of decoupling sequences for Lorentzian noise.

For OU noise the decay exponent of a sequence ``mu`` has the closed form::

    chi(x, y) = (y/2) [x - 1 + (-1)^n e^{-x}
                       - 2 sum_{k=0}^{n+1} sum_{j=1}^{n} (-1)^{|k-j|} e^{-|mu_k - mu_j| x}]

with ``x = gamma T``, ``y = Gamma / gamma``, ``mu_0 = 0`` and ``mu_{n+1} = 1``.
Its small-``x`` expansion ``chi = (y/2)(C0 + C1 x + C2 x^2 + C3 x^3 + ...)``
always has ``C0 = C1 = 0``; ``C2`` vanishes exactly when the noise-free
dynamical phase is cancelled, and minimising ``C3`` under that constraint
singles out CPMG with ``C3 = 1 / (12 n^2)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import mpmath
import numpy as np
from scipy.optimize import minimize

from .sequences import PulseSequence, cpmg


class OptimizationError(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


def _pairs(seq: PulseSequence):
    """Signs ``(-1)^{|k-j|}`` and distances ``|mu_k - mu_j|`` for k = 0..n+1, j = 1..n."""
    n = seq.n
    e = seq.edges
    k = np.arange(n + 2)[:, None]
    j = np.arange(1, n + 1)[None, :]
    sign = np.where((np.abs(k - j) % 2) == 0, 1.0, -1.0)
    dist = np.abs(e[:, None] - e[None, 1 : n + 1])
    return sign, dist


def chi_exact(seq: PulseSequence, x, y):
    """Closed-form decay exponent of ``seq`` under OU noise (vectorised in ``x``)."""
    x_arr = np.asarray(x, dtype=float)
    xs = np.atleast_1d(x_arr)
    n = seq.n
    sign, dist = _pairs(seq)
    double_sum = np.einsum("kj,kjx->x", sign, np.exp(-dist[:, :, None] * xs[None, None, :]))
    bracket = xs - 1.0 + (-1.0) ** n * np.exp(-xs) - 2.0 * double_sum
    chi = 0.5 * np.asarray(y, dtype=float) * bracket
    return chi.reshape(x_arr.shape) if x_arr.ndim else float(chi[0])


@dataclass(frozen=True)
class ExpansionCoeffs:
    C0: float
    C1: float
    C2: float
    C3: float


def coefficients(seq: PulseSequence) -> ExpansionCoeffs:
    """Series coefficients ``C0..C3`` of ``2 chi / y`` evaluated from the double sums."""
    n = seq.n
    sign, dist = _pairs(seq)
    par = (-1.0) ** n
    return ExpansionCoeffs(
        C0=-1.0 + par - 2.0 * sign.sum(),
        C1=1.0 - par + 2.0 * np.sum(sign * dist),
        C2=0.5 * par - np.sum(sign * dist**2),
        C3=-par / 6.0 + np.sum(sign * dist**3) / 3.0,
    )


def series_coefficients(seq: PulseSequence, order: int = 3, dps: int = 60) -> list[float]:
    """Taylor coefficients of ``2 chi / y`` at ``x = 0`` by high-precision numerical differentiation.

    Independent of :func:`coefficients`: it differentiates the closed-form
    exponent numerically in multiprecision arithmetic.
    """
    mu = [mpmath.mpf(0)] + [mpmath.mpf(m) for m in seq.fractions] + [mpmath.mpf(1)]
    n = seq.n

    with mpmath.workdps(dps):

        def bracket(x):
            total = x - 1 + (-1) ** n * mpmath.exp(-x)
            for k in range(n + 2):
                for j in range(1, n + 1):
                    total -= 2 * (-1) ** abs(k - j) * mpmath.exp(-abs(mu[k] - mu[j]) * x)
            return total

        coeffs = mpmath.taylor(bracket, 0, order)
    return [float(c) for c in coeffs]


def phase_constraint(seq: PulseSequence) -> float:
    """``(-1)^n + 2 sum_k (-1)^{k-1} mu_k``; zero iff the dynamical phase cancels."""
    n = seq.n
    alt = np.sum((-1.0) ** np.arange(n) * seq.mu)
    return float((-1.0) ** n + 2.0 * alt)


def recursion_solution(n: int) -> PulseSequence:
    """Stationary point of ``C3`` built backwards from ``mu_1 = 1/(2n)``.

    Uses ``mu_{n-j} = (2j+1)/(j+1) sum_{k<n-j} (-1)^{n-k-j-1} mu_k + 1/(2j+2)``
    in exact rational arithmetic.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    mu: list[Fraction] = []
    for m in range(1, n + 1):
        j = n - m
        acc = sum(((-1) ** (m - k - 1)) * mu[k - 1] for k in range(1, m))
        mu.append(Fraction(2 * j + 1, j + 1) * acc + Fraction(1, 2 * j + 2))
    return PulseSequence(tuple(float(v) for v in mu), f"recursion{n}")


# ---------------------------------------------------------------------------
# Constrained minimisation of C3
# ---------------------------------------------------------------------------


def _c3(mu: np.ndarray) -> float:
    n = len(mu)
    e = np.concatenate([[0.0], mu, [1.0]])
    k = np.arange(n + 2)[:, None]
    j = np.arange(1, n + 1)[None, :]
    sign = np.where((np.abs(k - j) % 2) == 0, 1.0, -1.0)
    return -((-1.0) ** n) / 6.0 + np.sum(sign * np.abs(e[:, None] - mu[None, :]) ** 3) / 3.0


def c3_gradient(mu: np.ndarray) -> np.ndarray:
    """Gradient of ``C3`` with respect to the pulse positions."""
    n = len(mu)
    e = np.concatenate([[0.0], mu, [1.0]])
    idx = np.arange(n + 2)
    sign = np.where((np.abs(idx[:, None] - idx[None, :]) % 2) == 0, 1.0, -1.0)
    diff = e[:, None] - e[None, :]
    g = np.abs(diff) * diff
    # row m picks up both the j = m and the k = m occurrence; k runs over 0..n+1, j over 1..n
    full = (sign * g).sum(axis=1) + (sign * g)[:, 1 : n + 1].sum(axis=1)
    return full[1 : n + 1]


def c3_hessian(mu: np.ndarray) -> np.ndarray:
    n = len(mu)
    e = np.concatenate([[0.0], mu, [1.0]])
    idx = np.arange(n + 2)
    sign = np.where((np.abs(idx[:, None] - idx[None, :]) % 2) == 0, 1.0, -1.0)
    ad = 2.0 * np.abs(e[:, None] - e[None, :]) * sign
    H = -2.0 * ad[1 : n + 1, 1 : n + 1]
    diag = ad.sum(axis=1)[1 : n + 1] + ad[:, 1 : n + 1].sum(axis=1)[1 : n + 1]
    H[np.diag_indices(n)] = diag
    return H


def _reduction(n: int):
    """``mu = A nu + b`` with ``mu_n`` eliminated through the phase constraint."""
    A = np.zeros((n, n - 1))
    A[: n - 1] = np.eye(n - 1)
    A[n - 1] = [(-1.0) ** (n - k - 1) for k in range(1, n)]
    b = np.zeros(n)
    b[n - 1] = 0.5
    return A, b


def _gaps(mu: np.ndarray) -> np.ndarray:
    return np.diff(np.concatenate([[0.0], mu, [1.0]]))


@dataclass
class OptimizationResult:
    fractions: list[float]
    C3_min: float
    residual: float
    iterations: int
    starts: int
    endpoints: list[list[float]] = field(default_factory=list, repr=False)

    @property
    def sequence(self) -> PulseSequence:
        return PulseSequence(tuple(self.fractions), f"optimal{len(self.fractions)}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("endpoints")
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _random_start(n, A, b, rng, margin, max_tries=100_000):
    for _ in range(max_tries):
        nu = np.sort(rng.uniform(size=n - 1))
        if np.all(_gaps(A @ nu + b) > margin):
            return nu
    raise OptimizationError(f"no feasible start found for n={n} after {max_tries} draws")


def _newton_polish(nu, A, b, margin, max_iter=50):
    for it in range(max_iter):
        mu = A @ nu + b
        g = A.T @ c3_gradient(mu)
        H = A.T @ c3_hessian(mu) @ A
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            return nu, it
        trial = nu - step
        if not np.all(_gaps(A @ trial + b) > margin):
            return nu, it
        nu = trial
        if np.max(np.abs(step)) < 1e-15:
            return nu, it + 1
    return nu, max_iter


def optimize(n: int, tol: float = 1e-6, starts: int = 20, seed: int = 0, margin: float = 1e-9) -> OptimizationResult:
    """Minimise ``C3`` over ordered sequences with zero dynamical phase.

    The constraint is eliminated by solving for ``mu_n``; the reduced
    ``(n-1)``-dimensional problem is solved by SLSQP under the ordering
    constraints from ``starts`` random feasible points and then polished with
    Newton steps on the reduced gradient.  ``tol`` is the reduced-gradient
    norm accepted as converged.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n == 1:
        mu = np.array([0.5])
        return OptimizationResult([0.5], float(_c3(mu)), phase_constraint(PulseSequence((0.5,))), 0, 1, [[0.5]])

    A, b = _reduction(n)
    rng = np.random.default_rng(seed)
    ordering = {
        "type": "ineq",
        "fun": lambda nu: _gaps(A @ nu + b) - margin,
        "jac": lambda nu: np.diff(np.vstack([np.zeros(n), np.eye(n), np.zeros(n)]), axis=0) @ A,
    }
    runs = []
    for _ in range(starts):
        nu0 = _random_start(n, A, b, rng, margin)
        res = minimize(
            lambda nu: _c3(A @ nu + b),
            nu0,
            jac=lambda nu: A.T @ c3_gradient(A @ nu + b),
            method="SLSQP",
            constraints=[ordering],
            options={"ftol": 1e-15, "maxiter": 1000},
        )
        nu, newton_iters = _newton_polish(res.x, A, b, margin)
        mu = A @ nu + b
        grad = float(np.linalg.norm(A.T @ c3_gradient(mu)))
        runs.append((float(_c3(mu)), tuple(mu), res.nit + newton_iters, grad))

    best = min(runs, key=lambda r: (round(r[0], 13), r[1]))
    c3_min, mu_best, iters, grad = best
    if grad > tol:
        raise OptimizationError(
            f"optimisation did not converge for n={n}: reduced gradient {grad:.3g}", best=list(mu_best)
        )
    seq = PulseSequence(mu_best)
    return OptimizationResult(
        fractions=list(mu_best),
        C3_min=c3_min,
        residual=phase_constraint(seq),
        iterations=iters,
        starts=starts,
        endpoints=[list(r[1]) for r in runs],
    )


def compare_to_cpmg(result: OptimizationResult) -> dict:
    ref = cpmg(len(result.fractions))
    return {
        "cpmg": list(ref.fractions),
        "max_abs_deviation": float(np.max(np.abs(np.array(result.fractions) - ref.mu))),
        "C3_cpmg": float(_c3(ref.mu)),
        "C3_times_12n2": result.C3_min * 12 * len(result.fractions) ** 2,
    }
