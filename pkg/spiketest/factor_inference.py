"""Testing the strength of the m0-th factor.

H0: t_{m0} = α_{m0}/σ² ≥ c.  The statistic is the m0-th eigenvalue over the
mean of the trailing ones; its critical value is the infimum of the
t-parameterized quantile q(t_{m0}; t_{m0-1}, ..., t_1) over c ≤ t_{m0} <
t_{m0-1}, with the larger SNRs replaced by plug-in estimates.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ndtri

from spiketest.constants import (
    DEFAULT_ALPHA_LEVEL,
    DEGENERATE_EIGENVALUE_TOL,
    Q_STAR_GRID_POINTS,
    Q_STAR_XTOL,
    T_MAX,
)
from spiketest.errors import (
    BelowThreshold,
    DegenerateEigenvalue,
    EmptyRange,
    InsufficientSeparation,
    InvalidConfig,
    NegativeNoiseEstimate,
    ZeroBulk,
)
from spiketest.models import TestOutcome

logger = logging.getLogger(__name__)

CORRECTED = "corrected"
UNCORRECTED = "uncorrected"
EXPLICIT = "explicit"
GENERAL = "general"


@dataclass(frozen=True)
class FactorTestConfig:
    m0: int
    c: float
    p: int
    n: int
    alpha_level: float = DEFAULT_ALPHA_LEVEL
    t_max: float = T_MAX

    def __post_init__(self):
        if self.p < 2 or self.n < 1:
            raise InvalidConfig(f"Invalid sizes p={self.p}, n={self.n}")
        if not 1 <= self.m0 < self.p:
            raise InvalidConfig(f"m0 must satisfy 1 <= m0 < p, got m0={self.m0}, p={self.p}")
        if not 0 < self.alpha_level < 1:
            raise InvalidConfig(f"alpha_level must lie in (0, 1), got {self.alpha_level}")
        if self.c <= self.threshold:
            raise InvalidConfig(
                f"c={self.c} must exceed the detection threshold 1+sqrt(p/n)={self.threshold:.6f}")
        if self.t_max <= self.c:
            raise InvalidConfig(f"t_max={self.t_max} must exceed c={self.c}")

    @property
    def y(self) -> float:
        return self.p / self.n

    @property
    def threshold(self) -> float:
        return 1.0 + math.sqrt(self.p / self.n)


class CorollaryParams(NamedTuple):
    psi: float
    sigma_tilde2: float
    mu_M: float
    sigma2_M: float


def _check_distant(t_list: Sequence[float], y: float) -> np.ndarray:
    ts = np.asarray(t_list, dtype=np.float64)
    bound = 1.0 + math.sqrt(y)
    if ts.size and np.any(ts <= bound):
        raise BelowThreshold(f"SNRs {ts.tolist()} must all exceed 1+sqrt(y)={bound:.6f}")
    return ts


def test_statistic(eigs: Sequence[float], m0: int) -> float:
    eigs = np.asarray(eigs, dtype=np.float64)
    if eigs.size < m0 + 1:
        raise InvalidConfig(f"Need at least m0+1={m0 + 1} eigenvalues, got {eigs.size}")
    bulk_mean = float(np.mean(eigs[m0:]))
    if bulk_mean <= 0:
        raise ZeroBulk(f"Trailing eigenvalue mean is {bulk_mean!r}")
    return float(eigs[m0 - 1] / bulk_mean)


test_statistic.__test__ = False


def _psi_t(t, y):
    # ψ/σ² for a flat bulk, in SNR units
    return t + y / (1.0 - 1.0 / t)


def _gaussian_sigma2_M_t(t, y):
    # Gaussian σ²_M at σ² = 1; divide by σ⁴ for other noise levels
    u = t - 1.0
    r = 1.0 - y / u ** 2
    return 2.0 * y / (u ** 4 * r ** 3) + 2.0 * y * y / (u ** 6 * r ** 4)


def corollary_params(t_list: Sequence[float], sigma2: float, y: float, p: int, n: int,
                     k: int) -> CorollaryParams:
    """Factor-model (flat bulk σ², Gaussian data) specializations for spike k."""
    ts = _check_distant(t_list, y)
    if not 1 <= k <= ts.size:
        raise InvalidConfig(f"Spike index {k} out of range 1..{ts.size}")
    m = ts.size
    alphas = ts * sigma2
    psi = alphas + y * alphas * sigma2 / (alphas - sigma2)
    psi1 = 1.0 - y * sigma2 ** 2 / (alphas - sigma2) ** 2
    mu = -y * sigma2 ** 2 / ((alphas - sigma2) ** 3 * psi1 ** 2)
    shifted = psi[:k] + alphas[:k] ** 2 * psi1[:k] * mu[:k] / n
    trace = float(np.sum(alphas)) + (p - m) * sigma2
    sigma_tilde2 = (trace - float(np.sum(shifted))) / (p - k)
    return CorollaryParams(
        psi=float(psi[k - 1]),
        sigma_tilde2=sigma_tilde2,
        mu_M=float(mu[k - 1]),
        sigma2_M=float(_gaussian_sigma2_M_t(ts[k - 1], y) / sigma2 ** 2),
    )


def _denominator(t, upper: np.ndarray, y: float, p: int, m0: int):
    # 1 − (1/(p−m0)) Σ_{j≤m0} y/(1−1/t_j), t_{m0} = t
    acc = float(np.sum(y / (1.0 - 1.0 / upper))) + y / (1.0 - 1.0 / t)
    return 1.0 - acc / (p - m0)


def _sigma_star2_explicit(t, upper: np.ndarray, y: float, p: int, n: int):
    m0 = upper.size + 1
    inv = 1.0 / _denominator(t, upper, y, p, m0)
    u = t - 1.0
    r = 1.0 - y / u ** 2
    centre = _psi_t(t, y)
    bracket = (
        4.0 * y * t / (3.0 * u ** 3)
        - 4.0 * y * t / (3.0 * u ** 3 * r ** 3)
        + 2.0 * y * y * t * t / (3.0 * u ** 6 * r ** 4)
        + 2.0 * y * t * t / u ** 4
        + 4.0 * y * y * t * t / (3.0 * u ** 6 * r)
    )
    q = p - m0
    return (
        2.0 * t * t * r * inv ** 2
        - 4.0 * y * t * t / (q * u ** 2) * centre * inv ** 3
        + 2.0 * y * n / q ** 2 * centre ** 2 * inv ** 4
        + t * t * r * r / n * inv ** 2 * bracket
    )


def _sigma_star2_general(ts: np.ndarray, y: float, p: int, n: int, m0: int) -> float:
    """Refined variance written through ψ, μ_M, σ²_M and σ̃² at σ² = 1."""
    params = corollary_params(ts, 1.0, y, p, n, m0)
    a = ts[:m0]
    psi1 = 1.0 - y / (a - 1.0) ** 2
    ak, d1 = float(a[-1]), float(psi1[-1])
    psi, mu, s2m, st2 = params.psi, params.mu_M, params.sigma2_M, params.sigma_tilde2
    q = p - m0
    once = psi + ak * ak * d1 * mu / n
    twice = psi + 2.0 * ak * ak * d1 * mu / n
    tail = float(np.sum(2.0 * a ** 2 * psi1 - 4.0 * a ** 2))
    return (
        2.0 * ak * ak * d1 / st2 ** 2
        + 4.0 * ak * ak * d1 * twice / (q * st2 ** 3)
        + ak ** 4 * d1 ** 2 * s2m / (n * st2 ** 2)
        - 4.0 * ak * ak * once / (q * st2 ** 3)
        + n / q ** 2 * (2.0 * y + 2.0 / n * float(np.sum(ts ** 2))) * twice ** 2 / st2 ** 4
        + 2.0 * psi * ak ** 4 * d1 ** 2 * s2m / (n * q * st2 ** 3)
        + psi ** 2 * tail / (q * q * st2 ** 4)
    )


def sigma_star2(t_list: Sequence[float], y: float, p: int, n: int, m0: int,
                mode: str = EXPLICIT) -> float:
    ts = _check_distant(t_list, y)
    if not 1 <= m0 <= ts.size:
        raise InvalidConfig(f"m0={m0} needs at least m0 SNRs, got {ts.size}")
    if mode == EXPLICIT:
        return float(_sigma_star2_explicit(ts[m0 - 1], ts[:m0 - 1], y, p, n))
    if mode == GENERAL:
        return _sigma_star2_general(ts, y, p, n, m0)
    raise InvalidConfig(f"Unknown sigma_star2 mode: {mode!r}")


def uncorrected_variance(t, y):
    """Limiting variance used without second-order correction."""
    return 2.0 * t * t - 2.0 * y * t * t / (t - 1.0) ** 2


def q_curve(t_values, t_upper_list: Sequence[float], y: float, p: int, n: int,
            alpha_level: float, corrected: bool = True) -> np.ndarray:
    """q over an array of candidate t_{m0} values with the larger SNRs held fixed."""
    t = np.asarray(t_values, dtype=np.float64)
    upper = _check_distant(t_upper_list, y)
    _check_distant(np.atleast_1d(t), y)
    z = ndtri(alpha_level)
    if corrected:
        centre = _psi_t(t, y) / _denominator(t, upper, y, p, upper.size + 1)
        spread = np.sqrt(_sigma_star2_explicit(t, upper, y, p, n))
    else:
        centre = _psi_t(t, y)
        spread = np.sqrt(uncorrected_variance(t, y))
    return centre + z * spread / math.sqrt(n)


def q_alpha(t_list: Sequence[float], y: float, p: int, n: int, alpha_level: float,
            corrected: bool = True) -> float:
    ts = _check_distant(t_list, y)
    if ts.size == 0:
        raise InvalidConfig("q_alpha needs at least t_{m0}")
    return float(q_curve(ts[-1], ts[:-1], y, p, n, alpha_level, corrected))


def q_star(t_upper_list: Sequence[float], c: float, y: float, p: int, n: int,
           alpha_level: float, corrected: bool = True, t_max: float = T_MAX) -> Tuple[float, float]:
    """Infimum of q over c <= t_{m0} < t_{m0-1} and the t attaining it."""
    upper = np.asarray(t_upper_list, dtype=np.float64)
    top = float(upper[-1]) if upper.size else t_max
    if c >= top:
        raise EmptyRange(f"No admissible t_{{m0}}: c={c} >= {top}")
    grid = np.geomspace(c, top, Q_STAR_GRID_POINTS + 1)[:-1]
    values = q_curve(grid, upper, y, p, n, alpha_level, corrected)
    i = int(np.argmin(values))
    best_t, best_q = float(grid[i]), float(values[i])

    if 0 < i < grid.size - 1:
        f = lambda t: float(q_curve(t, upper, y, p, n, alpha_level, corrected))
        try:
            res = minimize_scalar(f, bracket=(grid[i - 1], grid[i], grid[i + 1]),
                                  method="golden", tol=Q_STAR_XTOL)
            t_ref = float(np.clip(res.x, c, grid[-1]))
            q_ref = f(t_ref)
            if q_ref < best_q:
                best_t, best_q = t_ref, q_ref
        except ValueError as e:
            logger.debug("golden refinement skipped at t=%s: %s", best_t, e)

    q_left = float(q_curve(c, upper, y, p, n, alpha_level, corrected))
    if q_left <= best_q:
        best_t, best_q = float(c), q_left
    logger.debug("q* = %s at t=%s (range [%s, %s))", best_q, best_t, c, top)
    return best_q, best_t


def estimate_spikes(eigs: Sequence[float], n: int, p: int, m0: int) -> List[float]:
    """Plug-in spikes α̂_k = −1/ŝ(λ_k), k <= m0, from the companion transform."""
    eigs = np.asarray(eigs, dtype=np.float64)
    y = p / n
    bulk = eigs[m0:]
    alphas = []
    for k in range(m0):
        lam = eigs[k]
        gaps = bulk - lam
        if np.any(np.abs(gaps) < DEGENERATE_EIGENVALUE_TOL):
            raise DegenerateEigenvalue(f"lambda_{k + 1}={lam!r} coincides with a bulk eigenvalue")
        s_hat = -(1.0 - y) / lam + float(np.sum(1.0 / gaps)) / n
        alphas.append(-1.0 / s_hat)
    return alphas


def estimate_ts(eigs: Sequence[float], alpha_hats: Sequence[float], m0: int, p: int) -> List[float]:
    eigs = np.asarray(eigs, dtype=np.float64)
    noise = (float(np.sum(eigs)) - math.fsum(alpha_hats)) / (p - m0)
    if noise <= 0:
        raise NegativeNoiseEstimate(f"Noise level estimate {noise!r} is not positive")
    return [a / noise for a in alpha_hats]


def run_test(eigs: Sequence[float], config: FactorTestConfig, corrected: bool = True) -> TestOutcome:
    eigs = np.sort(np.asarray(eigs, dtype=np.float64))[::-1]
    if eigs.size != config.p:
        raise InvalidConfig(f"Expected {config.p} eigenvalues, got {eigs.size}")
    m0 = config.m0
    statistic = test_statistic(eigs, m0)
    alpha_hats = estimate_spikes(eigs, config.n, config.p, m0)
    t_hats = estimate_ts(eigs, alpha_hats, m0, config.p)
    upper = t_hats[:m0 - 1]
    for j, t in enumerate(upper, start=1):
        if t <= config.threshold:
            raise InsufficientSeparation(
                f"Estimated t_{j}={t:.6f} does not exceed 1+sqrt(p/n)={config.threshold:.6f}")
    critical, argmin = q_star(upper, config.c, config.y, config.p, config.n,
                              config.alpha_level, corrected, config.t_max)
    return TestOutcome(
        statistic=statistic,
        critical_value=critical,
        reject=statistic < critical,
        estimated_alphas=alpha_hats,
        estimated_ts=t_hats,
        minimizer_t=argmin,
        m0=m0,
        procedure=CORRECTED if corrected else UNCORRECTED,
        p=config.p,
        n=config.n,
    )
