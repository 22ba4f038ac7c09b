"""Bulk spectral measures and the maps built on them.

A bulk measure H is a finite set of weighted atoms, so every integral
``∫ f(t) dH(t)`` is an exact sum over atoms.  Around it live the spike map

    ψ(α) = α + yα ∫ t/(α−t) dH(t),

its derivatives, the Silverstein equation for the companion Stieltjes
transform, and the support of the companion limiting spectral distribution.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from spiketest.constants import (
    BRACKET_GROWTH,
    POLE_TOL,
    SILVERSTEIN_MAX_ITER,
    SILVERSTEIN_TOL,
    SUPPORT_BISECT_TOL,
    WEIGHT_SUM_TOL,
)
from spiketest.errors import (
    InvalidMeasure,
    NoConvergence,
    NotDistantSpike,
    OutsideDomain,
    PoleAtAtom,
    SpikeTestError,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiscreteMeasure:
    atoms: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        atoms = tuple((float(t), float(w)) for t, w in self.atoms)
        if not atoms:
            raise InvalidMeasure("Measure needs at least one atom")
        for t, w in atoms:
            if not (math.isfinite(t) and t >= 0):
                raise InvalidMeasure(f"Invalid atom value: {t} (expected a finite value >= 0)")
            if not (math.isfinite(w) and w > 0):
                raise InvalidMeasure(f"Invalid atom weight: {w} (expected a finite value > 0)")
        values = [t for t, _ in atoms]
        if any(b <= a for a, b in zip(values, values[1:])):
            raise InvalidMeasure(f"Atom values must be distinct and ascending: {values}")
        total = math.fsum(w for _, w in atoms)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidMeasure(f"Atom weights sum to {total!r}, expected 1")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def point_mass(cls, t: float) -> "DiscreteMeasure":
        return cls(((t, 1.0),))

    @classmethod
    def from_pairs(cls, values: Iterable[float], weights: Iterable[float]) -> "DiscreteMeasure":
        return cls(tuple(zip(values, weights)))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DiscreteMeasure":
        try:
            return cls(tuple((a["t"], a["w"]) for a in data["atoms"]))
        except (KeyError, TypeError) as e:
            raise InvalidMeasure(f"Malformed measure record: {e}") from e

    @cached_property
    def values(self) -> np.ndarray:
        return np.array([t for t, _ in self.atoms], dtype=np.float64)

    @cached_property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms], dtype=np.float64)

    @property
    def max_atom(self) -> float:
        return self.atoms[-1][0]

    @cached_property
    def breakpoints(self) -> Tuple[float, ...]:
        """Zero together with the atoms: the points where α=−1/s is excluded."""
        return tuple(sorted({0.0, *self.values.tolist()}))

    def to_dict(self) -> Dict[str, Any]:
        return {"atoms": [{"t": t, "w": w} for t, w in self.atoms]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class BulkSpec:
    measure: DiscreteMeasure
    diag_second_moment: Optional[float] = field(default=None)

    def __post_init__(self):
        if self.diag_second_moment is None:
            # diagonal V with entries drawn from H
            object.__setattr__(self, "diag_second_moment", moment(self.measure, 2))
        elif self.diag_second_moment < 0:
            raise InvalidMeasure(f"Invalid diagonal second moment: {self.diag_second_moment}")

    @property
    def gamma_d2(self) -> float:
        return float(self.diag_second_moment)


class PsiFamily(NamedTuple):
    psi: float
    psi1: float
    psi2: float
    psi3: float


class SDerivatives(NamedTuple):
    s: float
    s1: float
    s2: float
    s3: float


def moment(H: DiscreteMeasure, k: int) -> float:
    if k < 1:
        raise SpikeTestError(f"Moment order must be >= 1, got {k}")
    return float(np.dot(H.weights, H.values ** k))


def _check_pole(H: DiscreteMeasure, alpha: float) -> None:
    gap = np.min(np.abs(alpha - H.values))
    if gap < POLE_TOL:
        raise PoleAtAtom(f"alpha={alpha!r} lies on an atom of H (distance {gap:.3e})")


def resolvent_moment(H: DiscreteMeasure, alpha: float, a: int, b: int) -> float:
    """Σ w t^a/(α−t)^b over the atoms of H."""
    if a not in (1, 2) or b not in range(5):
        raise SpikeTestError(f"Unsupported kernel exponents a={a}, b={b}")
    if b >= 1:
        _check_pole(H, alpha)
    return float(np.dot(H.weights, H.values ** a / (alpha - H.values) ** b))


def _kernel(H: DiscreteMeasure, alpha: float, b: int) -> float:
    # ∫ t²/(α−t)^b over positive atoms; an atom at 0 carries no mass here
    t = H.values[H.values > 0]
    w = H.weights[H.values > 0]
    return float(np.dot(w, t * t / (alpha - t) ** b))


def _psi(H: DiscreteMeasure, y: float, alpha: float) -> float:
    t = H.values[H.values > 0]
    w = H.weights[H.values > 0]
    return float(alpha + y * alpha * np.dot(w, t / (alpha - t)))


def _psi1(H: DiscreteMeasure, y: float, alpha: float) -> float:
    return 1.0 - y * _kernel(H, alpha, 2)


def _psi2(H: DiscreteMeasure, y: float, alpha: float) -> float:
    return 2.0 * y * _kernel(H, alpha, 3)


def psi_family(H: DiscreteMeasure, y: float, alpha: float) -> PsiFamily:
    _check_pole(H, alpha)
    return PsiFamily(
        psi=_psi(H, y, alpha),
        psi1=_psi1(H, y, alpha),
        psi2=_psi2(H, y, alpha),
        psi3=-6.0 * y * _kernel(H, alpha, 4),
    )


def underline_s_at_spike(H: DiscreteMeasure, y: float, alpha: float) -> SDerivatives:
    """Companion Stieltjes transform and three derivatives at z=ψ(α).

    Obtained from the inverse relation ŝ(ψ(α)) = −1/α by repeated
    differentiation in α.
    """
    f = psi_family(H, y, alpha)
    d1, d2, d3 = f.psi1, f.psi2, f.psi3
    if d1 <= 0:
        raise NotDistantSpike(f"alpha={alpha!r} is not a distant spike (psi'={d1:.6g})")
    a = alpha
    s1 = 1.0 / (a * a * d1)
    s2 = -2.0 / (a ** 3 * d1 ** 2) - d2 / (a * a * d1 ** 3)
    s3 = (
        6.0 / (a ** 4 * d1 ** 3)
        + 6.0 * d2 / (a ** 3 * d1 ** 4)
        + 3.0 * d2 * d2 / (a * a * d1 ** 5)
        - d3 / (a * a * d1 ** 4)
    )
    return SDerivatives(s=-1.0 / a, s1=s1, s2=s2, s3=s3)


class _Gap(NamedTuple):
    """An open interval of the complement of the support and its α-preimage."""
    z_lo: float
    z_hi: float
    a_lo: float
    a_hi: float


def _root(f, lo: float, hi: float) -> float:
    try:
        return brentq(f, lo, hi, xtol=SUPPORT_BISECT_TOL, rtol=4 * np.finfo(float).eps,
                      maxiter=SILVERSTEIN_MAX_ITER)
    except (RuntimeError, ValueError) as e:
        raise NoConvergence(f"Root bracketing failed on [{lo}, {hi}]: {e}") from e


def _inner_offset(lo: float, hi: float) -> float:
    # a few ulps at least, so lo + eps never rounds back onto the pole
    ulp = float(np.spacing(max(abs(lo), abs(hi))))
    return max((hi - lo) * 1e-13, 8.0 * ulp, 1e-300)


def _left_tail_gap(H: DiscreteMeasure, y: float) -> _Gap:
    d1 = lambda a: _psi1(H, y, a)
    if d1(0.0) >= 0:
        return _Gap(-math.inf, 0.0, -math.inf, 0.0)
    lo = -1.0
    for _ in range(SILVERSTEIN_MAX_ITER):
        if d1(lo) > 0:
            break
        lo *= BRACKET_GROWTH
    else:
        raise NoConvergence("Could not bracket the left edge of the support")
    a = _root(d1, lo, 0.0)
    return _Gap(-math.inf, _psi(H, y, a), -math.inf, a)


def _right_tail_gap(H: DiscreteMeasure, y: float) -> _Gap:
    top = H.max_atom
    if top == 0.0:
        return _Gap(0.0, math.inf, 0.0, math.inf)
    d1 = lambda a: _psi1(H, y, a)
    hi = 2.0 * top + 1.0
    for _ in range(SILVERSTEIN_MAX_ITER):
        if d1(hi) > 0:
            break
        hi = top + (hi - top) * BRACKET_GROWTH
    else:
        raise NoConvergence("Could not bracket the right edge of the support")
    a = _root(d1, top + _inner_offset(top, hi), hi)
    return _Gap(_psi(H, y, a), math.inf, a, math.inf)


def _interior_gap(H: DiscreteMeasure, y: float, lo: float, hi: float) -> Optional[_Gap]:
    # ψ' is concave between breakpoints, so {ψ' > 0} is one interval at most
    d1 = lambda a: _psi1(H, y, a)
    eps = _inner_offset(lo, hi)
    if hi - lo <= 2.0 * eps:
        return None  # no gap between atoms within rounding of each other
    if lo == 0.0:
        peak = 0.0  # ψ'' < 0 on (0, first atom)
    else:
        peak = _root(lambda a: _psi2(H, y, a), lo + eps, hi - eps)
    if d1(peak) <= 0:
        return None
    left = peak if lo == 0.0 else _root(d1, lo + eps, peak)
    right = _root(d1, peak, hi - eps)
    return _Gap(_psi(H, y, left), _psi(H, y, right), left, right)


@lru_cache(maxsize=256)
def _gaps(H: DiscreteMeasure, y: float) -> Tuple[_Gap, ...]:
    if y <= 0:
        raise SpikeTestError(f"Dimension ratio must be positive, got {y}")
    points = H.breakpoints
    gaps: List[_Gap] = [_left_tail_gap(H, y)]
    for lo, hi in zip(points, points[1:]):
        gap = _interior_gap(H, y, lo, hi)
        if gap is not None:
            gaps.append(gap)
    gaps.append(_right_tail_gap(H, y))
    gaps.sort(key=lambda g: g.z_lo)
    logger.debug("support gaps for y=%s: %s", y, gaps)
    return tuple(gaps)


def support_edges(H: DiscreteMeasure, y: float) -> List[Tuple[float, float]]:
    """Closed intervals of the companion limiting distribution's support.

    Degenerate intervals (the isolated point 0 when y < 1) are dropped.
    """
    gaps = _gaps(H, y)
    edges = []
    for left, right in zip(gaps, gaps[1:]):
        lo, hi = left.z_hi, right.z_lo
        if hi - lo > 1e-12 * max(1.0, abs(hi)):
            edges.append((lo, hi))
    return edges


def outside_support(H: DiscreteMeasure, y: float, z: float) -> bool:
    return any(g.z_lo < z < g.z_hi for g in _gaps(H, y))


def critical_spike(H: DiscreteMeasure, y: float) -> float:
    """Smallest α above the bulk with ψ'(α) = 0; distant spikes lie beyond it."""
    return _gaps(H, y)[-1].a_lo


def is_distant_spike(H: DiscreteMeasure, y: float, alpha: float) -> bool:
    if alpha <= H.max_atom:
        return False
    return _psi1(H, y, alpha) > 0


def _silverstein_residual(H: DiscreteMeasure, y: float, s: float, z: float) -> Tuple[float, float]:
    t, w = H.values, H.weights
    denom = 1.0 + t * s
    value = -1.0 / s + y * float(np.dot(w, t / denom)) - z
    slope = 1.0 / (s * s) - y * float(np.dot(w, t * t / (denom * denom)))
    return value, slope


def solve_silverstein(H: DiscreteMeasure, y: float, z: float) -> float:
    """Root s of z = −1/s + y∫t/(1+ts)dH on the branch where ŝ' > 0."""
    gap = next((g for g in _gaps(H, y) if g.z_lo < z < g.z_hi), None)
    if gap is None:
        raise OutsideDomain(f"z={z!r} lies inside the support for y={y}")

    target = lambda a: _psi(H, y, a) - z
    lo, hi = gap.a_lo, gap.a_hi
    if math.isinf(lo):
        step = max(1.0, abs(hi))
        lo = hi - step
        for _ in range(SILVERSTEIN_MAX_ITER):
            if target(lo) < 0:
                break
            step *= BRACKET_GROWTH
            lo = hi - step
        else:
            raise NoConvergence(f"Could not bracket z={z!r} from below")
    if math.isinf(hi):
        step = max(1.0, abs(lo))
        hi = lo + step
        for _ in range(SILVERSTEIN_MAX_ITER):
            if target(hi) > 0:
                break
            step *= BRACKET_GROWTH
            hi = lo + step
        else:
            raise NoConvergence(f"Could not bracket z={z!r} from above")
    try:
        alpha = brentq(target, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                       maxiter=SILVERSTEIN_MAX_ITER)
    except (RuntimeError, ValueError) as e:
        raise NoConvergence(f"Silverstein bracketing failed for z={z!r}: {e}") from e

    s = -1.0 / alpha
    tol = SILVERSTEIN_TOL * max(1.0, abs(z))
    residual, slope = _silverstein_residual(H, y, s, z)
    for iteration in range(SILVERSTEIN_MAX_ITER):
        if abs(residual) <= tol:
            break
        if slope <= 0:
            raise NoConvergence(f"Left the increasing branch at s={s!r} (z={z!r})")
        step = residual / slope
        candidate = s - step
        new_residual, new_slope = _silverstein_residual(H, y, candidate, z)
        if abs(new_residual) >= abs(residual) or abs(step) <= 4 * np.finfo(float).eps * abs(s):
            # rounding floor reached
            break
        s, residual, slope = candidate, new_residual, new_slope
    else:
        raise NoConvergence(f"Newton polishing did not converge for z={z!r}")
    logger.debug("solve_silverstein z=%s -> s=%s (residual %.3e)", z, s, residual)
    return s
