"""Sampling sample spectra from spiked models.

Data are X = Σ^{1/2} Y with Y an i.i.d. standardized p×n array.  When p > n
the spectrum is taken from the n×n companion matrix (1/n)XᵀX, which shares
the nonzero eigenvalues of (1/n)XXᵀ; the remaining p−n eigenvalues are zero.
"""
import logging
import math
import re
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from spiketest.asymptotics import SpikedModel
from spiketest.constants import EIGEN_CLAMP_FLOOR
from spiketest.errors import InvalidConfig, InvalidModel
from spiketest.models import SpectrumSample
from spiketest.seeding import SeedUtils

logger = logging.getLogger(__name__)

GAUSSIAN = "gaussian"
RADEMACHER = "rademacher"
UNIFORM = "uniform"
TWO_POINT = "two_point"

_HEADER_FIELD = re.compile(r"(\w+)=([^,\s]+)")


@dataclass(frozen=True)
class EntryDistribution:
    kind: str = GAUSSIAN
    a: Optional[float] = None

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, RADEMACHER, UNIFORM, TWO_POINT):
            raise InvalidConfig(f"Unknown entry distribution: {self.kind!r}")
        if self.kind == TWO_POINT and (self.a is None or self.a <= 1):
            raise InvalidConfig(f"two_point needs a > 1, got a={self.a}")

    @property
    def nu4(self) -> float:
        if self.kind == GAUSSIAN:
            return 3.0
        if self.kind == RADEMACHER:
            return 1.0
        if self.kind == UNIFORM:
            return 1.8
        a2 = self.a * self.a
        return a2 - 1.0 + 1.0 / a2

    def sample(self, rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
        if self.kind == GAUSSIAN:
            return rng.standard_normal(shape)
        if self.kind == RADEMACHER:
            return 2.0 * rng.integers(0, 2, size=shape).astype(np.float64) - 1.0
        if self.kind == UNIFORM:
            root3 = math.sqrt(3.0)
            return rng.uniform(-root3, root3, size=shape)
        a = self.a
        high = rng.random(shape) < 1.0 / (1.0 + a * a)
        return np.where(high, a, -1.0 / a)

    def to_dict(self) -> Dict[str, object]:
        out: Dict[str, object] = {"kind": self.kind}
        if self.a is not None:
            out["a"] = self.a
        return out


@dataclass(frozen=True)
class FactorSpec:
    """x = A f + e with diagonal spike block: Σ = diag(t_j σ²) ⊕ σ² I."""
    t_list: Tuple[float, ...]
    sigma2: float
    p: int

    def __post_init__(self):
        object.__setattr__(self, "t_list", tuple(float(t) for t in self.t_list))
        if self.sigma2 <= 0:
            raise InvalidModel(f"Noise variance must be positive, got {self.sigma2}")
        if any(b >= a for a, b in zip(self.t_list, self.t_list[1:])):
            raise InvalidModel(f"SNRs must be strictly descending: {list(self.t_list)}")
        if self.p <= len(self.t_list):
            raise InvalidModel(f"p={self.p} must exceed the number of factors {len(self.t_list)}")

    @property
    def m(self) -> int:
        return len(self.t_list)

    @property
    def population_trace(self) -> float:
        return self.sigma2 * (sum(self.t_list) + self.p - self.m)

    def to_model(self, n: int, nu4: float = 3.0) -> SpikedModel:
        return SpikedModel.factor(self.t_list, self.sigma2, n, self.p, nu4)


PopulationSpec = Union[SpikedModel, FactorSpec]


def _root_sigma(spec: PopulationSpec, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Square root of Σ as (dense spike block, bulk diagonal)."""
    if isinstance(spec, FactorSpec):
        top = np.diag(np.sqrt(np.asarray(spec.t_list) * spec.sigma2)).reshape(spec.m, spec.m)
        return top, np.full(spec.p - spec.m, math.sqrt(spec.sigma2))
    U = spec.eigvecs
    top = U @ np.diag(np.sqrt(spec.alphas)) @ U.T
    H = spec.H
    bulk = rng.choice(H.values, size=spec.p_prime, p=H.weights)
    return top, np.sqrt(bulk)


def _population_trace(top: np.ndarray, bulk_root: np.ndarray) -> float:
    return float(np.sum(top * top) + np.sum(bulk_root * bulk_root))


def spectrum_of(X: np.ndarray) -> Tuple[np.ndarray, float]:
    """Descending eigenvalues of (1/n)XXᵀ for a p×n array, padded to p, and the trace."""
    p, n = X.shape
    if p <= n:
        eigs = np.linalg.eigvalsh(X @ X.T / n)
    else:
        eigs = np.concatenate([np.linalg.eigvalsh(X.T @ X / n), np.zeros(p - n)])
    eigs = np.sort(eigs)[::-1]
    floor = float(np.min(eigs))
    if floor < EIGEN_CLAMP_FLOOR * max(1.0, float(eigs[0])):
        logger.warning("eigenvalue %.3e below the round-off floor was clamped", floor)
    eigs = np.maximum(eigs, 0.0)
    trace = float(np.sum(X * X)) / n
    return eigs, trace


def draw_data(spec: PopulationSpec, n: int, dist: EntryDistribution, seed: int) -> Tuple[np.ndarray, float]:
    """One p×n data draw and the trace of the Σ it was drawn from."""
    rng = SeedUtils.generator(seed)
    top, bulk_root = _root_sigma(spec, rng)
    p, m = spec.p, top.shape[0]
    Y = dist.sample(rng, (p, n))
    X = np.empty_like(Y)
    X[:m] = top @ Y[:m]
    X[m:] = bulk_root[:, None] * Y[m:]
    return X, _population_trace(top, bulk_root)


def sample_spectrum(spec: PopulationSpec, n: int, dist: EntryDistribution, seed: int) -> SpectrumSample:
    if spec.p < 2 or n < 2:
        raise InvalidConfig(f"Need p, n >= 2 (p={spec.p}, n={n})")
    X, population_trace = draw_data(spec, n, dist, seed)
    eigs, trace = spectrum_of(X)
    return SpectrumSample(eigs=eigs, trace=trace, p=spec.p, n=n, seed=int(seed),
                          population_trace=population_trace)


def companion_equivalence_check(X: np.ndarray, rtol: float = 1e-9) -> bool:
    X = np.asarray(X, dtype=np.float64)
    p, n = X.shape
    k = min(p, n)
    outer = np.sort(np.linalg.eigvalsh(X @ X.T / n))[::-1][:k]
    inner = np.sort(np.linalg.eigvalsh(X.T @ X / n))[::-1][:k]
    scale = max(1.0, float(np.max(np.abs(outer), initial=0.0)))
    return bool(np.allclose(outer, inner, rtol=rtol, atol=rtol * scale))


def write_spectrum_csv(sample: SpectrumSample, path) -> None:
    with open(path, "w", newline="") as f:
        f.write(sample.header() + "\n")
        pd.Series(sample.eigs).to_csv(f, header=False, index=False, float_format="%.17g")


def read_header(path) -> Dict[str, str]:
    fields: Dict[str, str] = {}
    with open(path) as f:
        for line in f:
            if not line.startswith("#"):
                break
            fields.update(_HEADER_FIELD.findall(line))
    return fields


def read_data_csv(path) -> np.ndarray:
    """Eigenvalue list (one column) or raw n×p data matrix (several columns)."""
    frame = pd.read_csv(path, comment="#", header=None, skip_blank_lines=True)
    if frame.shape[1] == 1:
        return frame.iloc[:, 0].to_numpy(dtype=np.float64)
    return frame.to_numpy(dtype=np.float64)


def eigenvalues_from_data(values: np.ndarray) -> np.ndarray:
    if values.ndim == 1:
        return np.sort(values)[::-1]
    # rows are observations
    eigs, _ = spectrum_of(values.T)
    return eigs
