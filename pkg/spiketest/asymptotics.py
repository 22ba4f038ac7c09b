"""First- and second-order limit parameters of a generalized spiked model.

For spike k the normalized fluctuation is M_k = √n(λ_k/ψ_k − 1); all
accessors take a 1-based spike index.  "First order" quantities ignore the
finite (n, p) stored on the model; the refined ones use them.
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np

from spiketest.constants import DEGENERATE_SPIKE_TOL, RECONSTRUCTION_TOL
from spiketest.errors import DegenerateSpikes, InvalidModel, NotDistantSpike, SpikeTestError
from spiketest.models import AsymptoticSummary, SpikeRecord, TraceRecord
from spiketest.spectral_measure import (
    BulkSpec,
    DiscreteMeasure,
    PsiFamily,
    moment,
    psi_family,
    resolvent_moment,
    underline_s_at_spike,
)

logger = logging.getLogger(__name__)

OFF_DIAGONAL = "off_diagonal"
DIAGONAL = "diagonal"


@dataclass(frozen=True, eq=False)
class SpikedModel:
    lambda_block: np.ndarray
    alphas: np.ndarray
    eigvecs: np.ndarray
    bulk: BulkSpec
    y: float
    nu4: float
    n: int
    p: int

    def __post_init__(self):
        lam = np.atleast_2d(np.asarray(self.lambda_block, dtype=np.float64))
        alphas = np.atleast_1d(np.asarray(self.alphas, dtype=np.float64))
        U = np.atleast_2d(np.asarray(self.eigvecs, dtype=np.float64))
        m = alphas.size
        if lam.shape != (m, m) or U.shape != (m, m):
            raise InvalidModel(f"Spike block shapes disagree: Lambda {lam.shape}, U {U.shape}, {m} spikes")
        if not np.allclose(lam, lam.T, atol=RECONSTRUCTION_TOL, rtol=0):
            raise InvalidModel("Spike block must be symmetric")
        if not np.allclose(U.T @ U, np.eye(m), atol=1e-10, rtol=0):
            raise InvalidModel("Spike eigenvectors must be orthonormal")
        recon = np.max(np.abs(lam - U @ np.diag(alphas) @ U.T))
        if recon >= RECONSTRUCTION_TOL * max(1.0, float(np.max(np.abs(alphas)))):
            raise InvalidModel(f"U diag(alpha) U^T does not reproduce Lambda (error {recon:.3e})")
        if np.any(np.diff(alphas) >= 0):
            raise InvalidModel(f"Spikes must be strictly descending: {alphas.tolist()}")
        if self.y <= 0:
            raise InvalidModel(f"Dimension ratio must be positive, got {self.y}")
        if self.nu4 < 1:
            raise InvalidModel(f"Fourth moment must be >= 1, got {self.nu4}")
        if self.n < 1 or self.p <= m:
            raise InvalidModel(f"Need n >= 1 and p > m (n={self.n}, p={self.p}, m={m})")
        if alphas[-1] <= self.bulk.measure.max_atom:
            raise InvalidModel(
                f"Smallest spike {alphas[-1]} does not exceed the bulk (max atom {self.bulk.measure.max_atom})")
        object.__setattr__(self, "lambda_block", lam)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "eigvecs", U)
        for k, a in enumerate(alphas, start=1):
            d1 = psi_family(self.H, self.y, a).psi1
            if d1 <= 0:
                raise NotDistantSpike(f"Spike {k} (alpha={a}) is not distant: psi'={d1:.6g}")

    @classmethod
    def from_lambda(cls, lambda_block, bulk: BulkSpec, nu4: float, n: int, p: int,
                    y: Optional[float] = None) -> "SpikedModel":
        lam = np.atleast_2d(np.asarray(lambda_block, dtype=np.float64))
        lam = 0.5 * (lam + lam.T)
        values, vectors = np.linalg.eigh(lam)
        order = np.argsort(values)[::-1]
        values, vectors = values[order], vectors[:, order]
        # fix the sign so the largest component of each u_k is positive
        signs = np.sign(vectors[np.argmax(np.abs(vectors), axis=0), np.arange(vectors.shape[1])])
        vectors = vectors * np.where(signs == 0, 1.0, signs)
        return cls(lam, values, vectors, bulk, p / n if y is None else y, nu4, n, p)

    @classmethod
    def from_spikes(cls, alphas: Sequence[float], bulk: BulkSpec, nu4: float, n: int, p: int,
                    eigvecs=None, y: Optional[float] = None) -> "SpikedModel":
        alphas = np.asarray(alphas, dtype=np.float64)
        U = np.eye(alphas.size) if eigvecs is None else np.asarray(eigvecs, dtype=np.float64)
        lam = U @ np.diag(alphas) @ U.T
        return cls(lam, alphas, U, bulk, p / n if y is None else y, nu4, n, p)

    @classmethod
    def factor(cls, t_list: Sequence[float], sigma2: float, n: int, p: int,
               nu4: float = 3.0) -> "SpikedModel":
        """Factor model: diagonal spikes α_j = t_j σ² over a flat bulk σ²."""
        bulk = BulkSpec(DiscreteMeasure.point_mass(sigma2))
        return cls.from_spikes([t * sigma2 for t in t_list], bulk, nu4, n, p)

    @property
    def H(self) -> DiscreteMeasure:
        return self.bulk.measure

    @property
    def m(self) -> int:
        return int(self.alphas.size)

    @property
    def p_prime(self) -> int:
        return self.p - self.m

    @property
    def beta(self) -> float:
        return self.nu4 - 3.0

    @cached_property
    def families(self) -> List[PsiFamily]:
        return [psi_family(self.H, self.y, a) for a in self.alphas]

    @property
    def population_trace(self) -> float:
        return float(np.trace(self.lambda_block)) + self.p_prime * moment(self.H, 1)

    def spike(self, k: int) -> Tuple[float, PsiFamily]:
        if not 1 <= k <= self.m:
            raise SpikeTestError(f"Spike index {k} out of range 1..{self.m}")
        return float(self.alphas[k - 1]), self.families[k - 1]

    def u(self, k: int) -> np.ndarray:
        self.spike(k)
        return self.eigvecs[:, k - 1]


def sigma2_alpha(model: SpikedModel, k: int) -> float:
    alpha, f = model.spike(k)
    scale = alpha * alpha / (f.psi * f.psi)
    return 2.0 * scale * f.psi1 + model.beta * scale * f.psi1 ** 2


def s2_alpha(model: SpikedModel, k: int) -> float:
    alpha, f = model.spike(k)
    return alpha / f.psi * f.psi1


def g_cross_cov(model: SpikedModel, k1: int, k2: int, entry_class: str) -> float:
    """Covariance between matching entries of the limiting G at ψ_{k1} and ψ_{k2}."""
    if k1 == k2:
        raise SpikeTestError("g_cross_cov needs two distinct spikes")
    a1, f1 = model.spike(k1)
    a2, f2 = model.spike(k2)
    if abs(f1.psi - f2.psi) < DEGENERATE_SPIKE_TOL:
        raise DegenerateSpikes(f"Spikes {k1} and {k2} have coinciding psi={f1.psi!r}")
    prefactor = a1 * a2 * f1.psi1 * f2.psi1 / (f1.psi * f2.psi)
    slope = (a1 - a2) / (f1.psi - f2.psi)
    if entry_class == OFF_DIAGONAL:
        return prefactor * slope
    if entry_class == DIAGONAL:
        return prefactor * (2.0 * slope + model.beta)
    raise SpikeTestError(f"Unknown entry class: {entry_class!r}")


def quartic_combination(u: np.ndarray, diagonal: float, off_diagonal: float) -> float:
    """Σ u_i⁴·diagonal + Σ_{i≠j} u_i²u_j²·off_diagonal."""
    u2 = np.asarray(u, dtype=np.float64) ** 2
    fourth = float(np.sum(u2 * u2))
    return fourth * diagonal + (float(np.sum(u2)) ** 2 - fourth) * off_diagonal


def lambda_var_first_order(model: SpikedModel, k: int) -> float:
    return quartic_combination(model.u(k), sigma2_alpha(model, k), s2_alpha(model, k))


def cross_spike_cov(model: SpikedModel, k1: int, k2: int) -> float:
    """Limiting cov(M_{k1}, M_{k2}); the diagonal is lambda_var_first_order."""
    if k1 == k2:
        return lambda_var_first_order(model, k1)
    u1, u2 = model.u(k1), model.u(k2)
    w = u1 * u2
    same = float(np.sum(w * w))
    crossed = float(np.sum(w)) ** 2 - same
    total = 0.0
    if same:
        total += same * g_cross_cov(model, k1, k2, DIAGONAL)
    if crossed:
        total += crossed * g_cross_cov(model, k1, k2, OFF_DIAGONAL)
    return total


def cross_spike_matrix(model: SpikedModel) -> np.ndarray:
    m = model.m
    out = np.empty((m, m))
    for i in range(1, m + 1):
        for j in range(i, m + 1):
            out[i - 1, j - 1] = out[j - 1, i - 1] = cross_spike_cov(model, i, j)
    return out


def _weighted_kernel(model: SpikedModel, alpha: float, b: int) -> float:
    # I_b = ∫ t²/(1 − t/α)^b dH
    return alpha ** b * resolvent_moment(model.H, alpha, 2, b)


def mu_M(model: SpikedModel, k: int) -> float:
    alpha, _ = model.spike(k)
    y = model.y
    i2 = _weighted_kernel(model, alpha, 2)
    i3 = _weighted_kernel(model, alpha, 3)
    slope = 1.0 - y / alpha ** 2 * i2
    return -(y * i3 / slope ** 2 + y * model.beta * i3 / slope) / alpha ** 3


def sigma2_M(model: SpikedModel, k: int) -> float:
    alpha, _ = model.spike(k)
    s = underline_s_at_spike(model.H, model.y, alpha)
    gaussian = (2.0 * s.s1 * s.s3 - 3.0 * s.s2 ** 2) / (6.0 * s.s1 ** 2)
    # (1 + tŝ)⁻⁴ at ŝ = −1/α equals α⁴/(α − t)⁴
    cumulant = model.y * model.beta * s.s1 ** 2 * _weighted_kernel(model, alpha, 4)
    return gaussian + cumulant


def lambda_mean_correction(model: SpikedModel, k: int) -> float:
    alpha, f = model.spike(k)
    return alpha * alpha * f.psi1 / (math.sqrt(model.n) * f.psi) * mu_M(model, k)


def lambda_var_refined(model: SpikedModel, k: int) -> float:
    alpha, f = model.spike(k)
    extra = alpha ** 4 * f.psi1 ** 2 * sigma2_M(model, k) / (model.n * f.psi ** 2)
    return lambda_var_first_order(model, k) + extra


def _spike_block_energy(model: SpikedModel) -> float:
    lam = model.lambda_block
    diag = np.diag(lam)
    off = float(np.sum(lam * lam) - np.sum(diag * diag))
    return float(np.sum(diag * diag)) * (model.nu4 - 1.0) + off


def trace_var(model: SpikedModel, refined: bool) -> float:
    """Variance of tr S_n − tr Σ_p.

    The refined form is the finite-n variance itself: bulk terms carry
    p′ = p − m (p′γ₂ and p′γ_{d,2}, not pγ₂) and the spike block enters
    through its own energy term.
    """
    g2 = moment(model.H, 2)
    gd2 = model.bulk.gamma_d2
    if not refined:
        return 2.0 * model.y * g2 + model.y * model.beta * gd2
    n, pp = model.n, model.p_prime
    return (2.0 * pp * g2 + model.beta * pp * gd2 + _spike_block_energy(model)) / n


def _spike_trace_loading(model: SpikedModel, k: int) -> float:
    u = model.u(k)
    lam = model.lambda_block
    diag = np.diag(lam)
    full = float(u @ lam @ u)
    on_diag = float(np.sum(diag * u * u))
    return (model.nu4 - 1.0) * on_diag + (full - on_diag)


def rho_and_cov_lambda_trace(model: SpikedModel, k: int) -> Tuple[float, float]:
    alpha, f = model.spike(k)
    root_n = math.sqrt(model.n)
    rho = alpha * f.psi1 / (root_n * f.psi) * _spike_trace_loading(model, k)
    bulk_part = model.y * (model.nu4 - 1.0) / (root_n * f.psi) * _weighted_kernel(model, alpha, 2)
    return rho, rho + bulk_part


def ratio_params(model: SpikedModel, k: int, refined: bool) -> Tuple[float, float]:
    """Center and variance for √n·λ_k/((1/p) tr S_n).

    The refined variance takes the trace part from trace_var(refined=True),
    so its γ₂ term is p′γ₂/p² with p′ = p − m.
    """
    alpha, f = model.spike(k)
    tau = model.population_trace / model.p
    center = f.psi / tau
    var1 = lambda_var_first_order(model, k)
    if not refined:
        return center, f.psi ** 2 / moment(model.H, 1) ** 2 * var1

    n, p = model.n, model.p
    shifted = f.psi + alpha * alpha * f.psi1 * mu_M(model, k) / n
    n_var_lambda = f.psi ** 2 * lambda_var_refined(model, k)
    _, cov_total = rho_and_cov_lambda_trace(model, k)
    n_cov = math.sqrt(n) * f.psi * cov_total
    n_var_trace = n * trace_var(model, refined=True)
    variance = (
        n_var_lambda / tau ** 2
        - 2.0 * shifted * n_cov / (p * tau ** 3)
        + shifted ** 2 * n_var_trace / (p * p * tau ** 4)
    )
    return center, variance


def ratio_statistic(eigs: Sequence[float], k: int) -> float:
    eigs = np.asarray(eigs, dtype=np.float64)
    return float(eigs[k - 1] / np.mean(eigs))


def summarize(model: SpikedModel) -> AsymptoticSummary:
    spikes = []
    for k in range(1, model.m + 1):
        alpha, f = model.spike(k)
        rho, cov_total = rho_and_cov_lambda_trace(model, k)
        center, ratio_var1 = ratio_params(model, k, refined=False)
        _, ratio_var2 = ratio_params(model, k, refined=True)
        spikes.append(SpikeRecord(
            k=k,
            alpha=alpha,
            psi=f.psi,
            var1=lambda_var_first_order(model, k),
            mean_corr=lambda_mean_correction(model, k),
            var2=lambda_var_refined(model, k),
            cov_trace=cov_total,
            rho=rho,
            ratio_center=center,
            ratio_var1=ratio_var1,
            ratio_var2=ratio_var2,
        ))
    logger.info("summarized %d spikes (y=%s, nu4=%s)", model.m, model.y, model.nu4)
    return AsymptoticSummary(
        spikes=spikes,
        trace=TraceRecord(var1=trace_var(model, False), var2=trace_var(model, True)),
        cross_cov=cross_spike_matrix(model).tolist(),
        y=model.y,
        nu4=model.nu4,
        n=model.n,
        p=model.p,
    )
