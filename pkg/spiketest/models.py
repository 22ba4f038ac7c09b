from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional
import json

import numpy as np


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@dataclass
class SpikeRecord:
    k: int
    alpha: float
    psi: float
    var1: float
    mean_corr: float
    var2: float
    cov_trace: float
    rho: float
    ratio_center: float
    ratio_var1: float
    ratio_var2: float


@dataclass
class TraceRecord:
    var1: float
    var2: float


@dataclass
class AsymptoticSummary:
    spikes: List[SpikeRecord]
    trace: TraceRecord
    cross_cov: List[List[float]]
    y: float
    nu4: float
    n: int
    p: int

    def to_dict(self) -> Dict[str, Any]:
        return _plain(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass
class TestOutcome:
    __test__ = False  # not a pytest class

    statistic: float
    critical_value: float
    reject: bool
    estimated_alphas: List[float]
    estimated_ts: List[float]
    minimizer_t: float
    m0: int
    procedure: str
    p: int
    n: int

    @property
    def verdict(self) -> str:
        word = "REJECT" if self.reject else "ACCEPT"
        return (f"{word} H0 (m0={self.m0}, {self.procedure}): "
                f"T={self.statistic:.6f} {'<' if self.reject else '>='} q*={self.critical_value:.6f}")

    def to_dict(self) -> Dict[str, Any]:
        return _plain(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass
class SpectrumSample:
    eigs: np.ndarray
    trace: float
    p: int
    n: int
    seed: int
    population_trace: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return _plain(asdict(self))

    def header(self) -> str:
        return f"# p={self.p},n={self.n},seed={self.seed},trace={self.trace!r}"


@dataclass
class RejectionSummary:
    procedure: str
    rejection_rate: float
    mc_standard_error: float
    mean_statistic: float
    mean_critical_value: float
    valid_reps: int
    failures: int
    failure_kinds: Dict[str, int] = field(default_factory=dict)


@dataclass
class MomentSummary:
    """Empirical moments of the eigenvalue and trace fluctuations with jackknife SEs."""
    mean: List[float]
    mean_se: List[float]
    var: List[float]
    var_se: List[float]
    trace_var: float
    trace_var_se: float
    cov_trace: List[float]
    cov_trace_se: List[float]
    corr_trace: List[float]
    cross_cov: List[List[float]]
    cross_cov_se: List[List[float]]
    ratio_var: List[float]
    ratio_var_se: List[float]
    theory: Dict[str, Any] = field(default_factory=dict)


@dataclass
class MCReport:
    label: str
    reps: int
    master_seed: int
    results: List[RejectionSummary] = field(default_factory=list)
    moments: Optional[MomentSummary] = None
    parameters: Dict[str, Any] = field(default_factory=dict)

    def result(self, procedure: str) -> RejectionSummary:
        for r in self.results:
            if r.procedure == procedure:
                return r
        raise KeyError(procedure)

    def to_dict(self) -> Dict[str, Any]:
        return _plain(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())
