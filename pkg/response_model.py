from pydantic import BaseModel, Field
from typing import Dict, List, Optional

from spiketest.config_models import SimulateConfig, TestConfigModel


class SpikeResponse(BaseModel):
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


class TraceResponse(BaseModel):
    var1: float
    var2: float


class AsymptoticsResponse(BaseModel):
    spikes: List[SpikeResponse]
    trace: TraceResponse
    cross_cov: List[List[float]]
    y: float
    nu4: float
    n: int
    p: int


class TestRequest(BaseModel):
    __test__ = False

    config: TestConfigModel
    eigenvalues: List[float] = Field(min_length=2)


class TestResponse(BaseModel):
    __test__ = False

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
    verdict: str


class SimulateRequest(SimulateConfig):
    pass


class SimulateResponse(BaseModel):
    eigs: List[float]
    trace: float
    population_trace: Optional[float]
    p: int
    n: int
    seed: int


class HealthResponse(BaseModel):
    status: str
    version: str
    timestamp: str
    extras: Dict[str, str] = {}
