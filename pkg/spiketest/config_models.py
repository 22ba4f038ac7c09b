import json
from pathlib import Path
from typing import List, Literal, Optional, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, model_validator

from spiketest.asymptotics import SpikedModel
from spiketest.constants import DEFAULT_ALPHA_LEVEL, DEFAULT_REPS, DEFAULT_WORKERS, T_MAX
from spiketest.factor_inference import CORRECTED, FactorTestConfig
from spiketest.montecarlo import Scenario
from spiketest.simulation import EntryDistribution, FactorSpec, PopulationSpec
from spiketest.spectral_measure import BulkSpec, DiscreteMeasure

ConfigT = TypeVar("ConfigT", bound=BaseModel)


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class AtomConfig(StrictModel):
    t: float = Field(ge=0)
    w: float = Field(gt=0)


class MeasureConfig(StrictModel):
    atoms: List[AtomConfig] = Field(min_length=1)

    def to_measure(self) -> DiscreteMeasure:
        return DiscreteMeasure(tuple((a.t, a.w) for a in self.atoms))


class DistributionConfig(StrictModel):
    kind: Literal["gaussian", "rademacher", "uniform", "two_point"] = "gaussian"
    a: Optional[float] = None

    def to_distribution(self) -> EntryDistribution:
        return EntryDistribution(self.kind, self.a)


class ModelConfig(StrictModel):
    H: MeasureConfig
    n: int = Field(gt=0)
    p: int = Field(gt=1)
    y: Optional[float] = Field(default=None, gt=0)
    alphas: Optional[List[float]] = None
    U: Optional[List[List[float]]] = None
    lambda_block: Optional[List[List[float]]] = Field(default=None, alias="lambda")
    nu4: float = Field(default=3.0, ge=1)
    gamma_d2: Optional[float] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _one_spike_source(self):
        if (self.alphas is None) == (self.lambda_block is None):
            raise ValueError("give exactly one of 'alphas' or 'lambda'")
        if self.U is not None and self.alphas is None:
            raise ValueError("'U' goes with 'alphas'")
        return self

    def to_model(self) -> SpikedModel:
        bulk = BulkSpec(self.H.to_measure(), self.gamma_d2)
        if self.lambda_block is not None:
            return SpikedModel.from_lambda(self.lambda_block, bulk, self.nu4, self.n, self.p, y=self.y)
        return SpikedModel.from_spikes(self.alphas, bulk, self.nu4, self.n, self.p, eigvecs=self.U, y=self.y)


class TestConfigModel(StrictModel):
    __test__ = False

    m0: int = Field(gt=0)
    c: float
    p: int = Field(gt=1)
    n: int = Field(gt=0)
    alpha_level: float = Field(default=DEFAULT_ALPHA_LEVEL, gt=0, lt=1)
    procedure: Literal["corrected", "uncorrected"] = CORRECTED
    t_max: float = T_MAX

    def to_config(self) -> FactorTestConfig:
        return FactorTestConfig(m0=self.m0, c=self.c, p=self.p, n=self.n,
                                alpha_level=self.alpha_level, t_max=self.t_max)


class SimulateConfig(StrictModel):
    n: int = Field(gt=1)
    seed: int = Field(default=0, ge=0)
    dist: DistributionConfig = DistributionConfig()
    t_list: Optional[List[float]] = None
    sigma2: float = Field(default=1.0, gt=0)
    p: Optional[int] = Field(default=None, gt=1)
    model: Optional[ModelConfig] = None

    @model_validator(mode="after")
    def _one_population(self):
        if (self.model is None) == (self.t_list is None):
            raise ValueError("give exactly one of 'model' or 't_list' (factor model)")
        if self.t_list is not None and self.p is None:
            raise ValueError("factor model needs 'p'")
        return self

    def to_spec(self) -> PopulationSpec:
        if self.model is not None:
            return self.model.to_model()
        return FactorSpec(tuple(self.t_list), self.sigma2, self.p)


class ScenarioConfig(StrictModel):
    p: int = Field(gt=1)
    n: int = Field(gt=1)
    c: float
    t_list: List[float]
    sigma2: float = Field(default=1.0, gt=0)
    dist: DistributionConfig = DistributionConfig()
    m0: Optional[int] = Field(default=None, gt=0)
    alpha_level: float = Field(default=DEFAULT_ALPHA_LEVEL, gt=0, lt=1)
    reps: Optional[int] = Field(default=None, gt=0)
    seed: Optional[int] = Field(default=None, ge=0)
    procedure: Literal["corrected", "uncorrected", "both"] = CORRECTED
    label: str = ""


class TableConfig(StrictModel):
    name: str = ""
    seed: int = Field(default=0, ge=0)
    reps: int = Field(default=DEFAULT_REPS, gt=0)
    workers: int = DEFAULT_WORKERS
    smoke: bool = False
    scenarios: List[ScenarioConfig] = Field(default_factory=list)

    def to_scenarios(self, reps: Optional[int] = None, seed: Optional[int] = None) -> List[Scenario]:
        """Scenario i uses its own seed, else table seed + i; overrides win over both."""
        base = self.seed if seed is None else seed
        out = []
        for i, s in enumerate(self.scenarios):
            master = base + i if (seed is not None or s.seed is None) else s.seed
            out.append(Scenario(
                p=s.p, n=s.n, c=s.c, t_list=tuple(s.t_list), sigma2=s.sigma2,
                dist=s.dist.to_distribution(), m0=s.m0, alpha_level=s.alpha_level,
                reps=reps or s.reps or self.reps, master_seed=master,
                procedure=s.procedure, label=s.label or f"{self.name}#{i}", smoke=self.smoke,
            ))
        return out


class MomentOracleConfig(StrictModel):
    model: ModelConfig
    dist: DistributionConfig = DistributionConfig()
    reps: int = Field(default=DEFAULT_REPS, gt=1)
    seed: int = Field(default=0, ge=0)


def load_config(path, schema: Type[ConfigT]) -> ConfigT:
    return schema.model_validate(json.loads(Path(path).read_text()))
