from datetime import datetime
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from backend.app.config import (
    DEFAULT_ALPHA,
    DEFAULT_DELTA,
    DEFAULT_GAMMA,
    DEFAULT_OUTLIER_DELTA_QUANTILE,
    DEFAULT_OUTLIER_SCORE_QUANTILE,
    DEFAULT_SEED,
)
from backend.app.solvers.demo_1d import DEMO_GAMMA, DEMO_SEED

MetricName = Literal["vi", "euclidean", "precomputed"]


# --- Run configuration (CLI) ---
class RunConfig(BaseModel):
    """Every pipeline knob; constraint violations surface as InvalidConfig in the CLI."""

    model_config = ConfigDict(frozen=True)

    metric: MetricName = "vi"
    gamma: float = Field(DEFAULT_GAMMA, gt=0)
    alpha: float = Field(DEFAULT_ALPHA, gt=0, lt=1)
    delta: float = Field(DEFAULT_DELTA, gt=0, lt=1)
    split_first_s: Optional[int] = Field(None, ge=1)
    split_fraction: Optional[float] = Field(None, gt=0, lt=1)
    subsample: Optional[int] = Field(None, ge=1)
    seed: int = DEFAULT_SEED
    threads: Optional[int] = Field(None, ge=1)
    mode_policy: str = "auto"
    chained: bool = False
    outlier_delta_quantile: float = Field(DEFAULT_OUTLIER_DELTA_QUANTILE, gt=0, lt=1)
    outlier_score_quantile: float = Field(DEFAULT_OUTLIER_SCORE_QUANTILE, gt=0, lt=1)
    filter_max_k: Optional[int] = Field(None, ge=1)
    header: bool = False
    thin: int = Field(1, ge=1)
    burn_in: int = Field(0, ge=0)
    input: Optional[str] = None
    output: Optional[str] = None

    @model_validator(mode="after")
    def one_split(self):
        if self.split_first_s is not None and self.split_fraction is not None:
            raise ValueError("give only one of split_first_s and split_fraction")
        return self


# --- Partition endpoints ---
class CanonicalizeInput(BaseModel):
    labels: List[int] = Field(..., min_length=1)


class CanonicalizeResponse(BaseModel):
    labels: List[int]
    k: int
    cluster_sizes: List[int]


class VIInput(BaseModel):
    a: List[int] = Field(..., min_length=1)
    b: List[int] = Field(..., min_length=1)


class VIResponse(BaseModel):
    vi: float
    k_a: int
    k_b: int


# --- Pipeline endpoints ---
class PipelineInput(BaseModel):
    metric: Literal["vi", "euclidean"] = "vi"
    samples: List[List[float]] = Field(..., min_length=2, description="One draw per row")
    split_first_s: Optional[int] = Field(None, ge=1)
    split_fraction: Optional[float] = Field(None, gt=0, lt=1)
    gamma: float = Field(DEFAULT_GAMMA, gt=0)
    subsample: Optional[int] = Field(None, ge=1)
    seed: int = DEFAULT_SEED
    threads: Optional[int] = Field(None, ge=1, le=64)
    filter_max_k: Optional[int] = Field(None, ge=1)


class PointEstimate(BaseModel):
    index: int
    score: float
    parameter: List[float]
    k_clusters: Optional[int] = None


class ScoreResponse(BaseModel):
    n_train: int
    n_calibration: int
    scores: List[float]
    estimate: PointEstimate
    timing: float


class RegionTestInput(PipelineInput):
    candidates: List[List[float]] = Field(..., min_length=1)
    alpha: float = Field(DEFAULT_ALPHA, gt=0, lt=1)
    ball: bool = False
    center: Optional[List[float]] = None


class ReportRecord(BaseModel):
    p_value: float
    threshold_rank: int
    threshold_score: Optional[float]
    in_region: bool
    score: float
    n_calibration: int
    degenerate: bool
    method: str
    distance: Optional[float] = None
    radius: Optional[float] = None
    kde_in_region: Optional[bool] = None


class RegionTestResponse(BaseModel):
    reports: List[ReportRecord]
    summary: Dict[str, Any]


class DPCInput(PipelineInput):
    mode_policy: str = "auto"
    chained: bool = False
    outlier_delta_quantile: float = Field(DEFAULT_OUTLIER_DELTA_QUANTILE, gt=0, lt=1)
    outlier_score_quantile: float = Field(DEFAULT_OUTLIER_SCORE_QUANTILE, gt=0, lt=1)


class DPCResponse(BaseModel):
    modes: List[int]
    weights: List[float]
    records: List[Dict[str, Any]]


# --- Conformal certificate ---
class CertificateInput(BaseModel):
    scores: List[float] = Field(..., min_length=1)
    alpha: float = Field(DEFAULT_ALPHA, gt=0, lt=1)
    delta: float = Field(DEFAULT_DELTA, gt=0, lt=1)


class CertificateResponse(BaseModel):
    alpha: float
    N: int
    delta: float
    threshold_rank: int
    threshold_score: float
    term_rank: float
    term_jump: float
    term_dkw: float
    total_bound: float
    continuous_bound: float
    coverage_low: float
    coverage_high: float


# --- Thinning ---
class MixingInput(BaseModel):
    kind: Literal["geometric", "tabulated"]
    C: Optional[float] = None
    rho: Optional[float] = None
    eps: Optional[List[float]] = None
    N: int = Field(..., ge=1)


class ThinningBoundInput(MixingInput):
    M: int = Field(..., ge=1)


class ThinningBoundResponse(BaseModel):
    tv_bound: float


class MinSpacingInput(MixingInput):
    budget: float = Field(..., gt=0)


class MinSpacingResponse(BaseModel):
    M: int
    tv_bound: float


# --- Demo ---
class DemoInput(BaseModel):
    seed: int = DEMO_SEED
    gamma: float = Field(DEMO_GAMMA, gt=0)
    alpha: float = Field(DEFAULT_ALPHA, gt=0, lt=1)
    size: int = Field(2000, ge=4, le=20000)


# --- History Schemas ---
class RunResponse(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    id: int
    command: str
    parameters: str  # JSON string
    summary: str  # JSON string
    timestamp: datetime
