"""Pydantic request/response models shared by the HTTP service and the CLI."""

from typing import Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class SynthRequest(BaseModel):
    out_dir: str
    classes: int = 60
    dict_per_class: int = 20
    train_per_class: int = 40
    test_per_class: int = 40
    d: int = 256
    noise_sigma: float = 0.1
    scale_jitter: float = 0.2
    distance_jitter: float = 0.5
    template_step: float = 0.45
    seed: int = 0


class SynthResponse(BaseModel):
    dict_path: str
    train_path: str
    test_path: str
    dict_count: int
    train_count: int
    test_count: int
    d: int


class BuildDictRequest(BaseModel):
    features_path: str
    out_path: str
    seed: int = 0
    dict_per_class: int = 20
    train_fraction: float = 0.5
    val_fraction: float = 0.20
    range_min: float = 0.5
    range_max: float = 60.5
    cr: float = 0.5
    lam: float = Field(default=1e-2, alias="lambda")

    model_config = {"populate_by_name": True}


class BuildDictResponse(BaseModel):
    bundle_path: str
    m: int
    n: int
    classes: int
    per_class: int
    grid_rows: int
    grid_cols: int
    block_rows: int
    block_cols: int


class RunRequest(BaseModel):
    config_path: Optional[str] = None
    overrides: list[str] = []


class SummaryRow(BaseModel):
    method: str
    mean: list[float]
    std: list[float]
    runs: int


class RunResponse(BaseModel):
    out_dir: str
    summary: list[SummaryRow]
    failures: list[str]


class SearchLambdaRequest(BaseModel):
    config_path: Optional[str] = None
    overrides: list[str] = []
    mode: str = "cl_csen"


class SearchLambdaResponse(BaseModel):
    best_lambda: float
    trace: list[tuple[float, float]]


class EvalRequest(BaseModel):
    pairs: Optional[list[tuple[float, float]]] = None
    pairs_path: Optional[str] = None
    method: str = "eval"


class EvalResponse(BaseModel):
    method: str
    n: int
    ard: float
    srd: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float


class ConvertRequest(BaseModel):
    src: str
    dst: str
    backbone_tag: Optional[str] = None


class ConvertResponse(BaseModel):
    dst: str
    records: int
    d: int


class PredictRequest(BaseModel):
    bundle_path: str
    model_path: Optional[str] = None  # omit for the CRC baseline
    features: list[list[float]]


class PredictResponse(BaseModel):
    distances: list[float]
