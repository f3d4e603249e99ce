"""HTTP service wrapping the core package, plus the in-process handlers the
CLI reuses. Each handler maps a request model to core calls and a response
model; the FastAPI routes are thin wrappers over the handlers.
"""

import csv
import json
import os

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__
from . import dictionary as dct
from . import network as net
from .data import FeatureDataset, SplitSpec, make_splits, num_classes, read_features, write_features
from .errors import ConfigError, DataError, NumericalError, RbregError
from .experiment import (
    NETWORK_MODES,
    load_config,
    run_experiment,
    search_lambda,
    validation_objective,
)
from .metrics import evaluate
from .schemas import (
    BuildDictRequest,
    BuildDictResponse,
    ConvertRequest,
    ConvertResponse,
    EvalRequest,
    EvalResponse,
    HealthResponse,
    PredictRequest,
    PredictResponse,
    RunRequest,
    RunResponse,
    SearchLambdaRequest,
    SearchLambdaResponse,
    SummaryRow,
    SynthRequest,
    SynthResponse,
)
from .solvers import classify_batch_crc
from .synth import synth_generate


# --- handlers ---------------------------------------------------------------

def handle_synth(req: SynthRequest) -> SynthResponse:
    os.makedirs(req.out_dir, exist_ok=True)
    dict_set, train_set, test_set = synth_generate(
        req.classes, req.dict_per_class, req.train_per_class, req.test_per_class,
        req.d, req.noise_sigma, req.seed,
        scale_jitter=req.scale_jitter, distance_jitter=req.distance_jitter,
        template_step=req.template_step,
    )
    paths = {}
    for name, ds in (("dict", dict_set), ("train", train_set), ("test", test_set)):
        path = os.path.join(req.out_dir, f"{name}.rbf")
        write_features(ds, path)
        paths[name] = path
    return SynthResponse(
        dict_path=paths["dict"], train_path=paths["train"], test_path=paths["test"],
        dict_count=len(dict_set), train_count=len(train_set), test_count=len(test_set),
        d=req.d,
    )


def handle_build_dict(req: BuildDictRequest) -> BuildDictResponse:
    ds = read_features(req.features_path)
    spec = SplitSpec(
        seed=req.seed, dict_per_class=req.dict_per_class,
        train_fraction=req.train_fraction, val_fraction_of_train=req.val_fraction,
        range_min=req.range_min, range_max=req.range_max,
    )
    dict_set, _, _, _ = make_splits(ds, spec)
    classes = num_classes(spec.range_min, spec.range_max, spec.bin_width)
    a, mean = dct.fit_pca(dict_set, cr=req.cr)
    dictionary, dm, layout = dct.build_dictionary(dict_set, a, mean, req.lam, classes)
    dct.save_bundle(req.out_path, dictionary, dm, layout)
    return BuildDictResponse(
        bundle_path=req.out_path,
        m=dictionary.m, n=dictionary.n,
        classes=dictionary.classes, per_class=dictionary.per_class,
        grid_rows=layout.grid_rows, grid_cols=layout.grid_cols,
        block_rows=layout.block_rows, block_cols=layout.block_cols,
    )


def handle_run(req: RunRequest, progress=None) -> RunResponse:
    cfg = load_config(req.config_path, req.overrides)
    rows, failures = run_experiment(cfg, progress=progress)
    return RunResponse(
        out_dir=cfg.out_dir,
        summary=[
            SummaryRow(method=mode, mean=list(map(float, mean)),
                       std=list(map(float, std)), runs=count)
            for mode, mean, std, count in rows
        ],
        failures=[f"run {ri} mode {mode}: {type(exc).__name__}: {exc}"
                  for ri, mode, exc in failures],
    )


def handle_search_lambda(req: SearchLambdaRequest) -> SearchLambdaResponse:
    cfg = load_config(req.config_path, req.overrides)
    objective = validation_objective(cfg, req.mode)
    best, trace = search_lambda(objective)
    return SearchLambdaResponse(best_lambda=best, trace=trace)


def _load_pairs_file(path):
    if path.endswith(".json"):
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        return payload["pairs"] if isinstance(payload, dict) else payload
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if rows and not _is_float(rows[0][0]):
        rows = rows[1:]
    return [(float(r[0]), float(r[1])) for r in rows]


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def handle_eval(req: EvalRequest) -> EvalResponse:
    pairs = req.pairs
    if pairs is None:
        if not req.pairs_path:
            raise ConfigError("provide pairs or pairs_path")
        pairs = _load_pairs_file(req.pairs_path)
    report = evaluate(np.asarray(pairs, dtype=np.float64))
    return EvalResponse(
        method=req.method, n=report.n,
        ard=report.ard, srd=report.srd, rmse=report.rmse, rmse_log=report.rmse_log,
        delta1=report.delta1, delta2=report.delta2, delta3=report.delta3,
    )


def _features_to_csv(ds, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# backbone={ds.backbone_tag}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["source_id", "distance_m"] + [f"f{i}" for i in range(ds.d)])
        feats32 = ds.features.astype(np.float32)
        for i in range(len(ds)):
            row = [ds.source_ids[i], repr(float(ds.distances[i]))]
            row += [f"{v:.9g}" for v in feats32[i]]
            writer.writerow(row)


def _features_from_csv(path, backbone_tag=None):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline()
        tag = ""
        if first.startswith("# backbone="):
            tag = first[len("# backbone="):].strip()
            header = fh.readline()
        else:
            header = first
        ncols = len(header.strip().split(","))
        d = ncols - 2
        reader = csv.reader(fh)
        feats, dists, ids = [], [], []
        for row in reader:
            if not row:
                continue
            ids.append(row[0])
            dists.append(float(row[1]))
            feats.append(np.array(row[2:], dtype=np.float32).astype(np.float64))
    if backbone_tag is not None:
        tag = backbone_tag
    feats = np.array(feats) if feats else np.zeros((0, d))
    return FeatureDataset(feats, np.array(dists), ids, tag)


def handle_convert(req: ConvertRequest) -> ConvertResponse:
    src, dst = req.src, req.dst
    if src.endswith(".csv"):
        ds = _features_from_csv(src, req.backbone_tag)
        write_features(ds, dst)
    else:
        ds = read_features(src)
        _features_to_csv(ds, dst)
    return ConvertResponse(dst=dst, records=len(ds), d=ds.d)


def handle_predict(req: PredictRequest) -> PredictResponse:
    dictionary, dm, layout = dct.load_bundle(req.bundle_path)
    features = np.asarray(req.features, dtype=np.float64)
    if req.model_path:
        model = net.load_model(req.model_path)
        preds = net.predict_batch(model, dictionary, dm, features)
    else:
        _, preds, _ = classify_batch_crc(dictionary, dm, features)
    return PredictResponse(distances=[float(p) for p in preds])


# --- FastAPI app --------------------------------------------------------------

app = FastAPI(title="rbreg", version=__version__)


@app.exception_handler(RbregError)
async def _rbreg_error_handler(request: Request, exc: RbregError):
    if isinstance(exc, ConfigError):
        status = 400
    elif isinstance(exc, DataError):
        status = 422
    else:
        status = 500
    return JSONResponse(
        status_code=status,
        content={"error": type(exc).__name__, "detail": str(exc)},
    )


@app.get("/health", response_model=HealthResponse)
def health():
    return HealthResponse(status="ok", version=__version__)


@app.post("/synth", response_model=SynthResponse)
def synth(req: SynthRequest):
    return handle_synth(req)


@app.post("/dictionary/build", response_model=BuildDictResponse)
def build_dictionary(req: BuildDictRequest):
    return handle_build_dict(req)


@app.post("/run", response_model=RunResponse)
def run(req: RunRequest):
    return handle_run(req)


@app.post("/lambda/search", response_model=SearchLambdaResponse)
def lambda_search(req: SearchLambdaRequest):
    return handle_search_lambda(req)


@app.post("/evaluate", response_model=EvalResponse)
def evaluate_pairs(req: EvalRequest):
    return handle_eval(req)


@app.post("/convert", response_model=ConvertResponse)
def convert(req: ConvertRequest):
    return handle_convert(req)


@app.post("/predict", response_model=PredictResponse)
def predict(req: PredictRequest):
    return handle_predict(req)
