"""Experiment orchestration: configuration, dictionary building, multi-run
training/evaluation of baselines and networks, lambda search, and report
emission.

Configurations are flat dotted keys (e.g. ``train.epochs = 100``) read from
UTF-8 text files; explicit overrides win over file values. Every output
payload is deterministic for a fixed configuration (no timestamps), so
re-running a config reproduces each file byte for byte.
"""

import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import dictionary as dct
from . import network as net
from .data import SplitSpec, class_midpoint, make_splits, num_classes, quantize_distance, read_features
from .errors import ConfigError, DataError, NumericalError, RbregError
from .metrics import evaluate, write_report_csv, write_report_json
from .solvers import Method, SolverConfig, classify_batch_crc, classify_four_step
from .synth import synth_generate

BASELINE_MODES = ("crc_light", "crc", "fista", "ista", "omp", "admm")
NETWORK_MODES = ("csen", "cl_csen", "csen_1d", "cl_csen_1d")
ALL_MODES = BASELINE_MODES + NETWORK_MODES

COARSE_LAMBDA_GRID = tuple(10.0 ** k for k in range(-13, 4))


@dataclass
class SynthSpec:
    classes: int = 60
    dict_per_class: int = 20
    train_per_class: int = 40
    test_per_class: int = 40
    d: int = 256
    noise_sigma: float = 0.1
    scale_jitter: float = 0.2
    distance_jitter: float = 0.5
    template_step: float = 0.45


@dataclass
class ExperimentConfig:
    data_path: str = ""                 # RBF1 file; empty -> synthetic
    synth: SynthSpec = field(default_factory=SynthSpec)
    split: SplitSpec = field(default_factory=SplitSpec)
    cr: float = dct.DEFAULT_CR
    lam: float = dct.DEFAULT_LAMBDA
    solver: SolverConfig = field(default_factory=SolverConfig)
    train: net.TrainConfig = field(default_factory=net.TrainConfig)
    modes: tuple = ("crc_light", "csen", "cl_csen")
    runs: int = 5
    out_dir: str = "out"

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        for mode in self.modes:
            if mode not in ALL_MODES:
                raise ConfigError(f"unknown mode {mode!r}; choose from {ALL_MODES}")


# --- dotted-key config files ----------------------------------------------

_KEY_TYPES = {
    "data.path": str,
    "synth.classes": int, "synth.dict_per_class": int,
    "synth.train_per_class": int, "synth.test_per_class": int,
    "synth.d": int, "synth.noise_sigma": float,
    "synth.scale_jitter": float, "synth.distance_jitter": float,
    "synth.template_step": float,
    "split.seed": int, "split.dict_per_class": int,
    "split.train_fraction": float, "split.val_fraction": float,
    "split.range_min": float, "split.range_max": float,
    "split.with_replacement": bool,
    "dict.cr": float, "dict.lambda": float,
    "solver.method": str, "solver.lambda": float, "solver.max_iter": int,
    "solver.tol": float, "solver.omp_k": int, "solver.admm_rho": float,
    "train.epochs": int, "train.batch_size": int, "train.lr": float,
    "train.beta1": float, "train.beta2": float, "train.eps": float,
    "train.seed": int, "train.label_quantized": bool,
    "modes": str, "runs": int, "out": str,
}


def parse_config_text(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    return values


def _coerce(key, raw):
    if key not in _KEY_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    typ = _KEY_TYPES[key]
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key}: bad value {raw!r}") from exc


def build_config(values):
    """Typed ExperimentConfig from a dict of raw dotted-key strings."""
    v = {k: _coerce(k, raw) for k, raw in values.items()}

    def take(key, default):
        return v.pop(key, default)

    synth = SynthSpec(
        classes=take("synth.classes", 60),
        dict_per_class=take("synth.dict_per_class", 20),
        train_per_class=take("synth.train_per_class", 40),
        test_per_class=take("synth.test_per_class", 40),
        d=take("synth.d", 256),
        noise_sigma=take("synth.noise_sigma", 0.1),
        scale_jitter=take("synth.scale_jitter", 0.2),
        distance_jitter=take("synth.distance_jitter", 0.5),
        template_step=take("synth.template_step", 0.45),
    )
    split = SplitSpec(
        seed=take("split.seed", 0),
        dict_per_class=take("split.dict_per_class", 20),
        train_fraction=take("split.train_fraction", 0.5),
        val_fraction_of_train=take("split.val_fraction", 0.20),
        range_min=take("split.range_min", 0.5),
        range_max=take("split.range_max", 60.5),
        with_replacement=take("split.with_replacement", False),
    )
    try:
        solver = SolverConfig(
            method=Method(take("solver.method", "crc")),
            lam=take("solver.lambda", 1e-2),
            max_iter=take("solver.max_iter", 1000),
            tol=take("solver.tol", 1e-6),
            omp_k=take("solver.omp_k", 20),
            admm_rho=take("solver.admm_rho", 1.0),
        )
        train_cfg = net.TrainConfig(
            epochs=take("train.epochs", 100),
            batch_size=take("train.batch_size", 16),
            lr=take("train.lr", 1e-3),
            beta1=take("train.beta1", 0.9),
            beta2=take("train.beta2", 0.999),
            eps=take("train.eps", 1e-8),
            seed=take("train.seed", 0),
            label_quantized=take("train.label_quantized", False),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    modes = tuple(m.strip() for m in take("modes", "crc_light,csen,cl_csen").split(",") if m.strip())
    cfg = ExperimentConfig(
        data_path=take("data.path", ""),
        synth=synth,
        split=split,
        cr=take("dict.cr", dct.DEFAULT_CR),
        lam=take("dict.lambda", dct.DEFAULT_LAMBDA),
        solver=solver,
        train=train_cfg,
        modes=modes,
        runs=take("runs", 5),
        out_dir=take("out", "out"),
    )
    return cfg


def load_config(path=None, overrides=()):
    values = {}
    if path:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                values.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, _, val = item.partition("=")
        values[key.strip()] = val.strip()
    return build_config(values)


def resolved_config_text(values):
    return "".join(f"{k} = {values[k]}\n" for k in sorted(values))


# --- per-run data assembly --------------------------------------------------


@dataclass
class RunData:
    dict_set: object
    train_set: object
    val_set: object
    test_set: object
    classes: int
    range_min: float
    range_max: float
    bin_width: float


def assemble_run_data(cfg, run_index, dataset=None):
    """dict/train/val/test sets for one run, from a file or the generator."""
    seed = cfg.split.seed + run_index
    if cfg.data_path:
        if dataset is None:
            dataset = read_features(cfg.data_path)
        spec = replace(cfg.split, seed=seed)
        dict_set, train_set, val_set, test_set = make_splits(dataset, spec)
        classes = num_classes(spec.range_min, spec.range_max, spec.bin_width)
        return RunData(dict_set, train_set, val_set, test_set, classes,
                       spec.range_min, spec.range_max, spec.bin_width)

    s = cfg.synth
    dict_set, train_pool, test_set = synth_generate(
        s.classes, s.dict_per_class, s.train_per_class, s.test_per_class,
        s.d, s.noise_sigma, seed,
        scale_jitter=s.scale_jitter, distance_jitter=s.distance_jitter,
        template_step=s.template_step,
    )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(train_pool))
    n_val = int(round(cfg.split.val_fraction_of_train * len(order)))
    val_set = train_pool.subset(order[len(order) - n_val:])
    train_set = train_pool.subset(order[:len(order) - n_val])
    range_max = 0.5 + s.classes
    return RunData(dict_set, train_set, val_set, test_set, s.classes,
                   0.5, range_max, 1.0)


def build_run_dictionary(run_data, cr, lam, m=None):
    a, mean = dct.fit_pca(run_data.dict_set, m=m, cr=cr)
    return dct.build_dictionary(run_data.dict_set, a, mean, lam, run_data.classes)


def _eval_ground_truth(distances, run_data, quantized):
    if not quantized:
        return distances
    return np.array([
        class_midpoint(
            quantize_distance(t, run_data.range_min, run_data.range_max,
                              run_data.bin_width),
            run_data.range_min, run_data.bin_width)
        for t in distances
    ])


def run_one_mode(mode, run_data, bundle, cfg, run_seed, out_dir=None):
    """Train/solve one estimator and evaluate it on the run's test split.

    Returns (EvalReport, artifacts dict). bundle is the (Dictionary,
    DenoiserMap, GridLayout) built from the dictionary split.
    """
    dictionary, dm, layout = bundle
    test = run_data.test_set
    truth = _eval_ground_truth(test.distances, run_data, cfg.train.label_quantized)
    artifacts = {}

    if mode in NETWORK_MODES:
        model = net.build_model(mode, dictionary, dm, layout, seed=run_seed)
        net.prepare_for_training(model)
        trained, history = net.train(
            model, dictionary, dm, run_data.train_set, run_data.val_set,
            replace(cfg.train, seed=run_seed),
            range_min=run_data.range_min, range_max=run_data.range_max,
            bin_width=run_data.bin_width,
        )
        preds = net.predict_batch(trained, dictionary, dm, test.features)
        if out_dir is not None:
            model_path = os.path.join(out_dir, f"{mode}.rbm")
            net.save_model(trained, model_path)
            net.write_history(history, os.path.join(out_dir, f"{mode}.history.csv"))
            artifacts["model"] = model_path
    elif mode == "crc_light":
        _, preds, _ = classify_batch_crc(
            dictionary, dm, test.features,
            range_min=run_data.range_min, bin_width=run_data.bin_width)
    elif mode == "crc":
        big_dict, big_dm = dct.build_crc_dictionary(
            [run_data.dict_set, run_data.train_set, run_data.val_set],
            dictionary.compression, dictionary.feature_mean, cfg.lam,
            run_data.range_min, run_data.range_max, run_data.bin_width)
        _, preds, _ = classify_batch_crc(
            big_dict, big_dm, test.features,
            range_min=run_data.range_min, bin_width=run_data.bin_width)
    else:
        big_dict, big_dm = dct.build_crc_dictionary(
            [run_data.dict_set, run_data.train_set, run_data.val_set],
            dictionary.compression, dictionary.feature_mean, cfg.lam,
            run_data.range_min, run_data.range_max, run_data.bin_width)
        solver_cfg = replace(cfg.solver, method=Method(mode))
        preds = np.array([
            classify_four_step(
                big_dict, test.features[i], solver_cfg, dm=None,
                range_min=run_data.range_min, bin_width=run_data.bin_width,
            ).predicted_distance
            for i in range(len(test))
        ])

    report = evaluate(np.column_stack([truth, preds]))
    if out_dir is not None:
        write_report_csv(report, mode, os.path.join(out_dir, f"{mode}.report.csv"))
        write_report_json(report, mode, os.path.join(out_dir, f"{mode}.pairs.json"))
    return report, artifacts


def summarize(reports_by_mode, runs):
    """Rows of per-mode mean/std over runs, in report column order."""
    rows = []
    for mode, reports in reports_by_mode.items():
        stack = np.array([r.metrics_tuple() for r in reports])
        mean = stack.mean(axis=0)
        std = stack.std(axis=0, ddof=1) if len(reports) > 1 else np.zeros(stack.shape[1])
        rows.append((mode, mean, std, len(reports)))
    return rows


def write_summary_csv(rows, path):
    cols = ["ARD", "SRD", "RMSE", "RMSE_log", "delta1", "delta2", "delta3"]
    with open(path, "w", encoding="utf-8") as fh:
        header = ["method"]
        for c in cols:
            header += [f"{c}_mean", f"{c}_std"]
        header.append("runs")
        fh.write(",".join(header) + "\n")
        for mode, mean, std, count in rows:
            cells = [mode]
            for i in range(len(cols)):
                cells += [repr(float(mean[i])), repr(float(std[i]))]
            cells.append(str(count))
            fh.write(",".join(cells) + "\n")


def run_experiment(cfg, progress=None):
    """Execute every (mode, run) cell of the configuration.

    Per-run artifacts land in out/run_###/; a mean/std summary over the
    successful runs lands in out/summary.csv. Failed cells are recorded and
    the remaining cells continue.

    Returns (summary rows, failures) where failures is a list of
    (run_index, mode, exception).
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    dataset = read_features(cfg.data_path) if cfg.data_path else None
    reports = {mode: [] for mode in cfg.modes}
    failures = []
    for run_index in range(cfg.runs):
        run_dir = os.path.join(cfg.out_dir, f"run_{run_index:03d}")
        os.makedirs(run_dir, exist_ok=True)
        run_seed = cfg.train.seed + run_index
        try:
            run_data = assemble_run_data(cfg, run_index, dataset)
            bundle = build_run_dictionary(run_data, cfg.cr, cfg.lam)
            dct.save_bundle(os.path.join(run_dir, "dictionary.rbd"), *bundle)
        except RbregError as exc:
            for mode in cfg.modes:
                failures.append((run_index, mode, exc))
            continue
        for mode in cfg.modes:
            if progress:
                progress(f"run {run_index} mode {mode}")
            try:
                report, _ = run_one_mode(mode, run_data, bundle, cfg,
                                         run_seed, out_dir=run_dir)
                reports[mode].append(report)
            except RbregError as exc:
                failures.append((run_index, mode, exc))

    rows = summarize({m: r for m, r in reports.items() if r}, cfg.runs)
    write_summary_csv(rows, os.path.join(cfg.out_dir, "summary.csv"))
    if failures:
        with open(os.path.join(cfg.out_dir, "failures.txt"), "w", encoding="utf-8") as fh:
            for run_index, mode, exc in failures:
                fh.write(f"run {run_index} mode {mode}: {type(exc).__name__}: {exc}\n")
    return rows, failures


# --- lambda search ----------------------------------------------------------


def search_lambda(objective, coarse_grid=COARSE_LAMBDA_GRID):
    """Coarse log-scale sweep followed by the fine candidates
    {best/2, best, 2 best}; ties resolve to the smallest lambda.

    Returns (best_lambda, trace) with trace the evaluated (lambda, value)
    pairs in evaluation order.
    """
    trace = []
    best_lam, best_val = None, np.inf
    for lam in coarse_grid:
        val = float(objective(lam))
        trace.append((lam, val))
        if val < best_val or (val == best_val and best_lam is not None and lam < best_lam):
            best_lam, best_val = lam, val
    for lam in (best_lam / 2.0, 2.0 * best_lam):
        val = float(objective(lam))
        trace.append((lam, val))
        if val < best_val or (val == best_val and lam < best_lam):
            best_lam, best_val = lam, val
    return best_lam, trace


def validation_objective(cfg, mode):
    """Objective(lambda) for the search: validation smooth-l1 loss for
    network modes, validation RMSE for baselines. Uses run 0's splits."""
    run_data = assemble_run_data(cfg, 0)

    def objective(lam):
        bundle = build_run_dictionary(run_data, cfg.cr, lam)
        dictionary, dm, layout = bundle
        if mode in NETWORK_MODES:
            model = net.build_model(mode, dictionary, dm, layout, seed=cfg.train.seed)
            net.prepare_for_training(model)
            trained, history = net.train(
                model, dictionary, dm, run_data.train_set, run_data.val_set,
                cfg.train, range_min=run_data.range_min,
                range_max=run_data.range_max, bin_width=run_data.bin_width)
            return min(h["val_loss"] for h in history)
        _, preds, _ = classify_batch_crc(
            dictionary, dm, run_data.val_set.features,
            range_min=run_data.range_min, bin_width=run_data.bin_width)
        truth = _eval_ground_truth(run_data.val_set.distances, run_data,
                                   cfg.train.label_quantized)
        return evaluate(np.column_stack([truth, preds])).rmse

    return objective
