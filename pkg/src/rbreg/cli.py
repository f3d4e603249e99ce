"""Command-line client: each subcommand builds the same request models the
HTTP service accepts and dispatches to the shared in-process handlers.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

import sys

import click

from . import __version__
from .errors import ConfigError, DataError, NumericalError, RbregError
from .experiment import load_config, run_experiment
from .metrics import CSV_HEADER
from .schemas import (
    BuildDictRequest,
    ConvertRequest,
    EvalRequest,
    PredictRequest,
    SearchLambdaRequest,
    SynthRequest,
)
from .service import (
    handle_build_dict,
    handle_convert,
    handle_eval,
    handle_predict,
    handle_search_lambda,
    handle_synth,
)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _exit_code(exc):
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, DataError):
        return EXIT_DATA
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return 1


def _run_guarded(fn):
    try:
        return fn()
    except RbregError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(_exit_code(exc))
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_DATA)


@click.group()
@click.version_option(version=__version__)
def main():
    """Representation-based regression experiment harness."""


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory.")
@click.option("--classes", default=60, show_default=True)
@click.option("--dict-per-class", default=20, show_default=True)
@click.option("--train-per-class", default=40, show_default=True)
@click.option("--test-per-class", default=40, show_default=True)
@click.option("-d", "--dim", default=256, show_default=True, help="Feature dimension.")
@click.option("--noise-sigma", default=0.1, show_default=True)
@click.option("--scale-jitter", default=0.2, show_default=True)
@click.option("--distance-jitter", default=0.5, show_default=True)
@click.option("--template-step", default=0.45, show_default=True,
              help="Angular step between neighboring class templates.")
@click.option("--seed", default=0, show_default=True)
def synth(out_dir, classes, dict_per_class, train_per_class, test_per_class,
          dim, noise_sigma, scale_jitter, distance_jitter, template_step, seed):
    """Generate synthetic dict/train/test feature files."""
    def go():
        resp = handle_synth(SynthRequest(
            out_dir=out_dir, classes=classes, dict_per_class=dict_per_class,
            train_per_class=train_per_class, test_per_class=test_per_class,
            d=dim, noise_sigma=noise_sigma, scale_jitter=scale_jitter,
            distance_jitter=distance_jitter, template_step=template_step,
            seed=seed,
        ))
        click.echo(f"dict:  {resp.dict_path} ({resp.dict_count} records, d={resp.d})")
        click.echo(f"train: {resp.train_path} ({resp.train_count} records)")
        click.echo(f"test:  {resp.test_path} ({resp.test_count} records)")
    _run_guarded(go)


@main.command("build-dict")
@click.option("--features", "features_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--dict-per-class", default=20, show_default=True)
@click.option("--range-min", default=0.5, show_default=True)
@click.option("--range-max", default=60.5, show_default=True)
@click.option("--cr", default=0.5, show_default=True, help="Compression ratio m/d.")
@click.option("--lam", "--lambda", default=1e-2, show_default=True,
              help="Denoiser regularization.")
def build_dict(features_path, out_path, seed, dict_per_class, range_min,
               range_max, cr, lam):
    """Build and persist a dictionary/denoiser/layout bundle."""
    def go():
        resp = handle_build_dict(BuildDictRequest(
            features_path=features_path, out_path=out_path, seed=seed,
            dict_per_class=dict_per_class, range_min=range_min,
            range_max=range_max, cr=cr, lam=lam,
        ))
        click.echo(f"bundle: {resp.bundle_path}")
        click.echo(f"m={resp.m} n={resp.n} classes={resp.classes} per_class={resp.per_class}")
        click.echo(f"grid {resp.grid_rows}x{resp.grid_cols}, "
                   f"block {resp.block_rows}x{resp.block_cols}")
    _run_guarded(go)


@main.command()
@click.option("-c", "--config", "config_path", type=click.Path(), default=None)
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override a config key.")
@click.option("-o", "--out", default=None, help="Output directory (overrides config).")
@click.option("--runs", default=None, type=int, help="Number of runs (overrides config).")
@click.option("-q", "--quiet", is_flag=True, help="Suppress progress lines.")
def run(config_path, overrides, out, runs, quiet):
    """Run every configured estimator over seeded splits and summarize."""
    overrides = list(overrides)
    if out is not None:
        overrides.append(f"out={out}")
    if runs is not None:
        overrides.append(f"runs={runs}")

    def go():
        cfg = load_config(config_path, overrides)
        progress = None if quiet else (lambda msg: click.echo(msg, err=True))
        rows, failures = run_experiment(cfg, progress=progress)
        click.echo(CSV_HEADER.replace("method", "method(mean)", 1))
        for mode, mean, std, count in rows:
            cells = ",".join(f"{m:.4f}±{s:.4f}" for m, s in zip(mean, std))
            click.echo(f"{mode},{cells}  [{count} runs]")
        click.echo(f"summary: {cfg.out_dir}/summary.csv")
        if failures:
            for ri, mode, exc in failures:
                click.echo(f"FAILED run {ri} mode {mode}: {type(exc).__name__}: {exc}",
                           err=True)
            codes = [_exit_code(exc) for _, _, exc in failures]
            sys.exit(EXIT_NUMERICAL if EXIT_NUMERICAL in codes else max(codes))
    _run_guarded(go)


@main.command("search-lambda")
@click.option("-c", "--config", "config_path", type=click.Path(), default=None)
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE")
@click.option("--mode", default="cl_csen", show_default=True)
def search_lambda_cmd(config_path, overrides, mode):
    """Search the denoiser lambda on the validation split."""
    def go():
        resp = handle_search_lambda(SearchLambdaRequest(
            config_path=config_path, overrides=list(overrides), mode=mode,
        ))
        for lam, val in resp.trace:
            click.echo(f"lambda={lam:.3e} objective={val:.6f}")
        click.echo(f"best lambda: {resp.best_lambda:.6e}")
    _run_guarded(go)


@main.command("eval")
@click.argument("pairs_path", type=click.Path())
@click.option("--method", default="eval", show_default=True, help="Label for the CSV row.")
def eval_cmd(pairs_path, method):
    """Evaluate a (d, d_hat) pairs file (CSV or pairs JSON)."""
    def go():
        resp = handle_eval(EvalRequest(pairs_path=pairs_path, method=method))
        click.echo(CSV_HEADER)
        click.echo(",".join([resp.method] + [
            repr(v) for v in (resp.ard, resp.srd, resp.rmse, resp.rmse_log,
                              resp.delta1, resp.delta2, resp.delta3)
        ]))
    _run_guarded(go)


@main.command()
@click.argument("src", type=click.Path())
@click.argument("dst", type=click.Path())
@click.option("--backbone-tag", default=None, help="Tag to store when converting CSV to RBF1.")
def convert(src, dst, backbone_tag):
    """Convert between RBF1 feature files and CSV (direction by extension)."""
    def go():
        resp = handle_convert(ConvertRequest(src=src, dst=dst, backbone_tag=backbone_tag))
        click.echo(f"wrote {resp.dst} ({resp.records} records, d={resp.d})")
    _run_guarded(go)


@main.command()
@click.option("--bundle", "bundle_path", required=True, type=click.Path())
@click.option("--model", "model_path", default=None, type=click.Path(),
              help="Trained model file; omit for the closed-form baseline.")
@click.option("--features", "features_path", required=True, type=click.Path(),
              help="RBF1 file of query features.")
def predict(bundle_path, model_path, features_path):
    """Predict distances for every record of a feature file."""
    def go():
        from .data import read_features
        ds = read_features(features_path)
        resp = handle_predict(PredictRequest(
            bundle_path=bundle_path, model_path=model_path,
            features=[row.tolist() for row in ds.features],
        ))
        for sid, dist in zip(ds.source_ids, resp.distances):
            click.echo(f"{sid},{dist!r}")
    _run_guarded(go)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    uvicorn.run("rbreg.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
