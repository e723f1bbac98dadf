"""Command-line entry points.

Every command reads an optional JSON config and applies flag overrides on
top; ``--seed`` is available everywhere randomness is involved.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import sys
from pathlib import Path

import click

from .ensemble import (
    GridDomain,
    LinearMixKernel,
    SquaredExponentialKernel,
    WhiteNoiseKernel,
    generate_synthetic,
    load_ensemble,
    save_ensemble,
)
from .measures import CorrelationMeasure, ground_truth_field, save_field_grid
from .model import ModelSpec, load_model, save_model
from .service import (
    Registry,
    benchmark,
    compare_to_ground_truth,
    create_app,
    reconstruct_field,
)
from .training import TrainingConfig, sweep, train, write_sweep_csv

log = logging.getLogger(__name__)


def _parse_triple(value: str, cast=float):
    parts = [cast(v) for v in value.split(",")]
    if len(parts) != 3:
        raise click.BadParameter(f"expected three comma-separated values: {value}")
    return tuple(parts)


def _load_json(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _build_training_config(cfg: dict, **overrides) -> TrainingConfig:
    merged = dict(cfg)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    measure = CorrelationMeasure(merged.pop("measure", "pearson"),
                                 merged.pop("ksg_k", 3))
    allowed = {f.name for f in dataclasses.fields(TrainingConfig)}
    unknown = set(merged) - allowed
    if unknown:
        raise click.BadParameter(f"unknown training config keys: {sorted(unknown)}")
    return TrainingConfig(measure=measure, **merged)


def _build_model_spec(cfg: dict, measure_kind: str, var_mu: str, var_nu: str,
                      **overrides) -> ModelSpec:
    merged = dict(cfg)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    merged.update(measure_kind=measure_kind, var_mu=var_mu, var_nu=var_nu)
    allowed = {f.name for f in dataclasses.fields(ModelSpec)}
    unknown = set(merged) - allowed
    if unknown:
        raise click.BadParameter(f"unknown model config keys: {sorted(unknown)}")
    return ModelSpec(**merged)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable info logging.")
def main(verbose):
    """Neural dependence fields: train, reconstruct, serve."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command("gen-synthetic")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--dims", default="16,16,8", help="Grid nodes nx,ny,nz.")
@click.option("--members", default=100, show_default=True)
@click.option("--variables", default="v", help="Comma-separated names.")
@click.option("--kernel", default="squared_exponential", show_default=True,
              type=click.Choice(["white", "squared_exponential", "linear_mix"]))
@click.option("--length-scale", default=0.5, show_default=True)
@click.option("--mix-weight", default=0.8, show_default=True)
@click.option("--seed", default=0, show_default=True)
def gen_synthetic(out, dims, members, variables, kernel, length_scale,
                  mix_weight, seed):
    """Write a synthetic Gaussian ensemble as NDFE."""
    nx, ny, nz = _parse_triple(dims, int)
    names = [v.strip() for v in variables.split(",")]
    if kernel == "white":
        k = WhiteNoiseKernel()
    elif kernel == "squared_exponential":
        k = SquaredExponentialKernel(length_scale)
    else:
        k = LinearMixKernel(mix_weight,
                            SquaredExponentialKernel(length_scale))
    field = generate_synthetic(GridDomain(nx, ny, nz), members, names, k, seed)
    save_ensemble(field, out)
    click.echo(f"wrote {out}: {nx}x{ny}x{nz}, {members} members, "
               f"variables {names}")


@main.command("ground-truth")
@click.option("--ensemble", "ensemble_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--measure", default="pearson",
              type=click.Choice(["pearson", "ksg_mi"]), show_default=True)
@click.option("--k", default=3, show_default=True, help="KSG neighbor count.")
@click.option("--var-mu", default=None)
@click.option("--var-nu", default=None)
@click.option("--ref", default="0,0,0", show_default=True)
@click.option("--dims", default=None, help="Output grid X,Y,Z; defaults to "
                                           "the ensemble resolution.")
@click.option("--workers", default=1, show_default=True)
def ground_truth(ensemble_path, out, measure, k, var_mu, var_nu, ref, dims,
                 workers):
    """Compute a dependence field directly from the ensemble."""
    field = load_ensemble(ensemble_path)
    var_mu = var_mu or field.variables[0]
    var_nu = var_nu or var_mu
    out_dims = (_parse_triple(dims, int) if dims
                else (field.domain.nx, field.domain.ny, field.domain.nz))
    grid = ground_truth_field(field, CorrelationMeasure(measure, k), var_mu,
                              var_nu, _parse_triple(ref), out_dims,
                              workers=workers)
    save_field_grid(grid, out)
    click.echo(f"wrote {out}: dims {out_dims}")


@main.command("train")
@click.option("--ensemble", "ensemble_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="JSON with 'training' and 'model' sections.")
@click.option("--history", "history_path", type=click.Path(dir_okay=False))
@click.option("--measure", default=None,
              type=click.Choice(["pearson", "ksg_mi"]))
@click.option("--k", "ksg_k", default=None, type=int)
@click.option("--var-mu", default=None)
@click.option("--var-nu", default=None)
@click.option("--epochs", default=None, type=int)
@click.option("--samples-per-epoch", default=None, type=int)
@click.option("--validation-samples", default=None, type=int)
@click.option("--batch-size", default=None, type=int)
@click.option("--lr", default=None, type=float)
@click.option("--loss", default=None, type=click.Choice(["l1", "l2"]))
@click.option("--seed", default=None, type=int)
@click.option("--layers", default=None, type=int,
              help="Encoder and decoder layer count.")
@click.option("--channels", default=None, type=int)
@click.option("--table-size", "log2_table_size", default=None, type=int)
@click.option("--fourier", "fourier_octaves", default=None, type=int)
@click.option("--merge", default=None,
              type=click.Choice(["multiply", "concat", "add", "absdiff"]))
def train_command(ensemble_path, out, config_path, history_path, measure,
                  ksg_k, var_mu, var_nu, epochs, samples_per_epoch,
                  validation_samples, batch_size, lr, loss, seed, layers,
                  channels, log2_table_size, fourier_octaves, merge):
    """Train an NDF and write the NDFM checkpoint."""
    field = load_ensemble(ensemble_path)
    cfg = _load_json(config_path)
    training_cfg = dict(cfg.get("training", {}))
    if measure:
        training_cfg["measure"] = measure
    if ksg_k is not None:
        training_cfg["ksg_k"] = ksg_k
    training_cfg.setdefault("var_mu", var_mu or field.variables[0])
    training_cfg.setdefault("var_nu", var_nu or training_cfg["var_mu"])
    if var_mu:
        training_cfg["var_mu"] = var_mu
    if var_nu:
        training_cfg["var_nu"] = var_nu
    config = _build_training_config(
        training_cfg, epochs=epochs, samples_per_epoch=samples_per_epoch,
        validation_samples=validation_samples, batch_size=batch_size, lr=lr,
        loss=loss, seed=seed)
    model_cfg = dict(cfg.get("model", {}))
    if layers is not None:
        model_cfg["encoder_layers"] = layers
        model_cfg["decoder_layers"] = layers
    spec = _build_model_spec(
        model_cfg, config.measure.kind, config.var_mu, config.var_nu,
        channels=channels, log2_table_size=log2_table_size,
        fourier_octaves=fourier_octaves, merge=merge)
    artifact = train(field, spec, config)
    save_model(artifact.model, out)
    best = artifact.best
    click.echo(f"wrote {out}: best epoch {best.epoch} "
               f"val_loss {best.val_loss:.6f} psnr {best.psnr_db:.2f} dB "
               f"({artifact.wall_clock_seconds:.1f}s)")
    if history_path:
        with open(history_path, "w") as fh:
            fh.write("epoch,train_loss,val_loss,psnr_db,lr\n")
            for h in artifact.history:
                fh.write(f"{h.epoch},{h.train_loss:.8f},{h.val_loss:.8f},"
                         f"{h.psnr_db:.4f},{h.lr:.3e}\n")


@main.command("sweep")
@click.option("--ensemble", "ensemble_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--table-sizes", default="10,12,14,16", show_default=True)
@click.option("--mlp", "mlp_shapes", default="2x16", show_default=True,
              help="Comma-separated layersxchannels cells, e.g. 2x16,4x32.")
@click.option("--epochs", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
def sweep_command(ensemble_path, out, config_path, table_sizes, mlp_shapes,
                  epochs, seed):
    """Hash-table-size / MLP-shape sweep; writes a CSV table."""
    field = load_ensemble(ensemble_path)
    cfg = _load_json(config_path)
    training_cfg = dict(cfg.get("training", {}))
    training_cfg.setdefault("samples_per_epoch", 100_000)
    training_cfg.setdefault("validation_samples", 100_000)
    training_cfg.setdefault("var_mu", field.variables[0])
    training_cfg.setdefault("var_nu", training_cfg["var_mu"])
    config = _build_training_config(training_cfg, epochs=epochs, seed=seed)
    spec = _build_model_spec(dict(cfg.get("model", {})), config.measure.kind,
                             config.var_mu, config.var_nu)
    sizes = [int(t) for t in table_sizes.split(",")]
    shapes = []
    for cell in mlp_shapes.split(","):
        layers, channels = cell.lower().split("x")
        shapes.append((int(layers), int(channels)))
    cells = sweep(field, spec, sizes, shapes, config)
    write_sweep_csv(cells, out)
    click.echo(f"wrote {out}: {len(cells)} cells")


@main.command("eval")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--ensemble", "ensemble_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--ref", default="0,0,0", show_default=True)
@click.option("--dims", default=None)
@click.option("--k", default=3, show_default=True)
@click.option("--workers", default=1, show_default=True)
def eval_command(model_path, ensemble_path, ref, dims, k, workers):
    """Compare a model against ground truth; prints JSON metrics."""
    model = load_model(model_path)
    field = load_ensemble(ensemble_path)
    out_dims = (_parse_triple(dims, int) if dims
                else (field.domain.nx, field.domain.ny, field.domain.nz))
    measure = CorrelationMeasure(model.spec.measure_kind, k)
    result = compare_to_ground_truth(model, field, measure,
                                     _parse_triple(ref), out_dims,
                                     workers=workers)
    click.echo(json.dumps({"psnr_db": result.psnr_db,
                           "max_abs_err": result.max_abs_err}))


@main.command("bench")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--ensemble", "ensemble_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--ref", default="0,0,0", show_default=True)
@click.option("--dims", default="64,64,64", show_default=True)
@click.option("--repetitions", default=3, show_default=True)
@click.option("--mi-points", default=1024, show_default=True,
              help="Grid nodes used to time the MI estimator.")
def bench_command(model_path, ensemble_path, out, ref, dims, repetitions,
                  mi_points):
    """Time NDF reconstruction against the direct estimators."""
    model = load_model(model_path)
    field = load_ensemble(ensemble_path)
    report = benchmark(model, field, _parse_triple(ref),
                       _parse_triple(dims, int), repetitions,
                       mi_points=mi_points)
    report.to_csv(out)
    click.echo(f"ndf {report.ndf_seconds * 1e3:.1f} ms, pearson "
               f"{report.pearson_seconds * 1e3:.1f} ms, ksg_mi "
               f"{report.mi_seconds * 1e3:.1f} ms"
               f"{' (extrapolated)' if report.mi_extrapolated else ''}; "
               f"mi speedup {report.speedup_vs_mi():.0f}x"
               f"{'' if report.robust else ' [non-robust single sample]'}")


@main.command("reconstruct")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--ref", default="0,0,0", show_default=True)
@click.option("--dims", default="64,64,64", show_default=True)
@click.option("--role", default="reference-is-mu", show_default=True,
              type=click.Choice(["reference-is-mu", "reference-is-nu"]))
@click.option("--clamp/--no-clamp", default=False, show_default=True)
@click.option("--batch", default=65536, show_default=True)
def reconstruct_command(model_path, out, ref, dims, role, clamp, batch):
    """Reconstruct a dependence field and write it as NDFG."""
    model = load_model(model_path)
    grid = reconstruct_field(model, _parse_triple(ref), role,
                             _parse_triple(dims, int), batch, clamp=clamp)
    save_field_grid(grid, out)
    click.echo(f"wrote {out}")


@main.command("serve")
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--model", "model_paths", multiple=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--ensemble", "ensemble_paths", multiple=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--static", "static_dir", default=None,
              type=click.Path(file_okay=False),
              help="Explorer assets directory (defaults to frontend/dist "
                   "next to the working directory when present).")
def serve_command(port, host, model_paths, ensemble_paths, static_dir):
    """Serve the reconstruction API (and the explorer, when built)."""
    import uvicorn

    registry = Registry()
    for path in model_paths:
        model_id = registry.load_model_file(path)
        click.echo(f"loaded model {model_id} from {path}")
    for path in ensemble_paths:
        ens_id = registry.load_ensemble_file(path)
        click.echo(f"loaded ensemble {ens_id} from {path}")
    if static_dir is None:
        default_static = Path("frontend") / "dist"
        static_dir = default_static if default_static.is_dir() else None
    app = create_app(registry, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    sys.exit(main())
