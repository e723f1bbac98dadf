"""Batched field reconstruction from trained NDFs and the HTTP service.

The reference point is embedded and encoded once per request; its encoder
output is reused across all query batches, which is exact (not an
approximation) because per-row arithmetic does not depend on the batch
layout. The FastAPI app exposes a JSON control plane with a binary
float32 data plane for field payloads.
"""

from __future__ import annotations

import logging
import statistics
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ensemble import EnsembleField, load_ensemble
from .errors import ConfigError, NotFoundError, ParameterError
from .measures import (
    CorrelationMeasure,
    FieldGrid,
    grid_positions,
    ground_truth_field,
)
from .model import NdfModel, load_model, _merge
from .training import psnr

log = logging.getLogger(__name__)

DEFAULT_QUERY_BATCH = 65536

ROLE_MU = "reference-is-mu"
ROLE_NU = "reference-is-nu"


def _check_role(role: str) -> str:
    if role not in (ROLE_MU, ROLE_NU):
        raise ParameterError(f"role must be {ROLE_MU!r} or {ROLE_NU!r}")
    return role


def reconstruct_field(model: NdfModel, ref, role: str = ROLE_MU,
                      dims: tuple[int, int, int] = (64, 64, 64),
                      batch_size: int = DEFAULT_QUERY_BATCH,
                      clamp: bool = False) -> FieldGrid:
    """Evaluate the dependence field of a reference point over a grid.

    Bit-identical to looping ``model.forward`` over every grid node, for
    any ``batch_size``. ``clamp`` limits values to [-1, 1] (for Pearson
    display); evaluation paths should leave it off.
    """
    _check_role(role)
    if batch_size < 1:
        raise ParameterError("batch_size must be >= 1")
    model.validate_finite()
    ref = np.asarray(ref, dtype=np.float64).reshape(1, 3)
    positions = grid_positions(dims)

    ref_is_mu = role == ROLE_MU
    ref_grid = model.grid_mu if ref_is_mu else model.grid_nu
    ref_enc = model.enc_mu if ref_is_mu else model.enc_nu
    query_grid = model.grid_nu if ref_is_mu else model.grid_mu
    query_enc = model.enc_nu if ref_is_mu else model.enc_mu

    ref_features = ref_enc.forward(model.embed(ref_grid, ref))  # (1, c)

    out = np.empty(positions.shape[0], dtype=np.float32)
    for s in range(0, positions.shape[0], batch_size):
        block = positions[s:s + batch_size]
        q = query_enc.forward(model.embed(query_grid, block))
        if ref_is_mu:
            merged = _merge(model.spec.merge,
                            np.broadcast_to(ref_features, q.shape), q)
        else:
            merged = _merge(model.spec.merge, q,
                            np.broadcast_to(ref_features, q.shape))
        out[s:s + batch_size] = model.decoder.forward(merged)[:, 0]
    if clamp:
        np.clip(out, -1.0, 1.0, out=out)
    return FieldGrid(dims, out)


def difference_field(model: NdfModel, ref_a, ref_b,
                     dims: tuple[int, int, int],
                     role: str = ROLE_MU,
                     batch_size: int = DEFAULT_QUERY_BATCH) -> FieldGrid:
    """reconstruct(ref_a) - reconstruct(ref_b), elementwise."""
    fa = reconstruct_field(model, ref_a, role, dims, batch_size)
    fb = reconstruct_field(model, ref_b, role, dims, batch_size)
    return FieldGrid(dims, fa.values - fb.values)


def matrix_reconstruct(models: list[NdfModel], variables: list[str], ref,
                       dims: tuple[int, int, int],
                       batch_size: int = DEFAULT_QUERY_BATCH) -> list[FieldGrid]:
    """All d*d correlation fields for one reference point, row-major.

    Cell (i, j) holds the field of variable i against the reference in
    variable j. Models are required for unordered pairs i <= j only;
    mirrored cells reuse the (j, i) model with the reference in the
    opposite role, exploiting the exchange symmetry of the measures.
    """
    by_pair = {(m.spec.var_mu, m.spec.var_nu): m for m in models}
    missing = []
    for i, vi in enumerate(variables):
        for vj in variables[i:]:
            if (vi, vj) not in by_pair and (vj, vi) not in by_pair:
                missing.append((vi, vj))
    if missing:
        raise NotFoundError(f"no model for variable pairs: {missing}")
    cells = []
    for vi in variables:
        for vj in variables:
            if (vi, vj) in by_pair:
                # reference occupies the nu (second) slot
                cells.append(reconstruct_field(by_pair[(vi, vj)], ref,
                                               ROLE_NU, dims, batch_size))
            else:
                cells.append(reconstruct_field(by_pair[(vj, vi)], ref,
                                               ROLE_MU, dims, batch_size))
    return cells


@dataclass
class ComparisonResult:
    psnr_db: float
    max_abs_err: float
    error_field: FieldGrid


def compare_to_ground_truth(model: NdfModel, field_obj: EnsembleField,
                            measure: CorrelationMeasure, ref,
                            dims: tuple[int, int, int],
                            role: str = ROLE_MU,
                            workers: int = 1) -> ComparisonResult:
    """Reconstruction vs direct estimator evaluation on an identical grid."""
    _check_role(role)
    var_mu, var_nu = model.spec.var_mu, model.spec.var_nu
    if role == ROLE_MU:
        truth = ground_truth_field(field_obj, measure, var_mu, var_nu, ref,
                                   dims, workers=workers)
    else:
        truth = ground_truth_field(field_obj, measure, var_nu, var_mu, ref,
                                   dims, workers=workers)
    recon = reconstruct_field(model, ref, role, dims)
    err = recon.values.astype(np.float64) - truth.values.astype(np.float64)
    return ComparisonResult(
        psnr_db=psnr(recon.values, truth.values),
        max_abs_err=float(np.max(np.abs(err))) if err.size else 0.0,
        error_field=FieldGrid(dims, err.astype(np.float32)),
    )


@dataclass
class BenchmarkReport:
    dims: tuple[int, int, int]
    repetitions: int
    ndf_seconds: float
    pearson_seconds: float
    mi_seconds: float
    mi_measured_points: int
    mi_extrapolated: bool
    robust: bool

    def speedup_vs_pearson(self) -> float:
        return self.pearson_seconds / self.ndf_seconds

    def speedup_vs_mi(self) -> float:
        return self.mi_seconds / self.ndf_seconds

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("method,seconds,extrapolated,points\n")
            n = self.dims[0] * self.dims[1] * self.dims[2]
            fh.write(f"ndf,{self.ndf_seconds:.6f},false,{n}\n")
            fh.write(f"pearson,{self.pearson_seconds:.6f},false,{n}\n")
            fh.write(f"ksg_mi,{self.mi_seconds:.6f},"
                     f"{'true' if self.mi_extrapolated else 'false'},"
                     f"{self.mi_measured_points}\n")


def benchmark(model: NdfModel, field_obj: EnsembleField, ref,
              dims: tuple[int, int, int], repetitions: int = 3, k: int = 3,
              mi_points: int = 1024) -> BenchmarkReport:
    """Median wall-clock of NDF reconstruction vs direct estimators.

    The MI ground truth is timed on the first ``mi_points`` grid nodes and
    linearly extrapolated to the full grid unless ``mi_points`` covers it;
    the estimator cost is per-point, so the extrapolation is faithful.
    A single repetition is reported as non-robust.
    """
    if repetitions < 1:
        raise ParameterError("repetitions must be >= 1")
    n_points = dims[0] * dims[1] * dims[2]
    mi_points = min(mi_points, n_points)
    var = model.spec.var_mu

    def timed(fn):
        samples = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            fn()
            samples.append(time.perf_counter() - t0)
        return statistics.median(samples)

    ndf_s = timed(lambda: reconstruct_field(model, ref, ROLE_MU, dims))
    pearson_s = timed(lambda: ground_truth_field(
        field_obj, CorrelationMeasure("pearson"), var, var, ref, dims))

    mi_measure = CorrelationMeasure("ksg_mi", ksg_k=k)
    mi_dims = (mi_points, 1, 1)
    mi_sub = timed(lambda: ground_truth_field(field_obj, mi_measure, var, var,
                                              ref, mi_dims))
    mi_s = mi_sub * (n_points / mi_points)
    return BenchmarkReport(dims, repetitions, ndf_s, pearson_s, mi_s,
                           mi_points, mi_points < n_points, repetitions > 1)


# ---------------------------------------------------------------------------
# HTTP service

class Registry:
    """Models and ensembles by id; single writer, many lock-free readers.

    Entries are fully constructed before publication, so a concurrent
    reader never observes a partially loaded model.
    """

    def __init__(self):
        self._models: dict[str, NdfModel] = {}
        self._ensembles: dict[str, EnsembleField] = {}
        self._write_lock = threading.Lock()

    def add_model(self, model_id: str, model: NdfModel) -> str:
        with self._write_lock:
            self._models[model_id] = model
        return model_id

    def load_model_file(self, path) -> str:
        model = load_model(path)
        return self.add_model(self._unique_id(Path(path).stem), model)

    def add_ensemble(self, ensemble_id: str, field_obj: EnsembleField) -> str:
        with self._write_lock:
            self._ensembles[ensemble_id] = field_obj
        return ensemble_id

    def load_ensemble_file(self, path) -> str:
        field_obj = load_ensemble(path)
        return self.add_ensemble(self._unique_id(Path(path).stem), field_obj)

    def _unique_id(self, base: str) -> str:
        name = base
        counter = 1
        existing = self._models.keys() | self._ensembles.keys()
        while name in existing:
            counter += 1
            name = f"{base}-{counter}"
        return name

    def model(self, model_id: str) -> NdfModel:
        try:
            return self._models[model_id]
        except KeyError:
            raise NotFoundError(f"unknown model {model_id!r}") from None

    def ensemble(self, ensemble_id: str | None) -> EnsembleField:
        if ensemble_id is None:
            if len(self._ensembles) == 1:
                return next(iter(self._ensembles.values()))
            raise NotFoundError("ensemble id required")
        try:
            return self._ensembles[ensemble_id]
        except KeyError:
            raise NotFoundError(f"unknown ensemble {ensemble_id!r}") from None

    def list_models(self) -> list[dict]:
        return [
            {
                "id": model_id,
                "variables": [m.spec.var_mu, m.spec.var_nu],
                "measure": m.spec.measure_kind,
                "merge": m.spec.merge,
                "shared": m.spec.shared,
                "bytes": m.parameter_bytes(),
            }
            for model_id, m in sorted(self._models.items())
        ]


MATRIX_BOUNDARY = "ndf-field-cell"


try:
    from pydantic import BaseModel as _BaseModel
except ImportError:  # pragma: no cover - pydantic ships with fastapi
    _BaseModel = object


class LoadRequest(_BaseModel):
    path: str


class ReconstructRequest(_BaseModel):
    model: str
    ref: list[float]
    role: str = ROLE_MU
    dims: list[int]
    clamp: bool = True
    batch: int = DEFAULT_QUERY_BATCH


class DiffRequest(_BaseModel):
    model: str
    ref_a: list[float]
    ref_b: list[float]
    dims: list[int]
    role: str = ROLE_MU


class MatrixRequest(_BaseModel):
    models: list[str]
    variables: list[str]
    ref: list[float]
    dims: list[int]


class GroundTruthRequest(_BaseModel):
    ensemble: str | None = None
    measure: str = "pearson"
    k: int = 3
    var_mu: str
    var_nu: str
    ref: list[float]
    dims: list[int]


class CompareRequest(_BaseModel):
    model: str
    ensemble: str | None = None
    measure: str | None = None
    k: int = 3
    ref: list[float]
    dims: list[int]
    role: str = ROLE_MU


def _field_headers(grid: FieldGrid) -> dict[str, str]:
    x, y, z = grid.dims
    lo = float(grid.values.min()) if grid.values.size else 0.0
    hi = float(grid.values.max()) if grid.values.size else 0.0
    return {
        "X-Dims": f"{x},{y},{z}",
        "X-Value-Min": repr(lo),
        "X-Value-Max": repr(hi),
    }


def create_app(registry: Registry | None = None, static_dir=None):
    """Build the FastAPI app serving the reconstruction API.

    ``static_dir`` (when given and existing) is mounted at the web root
    for the explorer frontend.
    """
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse, Response

    registry = registry if registry is not None else Registry()
    app = FastAPI(title="ndf reconstruction service")
    app.state.registry = registry

    @app.exception_handler(NotFoundError)
    async def _not_found(request: Request, exc: NotFoundError):
        return JSONResponse({"error": str(exc)}, status_code=404)

    @app.exception_handler(ParameterError)
    async def _bad_param(request: Request, exc: ParameterError):
        return JSONResponse({"error": str(exc)}, status_code=400)

    @app.exception_handler(ConfigError)
    async def _bad_config(request: Request, exc: ConfigError):
        return JSONResponse({"error": str(exc)}, status_code=400)

    def _dims(raw: list[int]) -> tuple[int, int, int]:
        if len(raw) != 3:
            raise ParameterError(f"dims must have 3 entries, got {raw}")
        return int(raw[0]), int(raw[1]), int(raw[2])

    def _binary(grid: FieldGrid) -> Response:
        return Response(content=grid.values.astype("<f4").tobytes(),
                        media_type="application/octet-stream",
                        headers=_field_headers(grid))

    @app.get("/api/models")
    def list_models():
        return registry.list_models()

    @app.post("/api/models/load")
    def load_model_endpoint(req: LoadRequest):
        return {"id": registry.load_model_file(req.path)}

    @app.post("/api/reconstruct")
    def reconstruct_endpoint(req: ReconstructRequest):
        grid = reconstruct_field(registry.model(req.model), req.ref, req.role,
                                 _dims(req.dims), req.batch, clamp=req.clamp)
        return _binary(grid)

    @app.post("/api/diff")
    def diff_endpoint(req: DiffRequest):
        grid = difference_field(registry.model(req.model), req.ref_a,
                                req.ref_b, _dims(req.dims), req.role)
        return _binary(grid)

    @app.post("/api/matrix")
    def matrix_endpoint(req: MatrixRequest):
        models = [registry.model(mid) for mid in req.models]
        cells = matrix_reconstruct(models, req.variables, req.ref,
                                   _dims(req.dims))
        d = len(req.variables)
        parts = []
        for idx, grid in enumerate(cells):
            headers = _field_headers(grid)
            headers["X-Cell"] = f"{idx // d},{idx % d}"
            head = "".join(f"{k}: {v}\r\n" for k, v in headers.items())
            parts.append(
                f"--{MATRIX_BOUNDARY}\r\n"
                f"Content-Type: application/octet-stream\r\n{head}\r\n"
                .encode("ascii") + grid.values.astype("<f4").tobytes()
                + b"\r\n")
        body = b"".join(parts) + f"--{MATRIX_BOUNDARY}--\r\n".encode("ascii")
        return Response(
            content=body,
            media_type=f"multipart/mixed; boundary={MATRIX_BOUNDARY}",
            headers={"X-Cells": str(len(cells)),
                     "X-Matrix-Dim": str(d)},
        )

    @app.post("/api/ground_truth")
    def ground_truth_endpoint(req: GroundTruthRequest):
        field_obj = registry.ensemble(req.ensemble)
        measure = CorrelationMeasure(req.measure, req.k)
        grid = ground_truth_field(field_obj, measure, req.var_mu, req.var_nu,
                                  req.ref, _dims(req.dims))
        return _binary(grid)

    @app.post("/api/compare")
    def compare_endpoint(req: CompareRequest):
        model = registry.model(req.model)
        field_obj = registry.ensemble(req.ensemble)
        measure = CorrelationMeasure(req.measure or model.spec.measure_kind,
                                     req.k)
        result = compare_to_ground_truth(model, field_obj, measure, req.ref,
                                         _dims(req.dims), req.role)
        return {"psnr_db": result.psnr_db, "max_abs_err": result.max_abs_err}

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="explorer")
    return app
