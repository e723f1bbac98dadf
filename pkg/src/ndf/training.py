"""End-to-end NDF training.

Every epoch draws a fresh set of uniformly distributed position pairs,
computes dependence targets through the configured estimator, and runs
mini-batch Adam on the L1 (or L2) loss. Validation pairs are drawn once
per run from a seed stream disjoint from training; the best-validation
checkpoint is returned.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .ensemble import EnsembleField, sample_many
from .errors import ConfigError, DataError, ParameterError, TrainingError
from .measures import CorrelationMeasure, ksg_mi, pearson_rowwise
from .model import ModelSpec, NdfModel
from .nn import AdamState, PlateauScheduler

log = logging.getLogger(__name__)

_VALIDATION_STREAM = 0x7A11D
_RESAMPLE_ROUNDS = 10

PSNR_CAP_DB = 200.0


@dataclass(frozen=True)
class TrainingConfig:
    measure: CorrelationMeasure = CorrelationMeasure("pearson")
    var_mu: str = "v"
    var_nu: str = "v"
    samples_per_epoch: int = 1_000_000
    batch_size: int = 1000
    epochs: int = 200
    lr: float = 3e-4
    scheduler_factor: float = 0.1
    scheduler_patience: int = 5
    loss: str = "l1"
    seed: int = 0
    validation_samples: int = 1_000_000
    validation_on_grid: bool = False

    def __post_init__(self):
        if self.loss not in ("l1", "l2"):
            raise ConfigError(f"loss must be 'l1' or 'l2', got {self.loss!r}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not 1 <= self.batch_size <= self.samples_per_epoch:
            raise ConfigError("need 1 <= batch_size <= samples_per_epoch")
        if self.validation_samples < 1:
            raise ConfigError("validation_samples must be >= 1")

    @classmethod
    def desk_default(cls, **overrides) -> "TrainingConfig":
        """Desk-scale budget: 10^5 samples, 50 epochs."""
        base = dict(samples_per_epoch=100_000, epochs=50,
                    validation_samples=100_000)
        base.update(overrides)
        return cls(**base)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    psnr_db: float
    lr: float


@dataclass
class TrainedArtifact:
    model: NdfModel
    history: list[EpochStats]
    spec: ModelSpec
    config: TrainingConfig
    wall_clock_seconds: float

    @property
    def best(self) -> EpochStats:
        return min(self.history, key=lambda h: h.val_loss)


def _uniform_pairs(rng: np.random.Generator, count: int):
    pts = rng.uniform(-1.0, 1.0, size=(count, 6))
    return pts[:, :3].copy(), pts[:, 3:].copy()


def _grid_pairs(rng: np.random.Generator, count: int, field_obj: EnsembleField):
    """Pairs restricted to ensemble node coordinates."""
    dom = field_obj.domain
    out = []
    for _ in range(2):
        ix = rng.integers(0, dom.nx, count)
        iy = rng.integers(0, dom.ny, count)
        iz = rng.integers(0, dom.nz, count)
        out.append(np.column_stack([
            2.0 * ix / (dom.nx - 1) - 1.0,
            2.0 * iy / (dom.ny - 1) - 1.0,
            2.0 * iz / (dom.nz - 1) - 1.0,
        ]))
    return out[0], out[1]


def _targets(field_obj: EnsembleField, measure: CorrelationMeasure,
             var_mu: str, var_nu: str, p_mu: np.ndarray,
             p_nu: np.ndarray) -> np.ndarray:
    a = sample_many(field_obj, var_mu, p_mu)
    b = sample_many(field_obj, var_nu, p_nu)
    if measure.kind == "pearson":
        return pearson_rowwise(a, b)
    return np.array([ksg_mi(a[i], b[i], measure.ksg_k)
                     for i in range(a.shape[0])])


def sample_pairs_with_targets(field_obj: EnsembleField, config: TrainingConfig,
                              rng: np.random.Generator, count: int,
                              on_grid: bool = False):
    """Draw position pairs and their targets, resampling degenerate pairs.

    Returns (p_mu, p_nu, targets); raises DataError if pairs still
    degenerate after a bounded number of redraw rounds.
    """
    draw = (_grid_pairs if on_grid else _uniform_pairs)
    args = (rng, count, field_obj) if on_grid else (rng, count)
    p_mu, p_nu = draw(*args)
    targets = _targets(field_obj, config.measure, config.var_mu,
                       config.var_nu, p_mu, p_nu)
    for _ in range(_RESAMPLE_ROUNDS):
        bad = ~np.isfinite(targets)
        if not bad.any():
            return p_mu, p_nu, targets
        n_bad = int(bad.sum())
        log.warning("resampling %d degenerate target pairs", n_bad)
        redraw_args = (rng, n_bad, field_obj) if on_grid else (rng, n_bad)
        p_mu[bad], p_nu[bad] = draw(*redraw_args)
        targets[bad] = _targets(field_obj, config.measure, config.var_mu,
                                config.var_nu, p_mu[bad], p_nu[bad])
    if not np.isfinite(targets).all():
        raise DataError("degenerate targets persisted through resampling")
    return p_mu, p_nu, targets


def make_training_batch(field_obj: EnsembleField, config: TrainingConfig,
                        epoch: int):
    """One epoch's worth of ((p_mu, p_nu), target) samples.

    Deterministic for a given (config.seed, epoch); positions are i.i.d.
    uniform over Omega^2.
    """
    rng = np.random.default_rng([config.seed, epoch])
    return sample_pairs_with_targets(field_obj, config, rng,
                                     config.samples_per_epoch)


def psnr(predicted, truth, peak: float | None = None) -> float:
    """10*log10(peak^2 / MSE) in dB, capped at PSNR_CAP_DB.

    ``peak`` defaults to the truth value range over the evaluation set,
    floored at 1e-6. Exact matches return the cap.
    """
    predicted = np.asarray(predicted, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if predicted.size == 0 or predicted.shape != truth.shape:
        raise ParameterError("need equally sized, non-empty inputs")
    if peak is None:
        peak = max(float(np.ptp(truth)), 1e-6)
    if not peak > 0:
        raise ParameterError(f"peak must be positive, got {peak}")
    mse = float(np.mean((predicted - truth) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(peak * peak / mse), PSNR_CAP_DB)


def _loss_and_upstream(y: np.ndarray, t: np.ndarray, kind: str):
    diff = y.astype(np.float64) - t
    if kind == "l1":
        return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def validation_loss(y: np.ndarray, t: np.ndarray, kind: str) -> float:
    diff = y.astype(np.float64) - t
    return float(np.mean(np.abs(diff)) if kind == "l1" else np.mean(diff * diff))


def train(field_obj: EnsembleField, spec: ModelSpec,
          config: TrainingConfig) -> TrainedArtifact:
    """Fit an NDF to the configured dependence field.

    Two runs with identical config, spec and data produce identical
    histories and parameters.
    """
    if spec.var_mu != config.var_mu or spec.var_nu != config.var_nu:
        raise ConfigError("model spec and training config disagree on variables")
    start = time.perf_counter()
    model = NdfModel.build(spec, seed=config.seed)
    params = model.parameters()
    adam = AdamState(params, lr=config.lr)
    sched = PlateauScheduler(config.lr, config.scheduler_factor,
                             config.scheduler_patience)
    val_rng = np.random.default_rng([config.seed, _VALIDATION_STREAM])
    vp_mu, vp_nu, v_targets = sample_pairs_with_targets(
        field_obj, config, val_rng, config.validation_samples,
        on_grid=config.validation_on_grid)
    v_peak = max(float(np.ptp(v_targets)), 1e-6)

    history: list[EpochStats] = []
    best_model = None
    best_val = np.inf
    for epoch in range(config.epochs):
        # Pairs are freshly drawn i.i.d. every epoch, so consecutive slices
        # already are unbiased mini-batches.
        p_mu, p_nu, targets = make_training_batch(field_obj, config, epoch)
        epoch_loss = 0.0
        for start_idx in range(0, targets.size, config.batch_size):
            rows = slice(start_idx, start_idx + config.batch_size)
            y, trace = model.forward_trace(p_mu[rows], p_nu[rows])
            loss, upstream = _loss_and_upstream(y, targets[rows], config.loss)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch "
                    f"{start_idx // config.batch_size}, lr {adam.lr:g}"
                )
            grads = model.backward(trace, upstream.astype(model.dtype))
            adam.step(params, grads)
            epoch_loss += loss * y.size
        epoch_loss /= targets.size

        val_pred = model.forward(vp_mu, vp_nu, exact=False)
        val_loss = validation_loss(val_pred, v_targets, config.loss)
        val_psnr = psnr(val_pred, v_targets, peak=v_peak)
        adam.lr = sched.step(val_loss)
        history.append(EpochStats(epoch, epoch_loss, val_loss, val_psnr,
                                  adam.lr))
        if val_loss < best_val:
            best_val = val_loss
            best_model = model.copy()
    return TrainedArtifact(best_model, history, spec, config,
                           time.perf_counter() - start)


# ---------------------------------------------------------------------------
# capacity/MLP sweep

@dataclass
class SweepCell:
    log2_table_size: int
    layers: int
    channels: int
    psnr_db: float = np.nan
    model_bytes: int = 0
    train_seconds: float = np.nan
    error: str | None = None


def sweep(field_obj: EnsembleField, base_spec: ModelSpec,
          table_sizes: list[int], mlp_shapes: list[tuple[int, int]],
          config: TrainingConfig) -> list[SweepCell]:
    """Train every (T, (layers, channels)) cell with identical seeds/data.

    Per-cell failures are recorded in the cell instead of aborting the
    sweep. Rows are ordered T-major.
    """
    cells = []
    for t in table_sizes:
        for layers, channels in mlp_shapes:
            cell = SweepCell(t, layers, channels)
            try:
                spec = replace(base_spec, log2_table_size=t,
                               encoder_layers=layers, decoder_layers=layers,
                               channels=channels)
                cell.model_bytes = spec.parameter_bytes()
                artifact = train(field_obj, spec, config)
                cell.psnr_db = artifact.best.psnr_db
                cell.train_seconds = artifact.wall_clock_seconds
            except Exception as exc:  # keep sweeping
                log.warning("sweep cell T=%d l=%d c=%d failed: %s",
                            t, layers, channels, exc)
                cell.error = str(exc)
            cells.append(cell)
    return cells


def write_sweep_csv(cells: list[SweepCell], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["T", "layers", "channels", "psnr_db", "model_bytes",
                         "train_seconds"])
        for c in cells:
            writer.writerow([c.log2_table_size, c.layers, c.channels,
                             f"{c.psnr_db:.4f}", c.model_bytes,
                             f"{c.train_seconds:.3f}"])
