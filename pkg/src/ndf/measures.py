"""Dependence measures between paired sample vectors.

Pearson's r for linear dependence and the Kraskov k-nearest-neighbor
estimator (variant 1) for mutual information, plus dense ground-truth
field generation against a fixed reference point.
"""

from __future__ import annotations

import logging
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .ensemble import EnsembleField, sample_at, sample_many
from .errors import (
    CorruptFileError,
    DegenerateSampleError,
    FormatError,
    ParameterError,
)

log = logging.getLogger(__name__)

NDFG_MAGIC = b"NDFG"
NDFG_VERSION = 1

# Fixed stream for the tie-breaking jitter inside ksg_mi. One shared
# per-index sequence keeps the estimator exactly symmetric in its arguments.
_JITTER_SEED = 0x5D17E3


@dataclass(frozen=True)
class CorrelationMeasure:
    """Estimator selection: Pearson's r or KSG mutual information."""

    kind: str = "pearson"
    ksg_k: int = 3

    def __post_init__(self):
        if self.kind not in ("pearson", "ksg_mi"):
            raise ParameterError(f"unknown measure kind {self.kind!r}")
        if self.ksg_k < 1:
            raise ParameterError("ksg_k must be >= 1")

    def __call__(self, a: np.ndarray, b: np.ndarray) -> float:
        if self.kind == "pearson":
            return pearson(a, b)
        return ksg_mi(a, b, self.ksg_k)

    @property
    def symmetric(self) -> bool:
        return True  # both supported measures are exchange-symmetric


def pearson(a, b) -> float:
    """Pearson's r between two equally long sample vectors.

    Two-pass computation in float64; the result is clamped to [-1, 1]
    against rounding. Raises DegenerateSampleError if either vector is
    constant.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ParameterError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ParameterError("need at least two samples")
    ac = a - a.mean()
    bc = b - b.mean()
    var_a = float(ac @ ac)
    var_b = float(bc @ bc)
    if var_a == 0.0 or var_b == 0.0:
        raise DegenerateSampleError("constant sample vector has no correlation")
    if np.array_equal(a, b):
        return 1.0
    r = float(ac @ bc) / np.sqrt(var_a * var_b)
    return float(min(1.0, max(-1.0, r)))


def pearson_against(ref: np.ndarray, samples: np.ndarray) -> np.ndarray:
    """Pearson's r of one reference vector against each row of (M, N).

    Degenerate rows (and everything, if ``ref`` is constant) come back as
    NaN so callers can apply their own policy.
    """
    ref = np.asarray(ref, dtype=np.float64).ravel()
    samples = np.asarray(samples, dtype=np.float64)
    rc = ref - ref.mean()
    var_ref = float(rc @ rc)
    out = np.full(samples.shape[0], np.nan)
    if var_ref == 0.0:
        return out
    sc = samples - samples.mean(axis=1, keepdims=True)
    var_s = np.einsum("ij,ij->i", sc, sc)
    ok = var_s > 0.0
    out[ok] = (sc[ok] @ rc) / np.sqrt(var_s[ok] * var_ref)
    np.clip(out, -1.0, 1.0, out=out)
    # Entries that are exactly the reference sample are mathematically 1;
    # rescue them from the final square-root rounding.
    near = np.flatnonzero(ok & (out > 1.0 - 1e-9))
    for i in near:
        if np.array_equal(samples[i], ref):
            out[i] = 1.0
    return out


def pearson_rowwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pearson's r between paired rows of two (M, N) sample blocks.

    Rows with a constant vector on either side come back as NaN.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ParameterError(f"shape mismatch: {a.shape} vs {b.shape}")
    ac = a - a.mean(axis=1, keepdims=True)
    bc = b - b.mean(axis=1, keepdims=True)
    var_a = np.einsum("ij,ij->i", ac, ac)
    var_b = np.einsum("ij,ij->i", bc, bc)
    out = np.full(a.shape[0], np.nan)
    ok = (var_a > 0.0) & (var_b > 0.0)
    out[ok] = (np.einsum("ij,ij->i", ac, bc)[ok]
               / np.sqrt(var_a[ok] * var_b[ok]))
    np.clip(out, -1.0, 1.0, out=out)
    same = ok & (out > 1.0 - 1e-9)
    for i in np.flatnonzero(same):
        if np.array_equal(a[i], b[i]):
            out[i] = 1.0
    return out


def digamma(x) -> np.ndarray | float:
    """Digamma via recurrence shift and the asymptotic series.

    Absolute error below 1e-10 on [1, 1e6]; accepts scalars or arrays of
    positive values.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0.0):
        raise ParameterError("digamma defined here for positive arguments only")
    scalar = x.ndim == 0
    x = np.atleast_1d(x).copy()
    acc = np.zeros_like(x)
    # psi(x) = psi(x + 1) - 1/x, applied until x >= 10
    for _ in range(10):
        small = x < 10.0
        if not small.any():
            break
        acc[small] -= 1.0 / x[small]
        x[small] += 1.0
    inv2 = 1.0 / (x * x)
    series = (
        np.log(x) - 0.5 / x
        - inv2 * (1.0 / 12.0
                  - inv2 * (1.0 / 120.0
                            - inv2 * (1.0 / 252.0
                                      - inv2 * (1.0 / 240.0
                                                - inv2 / 132.0))))
    )
    out = acc + series
    return float(out[0]) if scalar else out


def _tie_jitter(n: int) -> np.ndarray:
    """Deterministic per-index jitter factors in [-0.5, 0.5)."""
    return np.random.default_rng(_JITTER_SEED).random(n) - 0.5


def ksg_mi(a, b, k: int = 3) -> float:
    """KSG mutual information (variant 1) in nats.

    Max-norm k-NN distances in the joint space come from a kd-tree;
    marginal neighbors strictly inside that distance are counted on
    sorted copies. Duplicate points are separated by a deterministic
    jitter of 1e-10 times each vector's value range, so the estimator is
    total-ordered and exactly symmetric in its arguments. Estimates may
    be slightly negative; no clamping is applied.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ParameterError(f"length mismatch: {a.size} vs {b.size}")
    n = a.size
    if not 1 <= k <= n - 1:
        raise ParameterError(f"need 1 <= k <= N-1, got k={k}, N={n}")
    r = _tie_jitter(n)
    a = a + r * (1e-10 * np.ptp(a))
    b = b + r * (1e-10 * np.ptp(b))
    tree = cKDTree(np.column_stack([a, b]))
    dist, _ = tree.query(np.column_stack([a, b]), k=k + 1, p=np.inf, workers=-1)
    eps = dist[:, k]
    sa = np.sort(a)
    sb = np.sort(b)
    n_x = (np.searchsorted(sa, a + eps, "left")
           - np.searchsorted(sa, a - eps, "right") - 1)
    n_y = (np.searchsorted(sb, b + eps, "left")
           - np.searchsorted(sb, b - eps, "right") - 1)
    point_terms = digamma(n_x + 1.0) + digamma(n_y + 1.0)
    return float(digamma(float(k)) + digamma(float(n)) - np.mean(point_terms))


def gaussian_mi_analytic(rho: float) -> float:
    """Closed-form MI of a bivariate Gaussian with correlation rho, in nats."""
    if not abs(rho) < 1.0:
        raise ParameterError(f"|rho| must be < 1, got {rho}")
    return -0.5 * np.log1p(-rho * rho)


# ---------------------------------------------------------------------------
# dense field grids

@dataclass(frozen=True)
class FieldGrid:
    """Dense X*Y*Z scalar volume, values flat in x-fastest order."""

    dims: tuple[int, int, int]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if any(d < 1 for d in dims):
            raise ParameterError(f"grid dims must be >= 1, got {dims}")
        vals = np.asarray(self.values, dtype=np.float32).ravel()
        if vals.size != dims[0] * dims[1] * dims[2]:
            raise ParameterError(
                f"expected {dims[0] * dims[1] * dims[2]} values, got {vals.size}"
            )
        object.__setattr__(self, "values", vals)

    def as_zyx(self) -> np.ndarray:
        x, y, z = self.dims
        return self.values.reshape(z, y, x)


def grid_positions(dims: tuple[int, int, int]) -> np.ndarray:
    """Node coordinates of an output grid mapped into Omega, x fastest.

    Axes with a single node map to the domain center 0.0.
    """
    def axis(n):
        if n == 1:
            return np.zeros(1)
        return 2.0 * np.arange(n) / (n - 1) - 1.0

    x, y, z = dims
    zz, yy, xx = np.meshgrid(axis(z), axis(y), axis(x), indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])


def _mi_chunk(field_obj, var_nu, ref_vec, k, positions: np.ndarray) -> np.ndarray:
    samples = sample_many(field_obj, var_nu, positions)
    return np.array([ksg_mi(ref_vec, row, k) for row in samples])


# Process-pool plumbing: workers receive the fixed arguments once through
# the initializer instead of per task.
_MI_WORKER_ARGS: dict = {}


def _mi_worker_init(field_obj, var_nu, ref_vec, k):
    _MI_WORKER_ARGS["args"] = (field_obj, var_nu, ref_vec, k)


def _mi_worker_chunk(positions: np.ndarray) -> np.ndarray:
    return _mi_chunk(*_MI_WORKER_ARGS["args"], positions)


def ground_truth_field(field_obj: EnsembleField, measure: CorrelationMeasure,
                       var_mu: str, var_nu: str, ref,
                       dims: tuple[int, int, int],
                       workers: int = 1, chunk: int = 4096) -> FieldGrid:
    """Direct estimator evaluation of rho(e_mu(ref), e_nu(q)) over a grid.

    Degenerate Pearson entries are mapped to 0 with a logged warning.
    Results are identical for any ``workers``/``chunk`` setting; the
    estimator runs per grid point in a fixed order.
    """
    positions = grid_positions(dims)
    ref = np.asarray(ref, dtype=np.float64).reshape(3)
    ref_vec = sample_at(field_obj, var_mu, ref)
    if measure.kind == "pearson":
        out = np.empty(positions.shape[0])
        for s in range(0, positions.shape[0], chunk):
            block = sample_many(field_obj, var_nu, positions[s:s + chunk])
            out[s:s + chunk] = pearson_against(ref_vec, block)
        bad = np.isnan(out)
        if bad.any():
            log.warning("ground truth: %d degenerate Pearson entries set to 0",
                        int(bad.sum()))
            out[bad] = 0.0
    else:
        k = measure.ksg_k
        if k > field_obj.member_count - 1:
            raise ParameterError(
                f"ksg_k={k} needs at least {k + 1} members, "
                f"have {field_obj.member_count}"
            )
        chunks = [positions[s:s + chunk]
                  for s in range(0, positions.shape[0], chunk)]
        if workers > 1:
            with ProcessPoolExecutor(
                max_workers=workers, initializer=_mi_worker_init,
                initargs=(field_obj, var_nu, ref_vec, k),
            ) as pool:
                parts = list(pool.map(_mi_worker_chunk, chunks))
        else:
            parts = [_mi_chunk(field_obj, var_nu, ref_vec, k, c)
                     for c in chunks]
        out = np.concatenate(parts) if parts else np.empty(0)
    return FieldGrid(dims, out.astype(np.float32))


def save_field_grid(grid: FieldGrid, path) -> None:
    """Write the NDFG dump: magic, version, dims, float32 payload."""
    x, y, z = grid.dims
    with open(path, "wb") as fh:
        fh.write(NDFG_MAGIC)
        fh.write(struct.pack("<4I", NDFG_VERSION, x, y, z))
        fh.write(np.ascontiguousarray(grid.values, dtype="<f4").tobytes())


def load_field_grid(path) -> FieldGrid:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != NDFG_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {NDFG_MAGIC!r}")
        head = fh.read(16)
        if len(head) != 16:
            raise CorruptFileError("truncated NDFG header")
        version, x, y, z = struct.unpack("<4I", head)
        if version != NDFG_VERSION:
            raise FormatError(f"unsupported NDFG version {version}")
        payload = fh.read()
    if len(payload) != x * y * z * 4:
        raise CorruptFileError(
            f"payload holds {len(payload) // 4} values, expected {x * y * z}"
        )
    return FieldGrid((x, y, z), np.frombuffer(payload, dtype="<f4").copy())
