"""Position embeddings: fixed Fourier features and trainable hash grids.

Both map positions in Omega = [-1, 1]^3 to feature vectors. The hash grid
carries trainable tables and provides exact gradients with respect to its
entries; Fourier features are parameter-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

# Established spatial-hash constants for 3D integer lattices.
_HASH_PRIMES = (np.uint64(1), np.uint64(2654435761), np.uint64(805459861))

_NODE_SNAP = 1e-9


@dataclass(frozen=True)
class FourierConfig:
    """Number of frequency octaves; output has 6*L features."""

    L: int = 4

    def __post_init__(self):
        if self.L < 0:
            raise ParameterError(f"octave count must be >= 0, got {self.L}")

    @property
    def output_dim(self) -> int:
        return 6 * self.L


def fourier_encode(positions: np.ndarray, config: FourierConfig) -> np.ndarray:
    """Sinusoidal features at octave frequencies 2^i * pi.

    Layout is octave-major, axis-minor, sin before cos:
    [sin(w0 x), cos(w0 x), sin(w0 y), ..., cos(w0 z), sin(w1 x), ...].
    Pure function of the positions; float64 output of shape (M, 6L).
    """
    pos = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    m = pos.shape[0]
    out = np.empty((m, config.output_dim))
    for i in range(config.L):
        phase = (2.0 ** i * np.pi) * pos  # (M, 3)
        out[:, 6 * i + 0:6 * i + 6:2] = np.sin(phase)
        out[:, 6 * i + 1:6 * i + 6:2] = np.cos(phase)
    return out


@dataclass(frozen=True)
class HashGridConfig:
    levels: int = 6
    base_resolution: int = 16
    growth: float = 2.0
    log2_table_size: int = 16
    features_per_level: int = 2

    def __post_init__(self):
        if self.levels < 1:
            raise ParameterError("need at least one level")
        if self.base_resolution < 2:
            raise ParameterError("base resolution must be >= 2")
        if self.growth <= 0:
            raise ParameterError("growth factor must be positive")
        if not 1 <= self.log2_table_size < 32:
            raise ParameterError("log2 table size must be in [1, 32)")
        if self.features_per_level < 1:
            raise ParameterError("need at least one feature per level")

    @property
    def table_size(self) -> int:
        return 1 << self.log2_table_size

    @property
    def output_dim(self) -> int:
        return self.levels * self.features_per_level

    def level_resolution(self, level: int) -> int:
        return int(round(self.base_resolution * self.growth ** level))

    @property
    def table_bytes(self) -> int:
        return self.levels * self.table_size * self.features_per_level * 4


def _corner_indices(res: int, table_size: int, ix, iy, iz) -> np.ndarray:
    """Map integer lattice corners to table rows.

    Levels whose virtual grid fits into the table index densely (and thus
    injectively); finer levels hash with fixed per-axis primes, XORed and
    reduced modulo the table size.
    """
    if res ** 3 <= table_size:
        return (ix + res * (iy + res * iz)).astype(np.int64)
    h = (ix.astype(np.uint64) * _HASH_PRIMES[0]
         ^ iy.astype(np.uint64) * _HASH_PRIMES[1]
         ^ iz.astype(np.uint64) * _HASH_PRIMES[2])
    return (h & np.uint64(table_size - 1)).astype(np.int64)


def _level_coords(positions: np.ndarray, res: int):
    """Base corner indices and fractional weights on one level's lattice."""
    u = (np.clip(positions, -1.0, 1.0) + 1.0) * 0.5 * (res - 1)
    i0 = np.floor(u).astype(np.int64)
    np.clip(i0, 0, res - 2, out=i0)
    t = u - i0
    t[t < _NODE_SNAP] = 0.0
    t[t > 1.0 - _NODE_SNAP] = 1.0
    return i0, t


_CORNER_OFFSETS = np.array([(dx, dy, dz)
                            for dz in (0, 1) for dy in (0, 1) for dx in (0, 1)],
                           dtype=np.int64)


class HashGrid:
    """Multiresolution hashed feature lattice with trainable tables.

    ``tables`` has shape (levels, 2^T, F). Forward lookups are read-only
    and safe to run concurrently; gradient accumulation happens in a
    fixed order so batch reductions are deterministic.
    """

    def __init__(self, config: HashGridConfig, tables: np.ndarray):
        tables = np.asarray(tables)
        expected = (config.levels, config.table_size, config.features_per_level)
        if tables.shape != expected:
            raise ParameterError(f"tables shape {tables.shape}, expected {expected}")
        if not np.isfinite(tables).all():
            raise ParameterError("hash tables contain non-finite entries")
        self.config = config
        self.tables = tables

    @classmethod
    def initialize(cls, config: HashGridConfig, rng: np.random.Generator,
                   dtype=np.float32) -> "HashGrid":
        """Small symmetric init keeps early training on the Fourier pathway."""
        tables = rng.uniform(
            -1e-4, 1e-4,
            size=(config.levels, config.table_size, config.features_per_level),
        ).astype(dtype)
        return cls(config, tables)

    def _level_lookup(self, positions: np.ndarray, level: int):
        """Corner table rows (M, 8) and trilinear weights (M, 8)."""
        res = self.config.level_resolution(level)
        i0, t = _level_coords(positions, res)
        corners = i0[:, None, :] + _CORNER_OFFSETS[None, :, :]  # (M, 8, 3)
        idx = _corner_indices(res, self.config.table_size,
                              corners[..., 0], corners[..., 1], corners[..., 2])
        w = np.ones(corners.shape[:2])
        for axis in range(3):
            frac = t[:, axis:axis + 1]
            on = _CORNER_OFFSETS[:, axis][None, :]
            w = w * np.where(on, frac, 1.0 - frac)
        return idx, w

    def encode(self, positions: np.ndarray) -> np.ndarray:
        """Trilinear feature lookup, concatenated coarse to fine.

        Returns float64 (M, levels*F); arithmetic runs in float64
        regardless of the table dtype.
        """
        pos = np.atleast_2d(np.asarray(positions, dtype=np.float64))
        cfg = self.config
        out = np.empty((pos.shape[0], cfg.output_dim))
        f = cfg.features_per_level
        for level in range(cfg.levels):
            idx, w = self._level_lookup(pos, level)
            feats = self.tables[level].astype(np.float64)[idx]  # (M, 8, F)
            out[:, level * f:(level + 1) * f] = np.einsum("mc,mcf->mf", w, feats,
                                                          optimize=False)
        return out

    def backward(self, positions: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """Scatter upstream gradients into table slots.

        ``upstream`` is (M, levels*F); the result matches ``tables`` in
        shape and dtype. Contributions accumulate additively in sample
        order (fixed reduction order).
        """
        pos = np.atleast_2d(np.asarray(positions, dtype=np.float64))
        up = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
        cfg = self.config
        if up.shape != (pos.shape[0], cfg.output_dim):
            raise ParameterError(
                f"upstream shape {up.shape}, expected {(pos.shape[0], cfg.output_dim)}"
            )
        f = cfg.features_per_level
        grad = np.zeros((cfg.levels, cfg.table_size, f))
        for level in range(cfg.levels):
            idx, w = self._level_lookup(pos, level)
            flat_idx = idx.ravel()
            for j in range(f):
                contrib = (w * up[:, level * f + j:level * f + j + 1]).ravel()
                grad[level, :, j] = np.bincount(flat_idx, weights=contrib,
                                                minlength=cfg.table_size)
        return grad.astype(self.tables.dtype)
