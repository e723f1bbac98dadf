"""Multi-variable ensemble fields on regular 3D grids.

An ensemble holds N member grids for each of d named variables over a
shared domain. Continuous coordinates live in the symmetric unit cube
Omega = [-1, 1]^3; grid node (i, j, k) sits at coordinate component
2*i/(n-1) - 1 along each axis. Values are stored as float32, all
interpolation arithmetic runs in float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorruptFileError,
    DataError,
    FormatError,
    ParameterError,
    UnknownVariableError,
)

NDFE_MAGIC = b"NDFE"
NDFE_VERSION = 1

# Snap tolerance for the continuous -> grid-index mapping, in grid units.
# Node coordinates survive the round trip through [-1,1] only up to a few
# ulps; anything this close to a node is treated as exactly on it.
_NODE_SNAP = 1e-9


@dataclass(frozen=True)
class GridDomain:
    """Node counts of a regular grid over Omega = [-1, 1]^3."""

    nx: int
    ny: int
    nz: int

    def __post_init__(self):
        for n in (self.nx, self.ny, self.nz):
            if int(n) != n or n < 2:
                raise ParameterError(f"grid axes need >= 2 nodes, got {self!r}")

    @property
    def node_count(self) -> int:
        return self.nx * self.ny * self.nz

    def axis_coords(self, axis: int) -> np.ndarray:
        """Node coordinates along one axis (0=x, 1=y, 2=z), in [-1, 1]."""
        n = (self.nx, self.ny, self.nz)[axis]
        return 2.0 * np.arange(n) / (n - 1) - 1.0

    def node_positions(self) -> np.ndarray:
        """All node coordinates, shape (nx*ny*nz, 3), x fastest."""
        zs, ys, xs = np.meshgrid(
            self.axis_coords(2), self.axis_coords(1), self.axis_coords(0),
            indexing="ij",
        )
        return np.column_stack([xs.ravel(), ys.ravel(), zs.ravel()])


@dataclass(frozen=True)
class EnsembleField:
    """N member grids per variable, stored as float32 (d, N, nz, ny, nx).

    Immutable after construction; concurrent read-only access is safe.
    """

    domain: GridDomain
    variables: tuple[str, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float32)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "variables", tuple(self.variables))
        if len(set(self.variables)) != len(self.variables):
            raise DataError(f"duplicate variable names: {self.variables}")
        if vals.ndim != 5:
            raise DataError(f"values must be (d, N, nz, ny, nx), got {vals.shape}")
        d, n, nz, ny, nx = vals.shape
        if d != len(self.variables):
            raise DataError(
                f"{len(self.variables)} variable names but {d} value blocks"
            )
        if (nx, ny, nz) != (self.domain.nx, self.domain.ny, self.domain.nz):
            raise DataError(
                f"grid shape {(nx, ny, nz)} does not match domain {self.domain}"
            )
        if n < 1:
            raise DataError("ensemble needs at least one member")
        if not np.isfinite(vals).all():
            raise DataError("ensemble contains non-finite values")

    @property
    def member_count(self) -> int:
        return self.values.shape[1]

    def variable_index(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise UnknownVariableError(
                f"unknown variable {name!r}; have {list(self.variables)}"
            ) from None

    def member_grids(self, name: str) -> np.ndarray:
        """All member grids for one variable, shape (N, nz, ny, nx)."""
        return self.values[self.variable_index(name)]


def _fractional_index(p: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Map clamped coordinates in [-1,1] to (base index, weight) pairs.

    Weights within _NODE_SNAP of 0 or 1 are snapped so node coordinates
    reproduce stored values exactly.
    """
    u = (np.clip(p, -1.0, 1.0) + 1.0) * 0.5 * (n - 1)
    i0 = np.floor(u).astype(np.int64)
    np.clip(i0, 0, n - 2, out=i0)
    t = u - i0
    t[t < _NODE_SNAP] = 0.0
    t[t > 1.0 - _NODE_SNAP] = 1.0
    return i0, t


def sample_many(field: EnsembleField, variable: str, positions: np.ndarray,
                chunk: int = 8192) -> np.ndarray:
    """Trilinearly interpolate all members at many positions.

    Args:
        field: source ensemble.
        variable: variable name.
        positions: (M, 3) coordinates in Omega; out-of-domain components
            are clamped to the boundary.
        chunk: positions per internal block (memory control only; results
            do not depend on it).

    Returns:
        (M, N) float64 array of interpolated member values.
    """
    grids = field.member_grids(variable)
    pos = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise ParameterError(f"positions must be (M, 3), got {pos.shape}")
    dom = field.domain
    out = np.empty((pos.shape[0], field.member_count), dtype=np.float64)
    for s in range(0, pos.shape[0], chunk):
        block = pos[s:s + chunk]
        ix, tx = _fractional_index(block[:, 0], dom.nx)
        iy, ty = _fractional_index(block[:, 1], dom.ny)
        iz, tz = _fractional_index(block[:, 2], dom.nz)
        acc = np.zeros((block.shape[0], field.member_count), dtype=np.float64)
        for dz in (0, 1):
            wz = tz if dz else 1.0 - tz
            for dy in (0, 1):
                wy = ty if dy else 1.0 - ty
                for dx in (0, 1):
                    wx = tx if dx else 1.0 - tx
                    w = wz * wy * wx
                    corner = grids[:, iz + dz, iy + dy, ix + dx]  # (N, m)
                    acc += w[:, None] * corner.T
        out[s:s + chunk] = acc
    return out


def sample_at(field: EnsembleField, variable: str, position) -> np.ndarray:
    """Sample vector of all member values at one position, shape (N,)."""
    return sample_many(field, variable, np.asarray(position, dtype=np.float64)
                       .reshape(1, 3))[0]


# ---------------------------------------------------------------------------
# synthetic ensembles

@dataclass(frozen=True)
class WhiteNoiseKernel:
    """Independent unit-variance values at every node."""


@dataclass(frozen=True)
class SquaredExponentialKernel:
    """Isotropic squared-exponential covariance exp(-|p-q|^2 / (2 l^2))."""

    length_scale: float

    def __post_init__(self):
        if not self.length_scale > 0:
            raise ParameterError(
                f"length scale must be positive, got {self.length_scale}"
            )


@dataclass(frozen=True)
class LinearMixKernel:
    """Two variables as linear combinations of two shared latent fields.

    Variable 0 is latent z1; variable 1 is w*z1 + sqrt(1-w^2)*z2, so the
    cross-correlation between the variables at equal positions is exactly
    ``weight``. Latents are drawn with ``latent`` (default white noise).
    """

    weight: float
    latent: WhiteNoiseKernel | SquaredExponentialKernel = WhiteNoiseKernel()

    def __post_init__(self):
        if not -1.0 <= self.weight <= 1.0:
            raise ParameterError(f"mix weight must be in [-1, 1], got {self.weight}")


CovarianceKernel = WhiteNoiseKernel | SquaredExponentialKernel | LinearMixKernel

# Desk-scale cap for dense covariance factorization.
_MAX_SYNTHETIC_NODES = 32 ** 3


def _axis_factor(coords: np.ndarray, length_scale: float) -> np.ndarray:
    """Symmetric square root of the 1D squared-exponential covariance."""
    diff = coords[:, None] - coords[None, :]
    cov = np.exp(-0.5 * (diff / length_scale) ** 2)
    lam, vec = np.linalg.eigh(cov)
    lam = np.clip(lam, 0.0, None)
    return (vec * np.sqrt(lam)) @ vec.T


def _draw_gaussian(rng: np.random.Generator, domain: GridDomain, count: int,
                   kernel: WhiteNoiseKernel | SquaredExponentialKernel) -> np.ndarray:
    noise = rng.standard_normal((count, domain.nz, domain.ny, domain.nx))
    if isinstance(kernel, WhiteNoiseKernel):
        return noise
    # Separable kernel: apply the per-axis covariance square roots so the
    # full covariance is the Kronecker product, i.e. the isotropic SE kernel.
    ax = _axis_factor(domain.axis_coords(0), kernel.length_scale)
    ay = _axis_factor(domain.axis_coords(1), kernel.length_scale)
    az = _axis_factor(domain.axis_coords(2), kernel.length_scale)
    out = np.einsum("ab,nzyb->nzya", ax, noise)
    out = np.einsum("ab,nzby->nzay", ay, out)
    out = np.einsum("ab,nbzy->nazy", az, out)
    return out


def generate_synthetic(domain: GridDomain, member_count: int,
                       variables: list[str] | tuple[str, ...],
                       kernel: CovarianceKernel, seed: int) -> EnsembleField:
    """Draw a synthetic Gaussian ensemble, bit-deterministic per seed.

    Members are independent zero-mean Gaussian random fields with the
    requested covariance. Dense factorization limits grids to 32^3 nodes.
    """
    if member_count < 1:
        raise ParameterError("member_count must be positive")
    if domain.node_count > _MAX_SYNTHETIC_NODES:
        raise ParameterError(
            f"synthetic generation supports <= {_MAX_SYNTHETIC_NODES} nodes, "
            f"got {domain.node_count}"
        )
    variables = tuple(variables)
    rng = np.random.default_rng(seed)
    if isinstance(kernel, LinearMixKernel):
        if len(variables) != 2:
            raise ParameterError("linear-mix kernel needs exactly two variables")
        z1 = _draw_gaussian(rng, domain, member_count, kernel.latent)
        z2 = _draw_gaussian(rng, domain, member_count, kernel.latent)
        w = kernel.weight
        mixed = w * z1 + np.sqrt(1.0 - w * w) * z2
        values = np.stack([z1, mixed])
    elif isinstance(kernel, (WhiteNoiseKernel, SquaredExponentialKernel)):
        values = np.stack([
            _draw_gaussian(rng, domain, member_count, kernel)
            for _ in variables
        ])
    else:
        raise ParameterError(f"unknown kernel {kernel!r}")
    return EnsembleField(domain, variables, values.astype(np.float32))


# ---------------------------------------------------------------------------
# NDFE container format

def save_ensemble(field: EnsembleField, path) -> None:
    """Write the NDFE binary container (little-endian, float32 payload)."""
    dom = field.domain
    with open(path, "wb") as fh:
        fh.write(NDFE_MAGIC)
        fh.write(struct.pack("<6I", NDFE_VERSION, dom.nx, dom.ny, dom.nz,
                             field.member_count, len(field.variables)))
        for name in field.variables:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(field.values, dtype="<f4").tobytes())


def load_ensemble(path) -> EnsembleField:
    """Read an NDFE container; validates header, lengths and finiteness."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != NDFE_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {NDFE_MAGIC!r}")
        head = fh.read(24)
        if len(head) != 24:
            raise CorruptFileError("truncated header")
        version, nx, ny, nz, n, d = struct.unpack("<6I", head)
        if version != NDFE_VERSION:
            raise FormatError(f"unsupported NDFE version {version}")
        names = []
        for _ in range(d):
            raw_len = fh.read(2)
            if len(raw_len) != 2:
                raise CorruptFileError("truncated variable table")
            (name_len,) = struct.unpack("<H", raw_len)
            raw = fh.read(name_len)
            if len(raw) != name_len:
                raise CorruptFileError("truncated variable name")
            names.append(raw.decode("utf-8"))
        expected = d * n * nz * ny * nx
        payload = fh.read()
        if len(payload) != expected * 4:
            raise CorruptFileError(
                f"payload holds {len(payload) // 4} float32 values, "
                f"expected {expected}"
            )
    values = np.frombuffer(payload, dtype="<f4").reshape(d, n, nz, ny, nx)
    if not np.isfinite(values).all():
        raise DataError("ensemble file contains non-finite values")
    try:
        domain = GridDomain(nx, ny, nz)
    except ParameterError as exc:
        raise CorruptFileError(str(exc)) from exc
    return EnsembleField(domain, tuple(names), values.copy())
