"""Bipartite neural dependence field.

Each position is embedded as [raw | Fourier | hash-grid features], passed
through a variable-specific encoder MLP; the two encoder outputs are
merged elementwise (multiplication in the reference architecture) and
decoded to a scalar dependence estimate. Self-correlation models share
one encoder and one grid between both branches, which makes the output
exactly symmetric under argument exchange.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, replace

import numpy as np

from .encoding import FourierConfig, HashGrid, HashGridConfig, fourier_encode
from .errors import ConfigError, FormatError, ModelCorruptError, ShapeError
from .nn import Mlp

NDFM_MAGIC = b"NDFM"
NDFM_VERSION = 1

MERGE_MODES = ("multiply", "concat", "add", "absdiff")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture descriptor; cheap to validate without allocating."""

    var_mu: str = "v"
    var_nu: str = "v"
    measure_kind: str = "pearson"
    merge: str = "multiply"
    shared_encoder: bool | None = None  # None: share iff var_mu == var_nu
    fourier_octaves: int = 4
    levels: int = 6
    base_resolution: int = 16
    growth: float = 2.0
    log2_table_size: int = 16
    features_per_level: int = 2
    encoder_layers: int = 4  # 0 selects the grid-only (encoder-less) ablation
    decoder_layers: int = 4
    channels: int = 32

    def __post_init__(self):
        if self.merge not in MERGE_MODES:
            raise ConfigError(f"merge must be one of {MERGE_MODES}, got {self.merge!r}")
        if self.encoder_layers < 0 or self.decoder_layers < 1:
            raise ConfigError("need encoder_layers >= 0 and decoder_layers >= 1")
        if self.channels < 1:
            raise ConfigError("channels must be >= 1")
        if self.shared and self.var_mu != self.var_nu:
            raise ConfigError("shared encoders require a self-correlation pair")
        # delegate range checks
        self.fourier_config()
        self.grid_config()

    @property
    def shared(self) -> bool:
        if self.shared_encoder is None:
            return self.var_mu == self.var_nu
        return self.shared_encoder

    def fourier_config(self) -> FourierConfig:
        return FourierConfig(self.fourier_octaves)

    def grid_config(self) -> HashGridConfig:
        return HashGridConfig(self.levels, self.base_resolution, self.growth,
                              self.log2_table_size, self.features_per_level)

    @property
    def embed_dim(self) -> int:
        return 3 + 6 * self.fourier_octaves + self.levels * self.features_per_level

    @property
    def encoder_output_dim(self) -> int:
        return self.channels if self.encoder_layers else self.embed_dim

    @property
    def decoder_input_dim(self) -> int:
        base = self.encoder_output_dim
        return 2 * base if self.merge == "concat" else base

    def encoder_widths(self) -> list[int]:
        return [self.embed_dim] + [self.channels] * self.encoder_layers

    def decoder_widths(self) -> list[int]:
        return ([self.decoder_input_dim]
                + [self.channels] * (self.decoder_layers - 1) + [1])

    def parameter_bytes(self) -> int:
        """Serialized size: hash-table bytes plus MLP bytes (float32)."""
        grids = 1 if self.shared else 2
        table_bytes = grids * self.grid_config().table_bytes
        def mlp_params(widths):
            return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))
        mlp = mlp_params(self.decoder_widths())
        mlp += (1 if self.shared else 2) * mlp_params(self.encoder_widths())
        return table_bytes + 4 * mlp


class NdfModel:
    """Instantiated NDF; immutable during inference, mutated only by training."""

    def __init__(self, spec: ModelSpec, grid_mu: HashGrid, grid_nu: HashGrid,
                 enc_mu: Mlp, enc_nu: Mlp, decoder: Mlp):
        if spec.shared and (grid_mu is not grid_nu or enc_mu is not enc_nu):
            raise ConfigError("shared spec requires aliased grid and encoder")
        if enc_mu.output_dim != enc_nu.output_dim:
            raise ConfigError("encoder output widths differ")
        if decoder.input_dim != spec.decoder_input_dim:
            raise ConfigError(
                f"decoder expects {decoder.input_dim} inputs, spec says "
                f"{spec.decoder_input_dim}"
            )
        if decoder.output_dim != 1:
            raise ConfigError("decoder must emit one scalar")
        self.spec = spec
        self.fourier = spec.fourier_config()
        self.grid_mu = grid_mu
        self.grid_nu = grid_nu
        self.enc_mu = enc_mu
        self.enc_nu = enc_nu
        self.decoder = decoder

    # -- construction -------------------------------------------------------

    @classmethod
    def build(cls, spec: ModelSpec, seed: int = 0, dtype=np.float32) -> "NdfModel":
        rng = np.random.default_rng(seed)
        grid_mu = HashGrid.initialize(spec.grid_config(), rng, dtype)
        enc_mu = Mlp.initialize(spec.encoder_widths(), "snake_alt", rng, dtype)
        if spec.shared:
            grid_nu, enc_nu = grid_mu, enc_mu
        else:
            grid_nu = HashGrid.initialize(spec.grid_config(), rng, dtype)
            enc_nu = Mlp.initialize(spec.encoder_widths(), "snake_alt", rng, dtype)
        decoder = Mlp.initialize(spec.decoder_widths(), "snake_alt", rng, dtype)
        return cls(spec, grid_mu, grid_nu, enc_mu, enc_nu, decoder)

    @property
    def dtype(self):
        return self.grid_mu.tables.dtype

    def parameters(self) -> list[np.ndarray]:
        """Trainable arrays in canonical (serialization) order."""
        params = [self.grid_mu.tables]
        if not self.spec.shared:
            params.append(self.grid_nu.tables)
        params.extend(self.enc_mu.parameters())
        if not self.spec.shared:
            params.extend(self.enc_nu.parameters())
        params.extend(self.decoder.parameters())
        return params

    def parameter_bytes(self) -> int:
        return int(sum(4 * p.size for p in self.parameters()))

    def validate_finite(self) -> None:
        for p in self.parameters():
            if not np.isfinite(p).all():
                raise ModelCorruptError("model contains non-finite parameters")

    # -- forward / backward -------------------------------------------------

    def embed(self, grid: HashGrid, positions: np.ndarray) -> np.ndarray:
        """[raw(3) | fourier(6L) | hash(levels*F)] in the model dtype."""
        pos = np.atleast_2d(np.asarray(positions, dtype=np.float64))
        if pos.shape[1] != 3:
            raise ShapeError(f"positions must be (B, 3), got {pos.shape}")
        clamped = np.clip(pos, -1.0, 1.0)
        parts = [clamped, fourier_encode(clamped, self.fourier),
                 grid.encode(clamped)]
        return np.concatenate(parts, axis=1).astype(self.dtype)

    def forward(self, p_mu, p_nu, exact: bool = True) -> np.ndarray:
        """Batched dependence estimates, shape (B,).

        Row results are independent of the batch partitioning when
        ``exact`` is set (the default).
        """
        self.validate_finite()
        a = self.enc_mu.forward(self.embed(self.grid_mu, p_mu), exact=exact)
        b = self.enc_nu.forward(self.embed(self.grid_nu, p_nu), exact=exact)
        return self.decoder.forward(_merge(self.spec.merge, a, b),
                                    exact=exact)[:, 0]

    def forward_pair(self, p_mu, p_nu) -> float:
        return float(self.forward(np.reshape(p_mu, (1, 3)),
                                  np.reshape(p_nu, (1, 3)))[0])

    def forward_trace(self, p_mu, p_nu, exact: bool = False):
        """Forward pass keeping every intermediate needed for backward."""
        p_mu = np.atleast_2d(np.asarray(p_mu, dtype=np.float64))
        p_nu = np.atleast_2d(np.asarray(p_nu, dtype=np.float64))
        emb_mu = self.embed(self.grid_mu, p_mu)
        emb_nu = self.embed(self.grid_nu, p_nu)
        a, tr_mu = self.enc_mu.forward_trace(emb_mu, exact=exact)
        b, tr_nu = self.enc_nu.forward_trace(emb_nu, exact=exact)
        merged = _merge(self.spec.merge, a, b)
        y, tr_dec = self.decoder.forward_trace(merged, exact=exact)
        trace = {
            "p_mu": p_mu, "p_nu": p_nu,
            "emb_mu": emb_mu, "emb_nu": emb_nu,
            "a": a, "b": b,
            "tr_mu": tr_mu, "tr_nu": tr_nu, "tr_dec": tr_dec,
        }
        return y[:, 0], trace

    def backward(self, trace, upstream: np.ndarray) -> list[np.ndarray]:
        """Gradients for every trainable array, aligned with parameters().

        Shared models accumulate both branches into the single shared set.
        """
        up = np.asarray(upstream)
        if up.ndim != 1 or up.shape[0] != trace["a"].shape[0]:
            raise ShapeError("upstream must be one scalar per batch row")
        dec_w, dec_b, d_merged = self.decoder.backward(trace["tr_dec"],
                                                       up[:, None])
        d_a, d_b = _merge_backward(self.spec.merge, trace["a"], trace["b"],
                                   d_merged)
        mu_w, mu_b, d_emb_mu = self.enc_mu.backward(trace["tr_mu"], d_a)
        nu_w, nu_b, d_emb_nu = self.enc_nu.backward(trace["tr_nu"], d_b)
        hash_from = 3 + self.fourier.output_dim
        g_grid_mu = self.grid_mu.backward(trace["p_mu"],
                                          d_emb_mu[:, hash_from:])
        g_grid_nu = self.grid_nu.backward(trace["p_nu"],
                                          d_emb_nu[:, hash_from:])
        if self.spec.shared:
            grads = [g_grid_mu + g_grid_nu]
            grads.extend(_interleave(_add_lists(mu_w, nu_w),
                                     _add_lists(mu_b, nu_b)))
        else:
            grads = [g_grid_mu, g_grid_nu]
            grads.extend(_interleave(mu_w, mu_b))
            grads.extend(_interleave(nu_w, nu_b))
        grads.extend(_interleave(dec_w, dec_b))
        return grads

    # -- derived views ------------------------------------------------------

    def swapped_roles(self) -> "NdfModel":
        """The (nu, mu) model sharing this model's parameters.

        Satisfies swapped.forward(p1, p2) == self.forward(p2, p1); exact
        for the commutative merges, up to summation rounding for concat
        (the first decoder layer's input blocks must be reordered).
        """
        spec = replace(self.spec, var_mu=self.spec.var_nu,
                       var_nu=self.spec.var_mu)
        decoder = self.decoder
        if self.spec.merge == "concat" and not self.spec.shared:
            half = self.spec.encoder_output_dim
            w0 = decoder.weights[0]
            swapped_w0 = np.concatenate([w0[half:], w0[:half]], axis=0)
            decoder = Mlp([swapped_w0] + decoder.weights[1:],
                          decoder.biases, decoder.act)
        if self.spec.shared:
            return NdfModel(spec, self.grid_mu, self.grid_nu, self.enc_mu,
                            self.enc_nu, decoder)
        return NdfModel(spec, self.grid_nu, self.grid_mu, self.enc_nu,
                        self.enc_mu, decoder)

    def copy(self) -> "NdfModel":
        grid_mu = HashGrid(self.grid_mu.config, self.grid_mu.tables.copy())
        enc_mu = self.enc_mu.copy()
        if self.spec.shared:
            grid_nu, enc_nu = grid_mu, enc_mu
        else:
            grid_nu = HashGrid(self.grid_nu.config, self.grid_nu.tables.copy())
            enc_nu = self.enc_nu.copy()
        return NdfModel(self.spec, grid_mu, grid_nu, enc_mu, enc_nu,
                        self.decoder.copy())


def _merge(mode: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if mode == "multiply":
        return a * b
    if mode == "concat":
        return np.concatenate([a, b], axis=1)
    if mode == "add":
        return a + b
    return np.abs(a - b)


def _merge_backward(mode: str, a, b, upstream):
    if mode == "multiply":
        return upstream * b, upstream * a
    if mode == "concat":
        half = a.shape[1]
        return upstream[:, :half], upstream[:, half:]
    if mode == "add":
        return upstream, upstream.copy()
    sign = np.sign(a - b)
    return upstream * sign, -upstream * sign


def _interleave(ws, bs):
    out = []
    for w, b in zip(ws, bs):
        out.extend((w, b))
    return out


def _add_lists(xs, ys):
    return [x + y for x, y in zip(xs, ys)]


# ---------------------------------------------------------------------------
# NDFM container

def save_model(model: NdfModel, path) -> None:
    """Write the NDFM container; shared parameters are stored once."""
    spec = model.spec
    header = dict(asdict(spec))
    header["shared_encoder"] = spec.shared
    header["encoder_widths"] = spec.encoder_widths()
    header["decoder_widths"] = spec.decoder_widths()
    raw_header = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(NDFM_MAGIC)
        fh.write(struct.pack("<2I", NDFM_VERSION, len(raw_header)))
        fh.write(raw_header)
        for p in model.parameters():
            fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_model(path) -> NdfModel:
    """Read an NDFM container; fails without constructing a partial model."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != NDFM_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {NDFM_MAGIC!r}")
        head = fh.read(8)
        if len(head) != 8:
            raise FormatError("truncated NDFM header")
        version, header_len = struct.unpack("<2I", head)
        if version != NDFM_VERSION:
            raise FormatError(f"unsupported NDFM version {version}")
        raw_header = fh.read(header_len)
        if len(raw_header) != header_len:
            raise FormatError("truncated NDFM descriptor")
        try:
            header = json.loads(raw_header.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"bad NDFM descriptor: {exc}") from exc
        blob = fh.read()
    spec_fields = {k: header[k] for k in ModelSpec.__dataclass_fields__}
    spec = ModelSpec(**spec_fields)
    values = np.frombuffer(blob, dtype="<f4")

    cursor = 0

    def take(shape):
        nonlocal cursor
        n = int(np.prod(shape))
        if cursor + n > values.size:
            raise FormatError("NDFM payload truncated")
        out = values[cursor:cursor + n].reshape(shape).copy()
        cursor += n
        return out

    gcfg = spec.grid_config()
    tshape = (gcfg.levels, gcfg.table_size, gcfg.features_per_level)

    def take_mlp(widths):
        ws, bs = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            ws.append(take((fan_in, fan_out)))
            bs.append(take((fan_out,)))
        if not ws:
            return Mlp([], [], "snake_alt", passthrough_dim=widths[0])
        return Mlp(ws, bs, "snake_alt")

    grid_mu = HashGrid(gcfg, take(tshape))
    grid_nu = grid_mu if spec.shared else HashGrid(gcfg, take(tshape))
    enc_mu = take_mlp(spec.encoder_widths())
    enc_nu = enc_mu if spec.shared else take_mlp(spec.encoder_widths())
    decoder = take_mlp(spec.decoder_widths())
    if cursor != values.size:
        raise FormatError(f"NDFM payload has {values.size - cursor} stray values")
    model = NdfModel(spec, grid_mu, grid_nu, enc_mu, enc_nu, decoder)
    model.validate_finite()
    return model
