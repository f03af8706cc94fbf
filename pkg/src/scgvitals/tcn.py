"""Multi-head temporal convolutional network for sepsis probability.

One small TCN per vital sign (heart rate, systolic blood pressure,
respiratory rate, core body temperature), each four blocks of causal
dilated convolution -> batch norm -> ReLU -> max pool, a per-head dense
layer of 32 neurons, then concatenation into a final sigmoid unit.  The
input is a ring buffer holding 4 hours of vitals at 2 samples a minute
(480 samples per channel).

Inference only: weights come from a file, a seeded generator, or the
hand-built threshold demo model.  No training code.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BufferNotReadyError,
    CrcMismatchError,
    DimensionError,
    FormatError,
    TruncatedError,
    ValidationError,
)

MODEL_MAGIC = b"TCNM"
MODEL_VERSION = 1
BN_EPS = 1e-5
KERNEL = 3
FILTERS = 32
N_LAYERS = 4
INPUT_LEN = 480
POOL = 2
VITAL_CHANNELS = ("hr_bpm", "sbp_mmhg", "rr_brpm", "temp_c")
VITAL_PERIOD_S = 30.0


# ---------------------------------------------------------------- primitives


def causal_conv(x: np.ndarray, w: np.ndarray, b: np.ndarray, dilation: int) -> np.ndarray:
    """Causal dilated 1-D convolution.

    x: [in_ch, L]; w: [out_ch, in_ch, k]; left zero-padding (k-1)*dilation
    keeps the output length L and makes y[:, t] depend only on x[:, :t+1].
    """
    in_ch, length = x.shape
    out_ch, w_in, k = w.shape
    if w_in != in_ch:
        raise DimensionError(f"weight in_ch {w_in} != input channels {in_ch}")
    pad = (k - 1) * dilation
    xp = np.concatenate([np.zeros((in_ch, pad)), x], axis=1)
    y = np.tile(b[:, None].astype(float), (1, length))
    for j in range(k):
        y += w[:, :, j].astype(float) @ xp[:, j * dilation : j * dilation + length]
    return y


def batch_norm(x: np.ndarray, gamma, beta, mean, var, eps: float = BN_EPS) -> np.ndarray:
    """Inference-form batch norm with folded running statistics."""
    gamma, beta = np.asarray(gamma, float), np.asarray(beta, float)
    mean, var = np.asarray(mean, float), np.asarray(var, float)
    if np.any(var <= 0):
        raise ValidationError("var", "batch-norm variance must be > 0")
    scale = gamma / np.sqrt(var + eps)
    return x * scale[:, None] + (beta - mean * scale)[:, None]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def max_pool(x: np.ndarray, k: int = POOL, stride: int = POOL) -> np.ndarray:
    """Non-overlapping max pool along time; trailing remainder dropped."""
    length = x.shape[1]
    n_out = (length - k) // stride + 1
    cols = np.stack([x[:, i : i + n_out * stride : stride] for i in range(k)])
    return cols.max(axis=0)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# ------------------------------------------------------------------- layers


@dataclass
class ConvBlock:
    """conv weights [32, in_ch, 3] + bias + batch-norm running stats."""

    weights: np.ndarray
    bias: np.ndarray
    dilation: int
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray

    def __post_init__(self):
        out_ch, _, k = self.weights.shape
        if k != KERNEL:
            raise ValidationError("weights", f"kernel must be {KERNEL}, got {k}")
        if out_ch != FILTERS:
            raise ValidationError("weights", f"filters must be {FILTERS}, got {out_ch}")
        for name in ("bias", "gamma", "beta", "running_mean", "running_var"):
            if getattr(self, name).shape != (out_ch,):
                raise ValidationError(name, f"must have shape ({out_ch},)")
        if np.any(self.running_var <= 0):
            raise ValidationError("running_var", "must be > 0")

    @property
    def in_ch(self) -> int:
        return self.weights.shape[1]


@dataclass
class Dense:
    weights: np.ndarray  # [out, in]
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValidationError("dense", "weights [out,in] and bias [out] required")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.weights.astype(float) @ x + self.bias.astype(float)


@dataclass
class TcnHead:
    """Four conv blocks with dilations 1,2,4,8 plus a 32-unit dense layer."""

    blocks: list[ConvBlock]
    dense: Dense

    def __post_init__(self):
        if len(self.blocks) != N_LAYERS:
            raise ValidationError("blocks", f"need {N_LAYERS} layers")
        for i, blk in enumerate(self.blocks):
            if blk.dilation != 2**i:
                raise ValidationError("dilation", f"layer {i} must have dilation {2**i}")
        if self.blocks[0].in_ch != 1:
            raise ValidationError("blocks", "first layer must take 1 channel")
        if self.dense.weights.shape[0] != FILTERS:
            raise ValidationError("dense", f"head dense must output {FILTERS}")


@dataclass
class TcnModel:
    heads: list[TcnHead]
    final_dense: Dense
    input_len: int = INPUT_LEN

    def __post_init__(self):
        if not self.heads:
            raise ValidationError("heads", "need at least one head")
        n = len(self.heads)
        if self.final_dense.weights.shape != (1, n * FILTERS):
            raise ValidationError("final_dense", f"must be [1, {n * FILTERS}]")

    @property
    def n_heads(self) -> int:
        return len(self.heads)


@dataclass
class VitalSeries:
    """Fixed-capacity ring of vital vectors; reads blocked until full."""

    n_channels: int = len(VITAL_CHANNELS)
    capacity: int = INPUT_LEN
    period_s: float = VITAL_PERIOD_S
    _data: np.ndarray = field(init=False, repr=False)
    _write: int = field(default=0, init=False, repr=False)
    _count: int = field(default=0, init=False, repr=False)

    def __post_init__(self):
        self._data = np.zeros((self.n_channels, self.capacity))

    def push(self, v) -> None:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n_channels,):
            raise ValidationError("v", f"need {self.n_channels} channels, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("v", "NaN/Inf channel rejected")
        self._data[:, self._write] = v
        self._write = (self._write + 1) % self.capacity
        self._count = min(self._count + 1, self.capacity)

    @property
    def full(self) -> bool:
        return self._count == self.capacity

    @property
    def fill_count(self) -> int:
        return self._count

    def window(self) -> np.ndarray:
        """Chronological [n_channels, capacity] snapshot."""
        if not self.full:
            raise BufferNotReadyError(f"{self._count}/{self.capacity} samples")
        return np.roll(self._data, -self._write, axis=1).copy()


# ------------------------------------------------------------------ forward


def head_forward(head: TcnHead, x: np.ndarray) -> np.ndarray:
    """480-sample channel -> 32 features (conv stack + flatten + dense)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (INPUT_LEN,):
        raise DimensionError(f"input must be ({INPUT_LEN},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("x", "input must be finite")
    act = x[None, :]
    for blk in head.blocks:
        act = causal_conv(act, blk.weights, blk.bias, blk.dilation)
        act = batch_norm(act, blk.gamma, blk.beta, blk.running_mean, blk.running_var)
        act = relu(act)
        act = max_pool(act)
    return head.dense(act.reshape(-1))  # flatten [ch, t] row-major


def forward(model: TcnModel, v: VitalSeries | np.ndarray) -> float:
    """Sepsis probability from a full vital window."""
    if isinstance(v, VitalSeries):
        window = v.window()
    else:
        window = np.asarray(v, dtype=float)
    if window.shape != (model.n_heads, model.input_len):
        raise DimensionError(
            f"window must be ({model.n_heads}, {model.input_len}), got {window.shape}"
        )
    features = np.concatenate(
        [head_forward(h, window[i]) for i, h in enumerate(model.heads)]
    )
    return float(sigmoid(model.final_dense(features))[0])


def receptive_field(arch) -> int:
    """Input samples influencing one output sample of the conv stack.

    Accepts a TcnModel or a list of (kernel, dilation, pool_stride)
    triples.  Recursion: r starts at 1 with unit stride s; a conv layer
    adds (k-1)*d*s; a pool of size p adds (p-1)*s and multiplies s by p.
    """
    if isinstance(arch, TcnModel):
        layers = [(KERNEL, blk.dilation, POOL) for blk in arch.heads[0].blocks]
    else:
        layers = list(arch)
    r, s = 1, 1
    for kernel, dilation, pool_stride in layers:
        r += (kernel - 1) * dilation * s
        if pool_stride > 1:
            r += (pool_stride - 1) * s
            s *= pool_stride
    return r


# ------------------------------------------------------------- construction


def _identity_bn(n: int) -> dict:
    # var chosen so sqrt(var + eps) == 1 exactly
    return dict(
        gamma=np.ones(n, np.float32),
        beta=np.zeros(n, np.float32),
        running_mean=np.zeros(n, np.float32),
        running_var=np.full(n, 1.0 - BN_EPS, np.float32),
    )


def random_model(seed: int, n_heads: int = 4, scale: float = 0.3) -> TcnModel:
    """Seeded random reference model (for oracles; not trained)."""
    rng = np.random.default_rng(seed)

    def f32(*shape, s=scale):
        return (rng.standard_normal(shape) * s).astype(np.float32)

    heads = []
    for _ in range(n_heads):
        blocks = []
        in_ch = 1
        for layer in range(N_LAYERS):
            fan = in_ch * KERNEL
            blocks.append(
                ConvBlock(
                    weights=f32(FILTERS, in_ch, KERNEL, s=scale / np.sqrt(fan)),
                    bias=f32(FILTERS, s=0.05),
                    dilation=2**layer,
                    gamma=(1.0 + 0.2 * rng.standard_normal(FILTERS)).astype(np.float32),
                    beta=f32(FILTERS, s=0.05),
                    running_mean=f32(FILTERS, s=0.1),
                    running_var=rng.uniform(0.5, 2.0, FILTERS).astype(np.float32),
                )
            )
            in_ch = FILTERS
        flat = FILTERS * (INPUT_LEN // POOL**N_LAYERS)
        dense = Dense(f32(FILTERS, flat, s=scale / np.sqrt(flat)), f32(FILTERS, s=0.05))
        heads.append(TcnHead(blocks, dense))
    final = Dense(
        f32(1, n_heads * FILTERS, s=scale / np.sqrt(n_heads * FILTERS)),
        f32(1, s=0.05),
    )
    return TcnModel(heads, final)


# weights of the demo score over (HR, SBP, RR, temp) head means
DEMO_SCORE_WEIGHTS = (0.05, -0.05, 0.1, 0.5)
DEMO_SCORE_BIAS = -20.0


def threshold_demo_model() -> TcnModel:
    """Hand-built model scoring a linear combination of vital means.

    Each head's first filter chain passes a causally smoothed copy of
    its channel through the stack; the head dense averages it, so
    feature 0 approximates the channel mean.  The final layer computes
    0.05*HR - 0.05*SBP + 0.1*RR + 0.5*T - 20: about -2.4 for healthy
    resting vitals and positive once vitals drift septic (high HR/RR/
    temperature, falling SBP), crossing 0.5 probability at score 0.
    """
    heads = []
    for _ in range(4):
        blocks = []
        in_ch = 1
        for layer in range(N_LAYERS):
            w = np.zeros((FILTERS, in_ch, KERNEL), np.float32)
            if layer == 0:
                w[0, 0, :] = 1.0 / 3.0  # causal 3-tap average
            else:
                w[0, 0, 2] = 1.0  # pass-through of the current sample
            blocks.append(
                ConvBlock(
                    weights=w,
                    bias=np.zeros(FILTERS, np.float32),
                    dilation=2**layer,
                    **_identity_bn(FILTERS),
                )
            )
            in_ch = FILTERS
        n_t = INPUT_LEN // POOL**N_LAYERS
        dw = np.zeros((FILTERS, FILTERS * n_t), np.float32)
        dw[0, :n_t] = 1.0 / n_t  # feature 0 = mean of channel 0 (flatten is ch-major)
        dense = Dense(dw, np.zeros(FILTERS, np.float32))
        heads.append(TcnHead(blocks, dense))
    fw = np.zeros((1, 4 * FILTERS), np.float32)
    for h, wgt in enumerate(DEMO_SCORE_WEIGHTS):
        fw[0, h * FILTERS] = wgt
    final = Dense(fw, np.array([DEMO_SCORE_BIAS], np.float32))
    return TcnModel(heads, final)


# ---------------------------------------------------------------- model I/O


def _pack_f32(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


def _dense_bytes(d: Dense) -> bytes:
    out_dim, in_dim = d.weights.shape
    return (
        struct.pack("<HH", in_dim, out_dim)
        + _pack_f32(d.weights)
        + _pack_f32(d.bias)
    )


def save_model(model: TcnModel, path: str) -> None:
    """Serialize to the versioned TCNM container with trailing CRC32."""
    out = bytearray()
    out += MODEL_MAGIC
    out += struct.pack("<HBH", MODEL_VERSION, model.n_heads, model.input_len)
    for head in model.heads:
        out += struct.pack("<B", len(head.blocks))
        for blk in head.blocks:
            out_ch, in_ch, k = blk.weights.shape
            out += struct.pack("<HHBH", in_ch, out_ch, k, blk.dilation)
            out += _pack_f32(blk.weights)  # [out][in][k] order
            out += _pack_f32(blk.bias)
            out += _pack_f32(blk.gamma)
            out += _pack_f32(blk.beta)
            out += _pack_f32(blk.running_mean)
            out += _pack_f32(blk.running_var)
        out += _dense_bytes(head.dense)
    out += _dense_bytes(model.final_dense)
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    with open(path, "wb") as f:
        f.write(bytes(out))


class _Reader:
    """Byte cursor that raises offset-bearing errors on underrun."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedError(
                f"need {n} bytes, have {len(self.data) - self.pos}", offset=self.pos
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def f32(self, *shape) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(self.take(4 * n), dtype="<f4").reshape(shape).copy()


def _read_dense(r: _Reader) -> Dense:
    in_dim, out_dim = r.unpack("<HH")
    return Dense(r.f32(out_dim, in_dim), r.f32(out_dim))


def load_model(path: str) -> TcnModel:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4:
        raise TruncatedError("file shorter than magic", offset=0)
    if data[:4] != MODEL_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}", offset=0)
    if len(data) < 8:
        raise TruncatedError("missing CRC", offset=len(data))
    stored = struct.unpack("<I", data[-4:])[0]
    actual = zlib.crc32(data[:-4])
    if stored != actual:
        raise CrcMismatchError(
            f"model CRC {stored:#010x} != computed {actual:#010x}",
            offset=len(data) - 4,
        )
    r = _Reader(data[:-4])
    r.take(4)
    version, n_heads, input_len = r.unpack("<HBH")
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    heads = []
    try:
        for _ in range(n_heads):
            (n_layers,) = r.unpack("<B")
            blocks = []
            for _ in range(n_layers):
                layer_off = r.pos
                in_ch, out_ch, k, dilation = r.unpack("<HHBH")
                if k != KERNEL:
                    raise FormatError(f"kernel must be {KERNEL}, got {k}", offset=layer_off)
                blocks.append(
                    ConvBlock(
                        weights=r.f32(out_ch, in_ch, k),
                        bias=r.f32(out_ch),
                        dilation=dilation,
                        gamma=r.f32(out_ch),
                        beta=r.f32(out_ch),
                        running_mean=r.f32(out_ch),
                        running_var=r.f32(out_ch),
                    )
                )
            heads.append(TcnHead(blocks, _read_dense(r)))
        final = _read_dense(r)
    except ValidationError as e:
        raise FormatError(f"invariant violation: {e}", offset=r.pos) from e
    if r.pos != len(r.data):
        raise FormatError(f"{len(r.data) - r.pos} trailing bytes", offset=r.pos)
    return TcnModel(heads, final, input_len=input_len)
