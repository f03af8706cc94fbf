"""Post-training int8 quantization and integer inference for the TCN.

Batch norm is folded into the convolution weights, weights are
quantized per-tensor symmetric (zero-point 0), activations per-tensor
asymmetric from calibrated min/max ranges, and biases become int32 in
the accumulator's scale.  The integer path accumulates in int32,
requantizes between layers with a float64 multiplier under a fixed
rounding rule (half away from zero, saturating), and applies the only
float nonlinearity, the sigmoid, at the very end.  Identical inputs
give bit-identical integer activations on any IEEE-754 platform.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    CrcMismatchError,
    DimensionError,
    FormatError,
    ParameterError,
    TruncatedError,
    ValidationError,
)
from .tcn import (
    BN_EPS,
    FILTERS,
    KERNEL,
    TcnModel,
    VitalSeries,
    causal_conv,
    max_pool,
    relu,
    sigmoid,
)

QMODEL_MAGIC = b"TCNQ"
QMODEL_VERSION = 1
SCALE_FLOOR = 1e-8


def _round_half_away(x: np.ndarray) -> np.ndarray:
    """Deterministic scalar rounding: 0.5 always rounds away from zero."""
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def _saturate_i8(x: np.ndarray) -> np.ndarray:
    return np.clip(x, -128, 127).astype(np.int8)


@dataclass(frozen=True)
class QuantTensor:
    """int8 values with dequant(v) = scale * (v - zero_point)."""

    values: np.ndarray
    scale: float
    zero_point: int

    def __post_init__(self):
        if self.values.dtype != np.int8:
            raise ValidationError("values", "must be int8")
        if not self.scale > 0:
            raise ValidationError("scale", "must be > 0")
        if not -128 <= self.zero_point <= 127:
            raise ValidationError("zero_point", "must fit int8")

    def dequant(self) -> np.ndarray:
        return self.scale * (self.values.astype(np.int32) - self.zero_point)


def quantize_tensor(x: np.ndarray, symmetric: bool) -> QuantTensor:
    """Affine int8 mapping; symmetric for weights, asymmetric for activations."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ParameterError("empty input")
    if not np.all(np.isfinite(x)):
        raise ValidationError("x", "must be finite")
    if symmetric:
        # scales kept at float32 precision so the on-disk form is exact
        scale = float(np.float32(max(float(np.max(np.abs(x))) / 127.0, SCALE_FLOOR)))
        zp = 0
    else:
        scale, zp = _activation_params(float(np.min(x)), float(np.max(x)))
    values = _saturate_i8(_round_half_away(x / scale) + zp)
    return QuantTensor(values, scale, zp)


def _activation_params(lo: float, hi: float) -> tuple[float, int]:
    # the range must contain zero so the zero point stays inside int8
    # (and so zero padding is exactly representable)
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    scale = float(np.float32(max((hi - lo) / 255.0, SCALE_FLOOR)))
    zp = int(np.clip(_round_half_away(np.array(-128.0 - lo / scale)), -128, 127))
    return scale, zp


# ------------------------------------------------------------ folded layers


def fold_bn(blk) -> tuple[np.ndarray, np.ndarray]:
    """Fuse inference-form batch norm into conv weights and bias."""
    scale = blk.gamma.astype(float) / np.sqrt(blk.running_var.astype(float) + BN_EPS)
    w = blk.weights.astype(float) * scale[:, None, None]
    b = (blk.bias.astype(float) - blk.running_mean.astype(float)) * scale + blk.beta.astype(
        float
    )
    return w, b


@dataclass
class QConvBlock:
    weights: QuantTensor  # [out, in, k], symmetric
    bias: np.ndarray  # int32, scale = w_scale * in_scale
    dilation: int
    out_scale: float
    out_zp: int


@dataclass
class QDense:
    weights: QuantTensor  # [out, in], symmetric
    bias: np.ndarray  # int32


@dataclass
class QHead:
    in_scale: float
    in_zp: int
    blocks: list[QConvBlock]
    dense: QDense


@dataclass
class QuantModel:
    heads: list[QHead]
    feat_scale: float
    feat_zp: int
    final_dense: QDense
    input_len: int

    @property
    def n_heads(self) -> int:
        return len(self.heads)


# -------------------------------------------------------------- calibration


def _float_head_trace(model: TcnModel, x: np.ndarray) -> list[np.ndarray]:
    """Per-head folded-BN float activations: input, 4 post-pool, features."""
    traces = []
    for i, head in enumerate(model.heads):
        acts = [x[i][None, :]]
        act = x[i][None, :]
        for blk in head.blocks:
            w, b = fold_bn(blk)
            act = max_pool(relu(causal_conv(act, w, b, blk.dilation)))
            acts.append(act)
        acts.append(head.dense(act.reshape(-1)))
        traces.append(acts)
    return traces


def calibrate(model: TcnModel, samples: list) -> QuantModel:
    """Freeze activation ranges from float forwards over the sample set."""
    if not samples:
        raise ParameterError("need at least one calibration sample")
    windows = []
    for s in samples:
        windows.append(s.window() if isinstance(s, VitalSeries) else np.asarray(s, float))
    n_heads = model.n_heads
    n_blocks = len(model.heads[0].blocks)
    lo = [[np.inf] * (n_blocks + 1) for _ in range(n_heads)]
    hi = [[-np.inf] * (n_blocks + 1) for _ in range(n_heads)]
    feat_lo, feat_hi = np.inf, -np.inf
    for win in windows:
        if win.shape != (n_heads, model.input_len):
            raise DimensionError(f"sample shape {win.shape} mismatch")
        traces = _float_head_trace(model, win)
        for h in range(n_heads):
            for j in range(n_blocks + 1):
                lo[h][j] = min(lo[h][j], float(traces[h][j].min()))
                hi[h][j] = max(hi[h][j], float(traces[h][j].max()))
            feat_lo = min(feat_lo, float(traces[h][-1].min()))
            feat_hi = max(feat_hi, float(traces[h][-1].max()))

    heads = []
    for h, head in enumerate(model.heads):
        in_scale, in_zp = _activation_params(lo[h][0], hi[h][0])
        qblocks = []
        prev_scale = in_scale
        for j, blk in enumerate(head.blocks):
            w, b = fold_bn(blk)
            wq = quantize_tensor(w, symmetric=True)
            bias_q = _round_half_away(b / (wq.scale * prev_scale)).astype(np.int32)
            out_scale, out_zp = _activation_params(lo[h][j + 1], hi[h][j + 1])
            qblocks.append(QConvBlock(wq, bias_q, blk.dilation, out_scale, out_zp))
            prev_scale = out_scale
        dw = quantize_tensor(head.dense.weights.astype(float), symmetric=True)
        dbias = _round_half_away(
            head.dense.bias.astype(float) / (dw.scale * prev_scale)
        ).astype(np.int32)
        heads.append(QHead(in_scale, in_zp, qblocks, QDense(dw, dbias)))

    feat_scale, feat_zp = _activation_params(feat_lo, feat_hi)
    fw = quantize_tensor(model.final_dense.weights.astype(float), symmetric=True)
    fbias = _round_half_away(
        model.final_dense.bias.astype(float) / (fw.scale * feat_scale)
    ).astype(np.int32)
    return QuantModel(heads, feat_scale, feat_zp, QDense(fw, fbias), model.input_len)


# ---------------------------------------------------------- integer forward


def _qconv(x_q: np.ndarray, x_zp: int, blk: QConvBlock) -> np.ndarray:
    """int32 accumulator of the causal dilated conv on zero-point-shifted input."""
    w = blk.weights.values.astype(np.int32)  # [out, in, k]
    out_ch, in_ch, k = w.shape
    length = x_q.shape[1]
    pad = (k - 1) * blk.dilation
    # padding encodes real zero: quantized value = zero point
    xp = np.full((in_ch, length + pad), x_zp, dtype=np.int32)
    xp[:, pad:] = x_q
    xs = xp - x_zp
    acc = np.tile(blk.bias[:, None], (1, length))
    for j in range(k):
        acc = acc + w[:, :, j] @ xs[:, j * blk.dilation : j * blk.dilation + length]
    return acc


def _requant(acc: np.ndarray, mult: float, zp: int) -> np.ndarray:
    return _saturate_i8(_round_half_away(acc * mult) + zp)


def qforward(qm: QuantModel, v) -> float:
    """Integer-path sepsis probability; only the sigmoid runs in float."""
    window = v.window() if isinstance(v, VitalSeries) else np.asarray(v, float)
    if window.shape != (qm.n_heads, qm.input_len):
        raise DimensionError(
            f"window must be ({qm.n_heads}, {qm.input_len}), got {window.shape}"
        )
    features = np.empty(qm.n_heads * FILTERS, dtype=np.int32)
    for h, head in enumerate(qm.heads):
        x_q = _saturate_i8(
            _round_half_away(window[h] / head.in_scale) + head.in_zp
        ).astype(np.int32)[None, :]
        zp = head.in_zp
        scale = head.in_scale
        for blk in head.blocks:
            acc = _qconv(x_q, zp, blk)
            acc = np.maximum(acc, 0)  # ReLU on the int32 accumulator
            acc = max_pool(acc)
            mult = blk.weights.scale * scale / blk.out_scale
            x_q = _requant(acc, mult, blk.out_zp).astype(np.int32)
            zp, scale = blk.out_zp, blk.out_scale
        flat = (x_q.reshape(-1) - zp).astype(np.int32)
        acc = head.dense.weights.values.astype(np.int32) @ flat + head.dense.bias
        mult = head.dense.weights.scale * scale / qm.feat_scale
        features[h * FILTERS : (h + 1) * FILTERS] = _requant(
            acc, mult, qm.feat_zp
        ).astype(np.int32)
    fshift = features - qm.feat_zp
    acc = qm.final_dense.weights.values.astype(np.int32) @ fshift + qm.final_dense.bias
    logit = float(acc[0]) * qm.final_dense.weights.scale * qm.feat_scale
    return float(sigmoid(np.array([logit]))[0])


# ------------------------------------------------------------------ payload


def weight_payload_bytes(model) -> int:
    """Bytes of conv + dense weight arrays (biases and stats excluded)."""
    if isinstance(model, TcnModel):
        per = 4  # float32
        heads = [
            ([blk.weights for blk in h.blocks], h.dense.weights) for h in model.heads
        ]
        final = model.final_dense.weights
    elif isinstance(model, QuantModel):
        per = 1  # int8
        heads = [
            ([blk.weights.values for blk in h.blocks], h.dense.weights.values)
            for h in model.heads
        ]
        final = model.final_dense.weights.values
    else:
        raise ParameterError(f"unsupported model type {type(model).__name__}")
    n = sum(w.size for blocks, dw in heads for w in blocks) + sum(
        dw.size for _, dw in heads
    )
    n += final.size
    return n * per


# ---------------------------------------------------------------- model I/O


def _qdense_bytes(d: QDense) -> bytes:
    out_dim, in_dim = d.weights.values.shape
    return (
        struct.pack("<HH", in_dim, out_dim)
        + d.weights.values.tobytes()
        + struct.pack("<f", d.weights.scale)
        + np.ascontiguousarray(d.bias, dtype="<i4").tobytes()
    )


def save_qmodel(qm: QuantModel, path: str) -> None:
    out = bytearray()
    out += QMODEL_MAGIC
    out += struct.pack("<HBH", QMODEL_VERSION, qm.n_heads, qm.input_len)
    for head in qm.heads:
        out += struct.pack("<fb", head.in_scale, head.in_zp)
        out += struct.pack("<B", len(head.blocks))
        for blk in head.blocks:
            out_ch, in_ch, k = blk.weights.values.shape
            out += struct.pack("<HHBH", in_ch, out_ch, k, blk.dilation)
            out += blk.weights.values.tobytes()  # [out][in][k] order
            out += struct.pack("<f", blk.weights.scale)
            out += np.ascontiguousarray(blk.bias, dtype="<i4").tobytes()
            out += struct.pack("<fb", blk.out_scale, blk.out_zp)
        out += _qdense_bytes(head.dense)
    out += struct.pack("<fb", qm.feat_scale, qm.feat_zp)
    out += _qdense_bytes(qm.final_dense)
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    with open(path, "wb") as f:
        f.write(bytes(out))


def load_qmodel(path: str) -> QuantModel:
    from .tcn import _Reader  # same byte-cursor with offset-bearing errors

    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4:
        raise TruncatedError("file shorter than magic", offset=0)
    if data[:4] != QMODEL_MAGIC:
        raise FormatError(f"bad magic {data[: 4]!r}", offset=0)
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
    if version != QMODEL_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)

    def read_i8(*shape) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(r.take(n), dtype=np.int8).reshape(shape).copy()

    def read_i32(n) -> np.ndarray:
        return np.frombuffer(r.take(4 * n), dtype="<i4").reshape(n).copy()

    def read_qdense() -> QDense:
        in_dim, out_dim = r.unpack("<HH")
        w = read_i8(out_dim, in_dim)
        (scale,) = r.unpack("<f")
        bias = read_i32(out_dim)
        return QDense(QuantTensor(w, float(scale), 0), bias)

    try:
        heads = []
        for _ in range(n_heads):
            in_scale, in_zp = r.unpack("<fb")
            (n_layers,) = r.unpack("<B")
            blocks = []
            for _ in range(n_layers):
                layer_off = r.pos
                in_ch, out_ch, k, dilation = r.unpack("<HHBH")
                if k != KERNEL:
                    raise FormatError(f"kernel must be {KERNEL}, got {k}", offset=layer_off)
                w = read_i8(out_ch, in_ch, k)
                (w_scale,) = r.unpack("<f")
                bias = read_i32(out_ch)
                out_scale, out_zp = r.unpack("<fb")
                blocks.append(
                    QConvBlock(
                        QuantTensor(w, float(w_scale), 0),
                        bias,
                        dilation,
                        float(out_scale),
                        int(out_zp),
                    )
                )
            heads.append(QHead(float(in_scale), int(in_zp), blocks, read_qdense()))
        feat_scale, feat_zp = r.unpack("<fb")
        final = read_qdense()
    except ValidationError as e:
        raise FormatError(f"invariant violation: {e}", offset=r.pos) from e
    if r.pos != len(r.data):
        raise FormatError(f"{len(r.data) - r.pos} trailing bytes", offset=r.pos)
    return QuantModel(heads, float(feat_scale), int(feat_zp), final, input_len)
