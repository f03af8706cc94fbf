"""Streaming orchestration: duty-cycled DSP, vital ring, consensus alarm.

The runner consumes timestamped frames (dual-site accelerometer blocks
and/or direct vital readings), executes the heartbeat chain on every 2 s
window and the respiration chain on every 30 s window, averages the
estimates over 30 s report periods, and pushes one vital vector per
period into the 4 h ring buffer.  Once the ring is full the model runs
every stride; k consecutive positive windows latch the alarm.

Report periods close only when a frame later than the period boundary
arrives; there is no end-of-stream flush.  Periods with no fresh value
for an already-observed channel are padded by last-value hold and
logged as gaps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from statistics import fmean

import numpy as np

from . import dsp
from .bp import BpModel, estimate as bp_estimate
from .errors import ValidationError
from .quant import QuantModel, qforward
from .siggen import AccStream, Site
from .tcn import INPUT_LEN, TcnModel, VitalSeries, forward

PREDICTION_THRESHOLD = 0.5
STRIDES_MIN = (10, 30, 60)
DEFAULT_BP_MODEL = BpModel(slope=-1.5, intercept=160.0)
# seeds for channels the source never reports (resting adult values)
DEFAULT_VITALS = {"hr_bpm": 75.0, "sbp_mmhg": 120.0, "rr_brpm": 14.0, "temp_c": 36.8}
CHANNELS = tuple(DEFAULT_VITALS)


@dataclass(frozen=True)
class Schedule:
    """Task cadences, all in seconds except the model stride."""

    hr_bp_period_s: float = 2.0
    rr_period_s: float = 30.0
    vitals_report_period_s: float = 30.0
    nn_stride_min: int = 30

    def __post_init__(self):
        for name in ("hr_bp_period_s", "rr_period_s", "vitals_report_period_s"):
            if not getattr(self, name) > 0:
                raise ValidationError(name, "must be > 0")
        if self.nn_stride_min not in STRIDES_MIN:
            raise ValidationError("nn_stride_min", f"must be one of {STRIDES_MIN}")
        if self.nn_stride_min * 60 < self.vitals_report_period_s:
            raise ValidationError("nn_stride_min", "stride below vitals sample period")

    @property
    def nn_stride_s(self) -> float:
        return self.nn_stride_min * 60.0


@dataclass
class ConsensusState:
    """k-of-k consecutive positive windows raise a latched alarm."""

    k: int
    run_length: int = 0
    alarmed: bool = False
    alarm_time: float | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k", "must be >= 1")


def step_consensus(st: ConsensusState, pred: int, t: float) -> ConsensusState:
    """Advance by one window; idempotent once alarmed."""
    if st.alarmed:
        return st
    run = st.run_length + 1 if pred else 0
    if run >= st.k:
        return ConsensusState(st.k, run, True, t)
    return ConsensusState(st.k, run, False, None)


@dataclass
class Frame:
    """One source batch: acc blocks per site and/or direct vital readings."""

    t_s: float
    acc1: AccStream | None = None
    acc2: AccStream | None = None
    vitals: dict[str, float] | None = None


@dataclass
class Event:
    t: float
    type: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {"t": self.t, "type": self.type, "payload": self.payload},
            sort_keys=True,
            separators=(",", ":"),
        )


@dataclass
class EventLog:
    events: list[Event] = field(default_factory=list)

    def add(self, t: float, type_: str, **payload) -> None:
        self.events.append(Event(round(float(t), 6), type_, payload))

    def of_type(self, type_: str) -> list[Event]:
        return [e for e in self.events if e.type == type_]

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)

    def write(self, path: str) -> None:
        with open(path, "w") as f:
            f.write(self.to_jsonl())


def load_jsonl(path: str) -> EventLog:
    log = EventLog()
    with open(path) as f:
        for line in f:
            if line.strip():
                d = json.loads(line)
                log.events.append(Event(d["t"], d["type"], d["payload"]))
    return log


class _SiteBuffer:
    """Contiguous per-site sample accumulator with absolute start time."""

    def __init__(self):
        self.fs: float | None = None
        self.t0: float | None = None
        self.ax = self.ay = self.az = None

    def append(self, t_s: float, acc: AccStream) -> bool:
        """Add a frame; returns False on a discontinuity (buffer restarts)."""
        if self.fs is None:
            self.fs, self.t0 = acc.fs, t_s
            self.ax, self.ay, self.az = acc.ax.copy(), acc.ay.copy(), acc.az.copy()
            return True
        expected = self.t0 + len(self.ax) / self.fs
        contiguous = abs(t_s - expected) <= 0.5 / self.fs and acc.fs == self.fs
        if not contiguous:
            self.fs, self.t0 = acc.fs, t_s
            self.ax, self.ay, self.az = acc.ax.copy(), acc.ay.copy(), acc.az.copy()
            return False
        self.ax = np.concatenate([self.ax, acc.ax])
        self.ay = np.concatenate([self.ay, acc.ay])
        self.az = np.concatenate([self.az, acc.az])
        return True

    def covers(self, t_start: float, t_end: float) -> bool:
        if self.fs is None or self.t0 is None or self.t0 > t_start + 0.5 / self.fs:
            return False
        return self.t0 + len(self.ax) / self.fs >= t_end - 0.5 / self.fs

    def slice(self, t_start: float, t_end: float, site: Site) -> AccStream:
        i0 = int(round((t_start - self.t0) * self.fs))
        i1 = int(round((t_end - self.t0) * self.fs))
        i0, i1 = max(i0, 0), min(i1, len(self.ax))
        return AccStream(self.fs, self.ax[i0:i1], self.ay[i0:i1], self.az[i0:i1], site)

    def trim(self, t_keep: float) -> None:
        if self.fs is None or self.t0 is None or self.t0 >= t_keep:
            return
        drop = int((t_keep - self.t0) * self.fs)
        if drop > 0:
            self.ax, self.ay, self.az = self.ax[drop:], self.ay[drop:], self.az[drop:]
            self.t0 += drop / self.fs


@dataclass
class _PeriodAccumulator:
    values: dict = field(default_factory=lambda: {c: [] for c in CHANNELS})

    def add(self, channel: str, value: float) -> None:
        self.values[channel].append(value)

    def mean_or_none(self, channel: str):
        v = self.values[channel]
        return fmean(v) if v else None


def run_stream(
    schedule: Schedule,
    model: TcnModel | QuantModel,
    source,
    k: int = 8,
    bp_model: BpModel = DEFAULT_BP_MODEL,
    mcu_proxy: bool = False,
) -> EventLog:
    """Drive the full monitoring loop over an iterable of Frames.

    Vital estimates, 30 s report averages, gaps, predictions, and the
    alarm are appended to the returned EventLog in time order.
    Deterministic for a deterministic source.
    """
    log = EventLog()
    buf1, buf2 = _SiteBuffer(), _SiteBuffer()
    series = VitalSeries(n_channels=len(CHANNELS), capacity=INPUT_LEN)
    consensus = ConsensusState(k=k)
    acc = _PeriodAccumulator()
    last_values = dict(DEFAULT_VITALS)
    observed: set[str] = set()
    hr_window_next = 0.0
    rr_window_next = 0.0
    report_next = schedule.vitals_report_period_s
    next_inference: float | None = None

    def predict(window: np.ndarray) -> float:
        if isinstance(model, QuantModel):
            return qforward(model, window)
        return forward(model, window)

    def run_hr_windows(now: float) -> None:
        nonlocal hr_window_next
        period = schedule.hr_bp_period_s
        while hr_window_next + period <= now:
            t0, t1 = hr_window_next, hr_window_next + period
            if buf1.covers(t0, t1):
                try:
                    p1 = dsp.extract_beats(buf1.slice(t0, t1, Site.ACC1_xiphoid), mcu_proxy)
                    hr = dsp.heart_rate(p1, window_start=t0)
                    acc.add("hr_bpm", hr.value)
                    log.add(t1, "vital", kind="hr_bpm", value=round(hr.value, 4))
                    if buf2.covers(t0, t1):
                        p2 = dsp.extract_beats(
                            buf2.slice(t0, t1, Site.ACC2_sternal), mcu_proxy
                        )
                        ptt = dsp.pulse_transit_time(p1, p2, window_start=t0)
                        sbp = bp_estimate(bp_model, ptt.value)
                        acc.add("sbp_mmhg", sbp)
                        log.add(t1, "vital", kind="ptt_ms", value=round(ptt.value, 4))
                        log.add(t1, "vital", kind="sbp_mmhg", value=round(sbp, 4))
                except dsp.InsufficientPeaksError:
                    pass
                except dsp.NoMatchError:
                    pass
            hr_window_next = t1

    def run_rr_windows(now: float) -> None:
        nonlocal rr_window_next
        period = schedule.rr_period_s
        while rr_window_next + period <= now:
            t0, t1 = rr_window_next, rr_window_next + period
            if buf1.covers(t0, t1):
                z = buf1.slice(t0, t1, Site.ACC1_xiphoid)
                try:
                    rr = dsp.respiratory_rate(dsp.SignalWindow(z.fs, z.az), window_start=t0)
                    acc.add("rr_brpm", rr.value)
                    log.add(t1, "vital", kind="rr_brpm", value=round(rr.value, 4))
                except (dsp.NoBreathError, dsp.ParameterError):
                    pass
            rr_window_next = t1

    def close_reports(now: float) -> None:
        # a period [T-30, T) is complete once a frame with t >= T arrives:
        # any later sample belongs to a later period
        nonlocal report_next, acc, consensus, next_inference
        while report_next <= now + 1e-9:
            t_close = report_next
            vector = []
            gaps = []
            for ch in CHANNELS:
                mean = acc.mean_or_none(ch)
                if mean is None:
                    if ch in observed:
                        gaps.append(ch)
                    vector.append(last_values[ch])
                else:
                    observed.add(ch)
                    last_values[ch] = mean
                    vector.append(mean)
            if gaps:
                log.add(t_close, "gap", channels=gaps)
            series.push(vector)
            log.add(
                t_close,
                "report",
                **{ch: round(v, 4) for ch, v in zip(CHANNELS, vector)},
            )
            acc = _PeriodAccumulator()
            if series.full:
                if next_inference is None:
                    next_inference = t_close
                if t_close + 1e-9 >= next_inference:
                    p = predict(series.window())
                    pred = int(p >= PREDICTION_THRESHOLD)
                    log.add(t_close, "prediction", probability=round(p, 6), label=pred)
                    consensus = step_consensus(consensus, pred, t_close)
                    if consensus.alarmed and consensus.alarm_time == t_close:
                        log.add(t_close, "alarm", k=consensus.k)
                    next_inference = t_close + schedule.nn_stride_s
            report_next = t_close + schedule.vitals_report_period_s

    for frame in source:
        now = frame.t_s
        # frame arrival is the clock: close every boundary at or before it
        # first, so the frame's own readings land in the following period
        if frame.acc1 is not None:
            if not buf1.append(now, frame.acc1):
                log.add(now, "gap", channels=["acc1_stream"])
        if frame.acc2 is not None:
            if not buf2.append(now, frame.acc2):
                log.add(now, "gap", channels=["acc2_stream"])
        run_hr_windows(now)
        run_rr_windows(now)
        close_reports(now)
        if frame.vitals:
            for ch, value in frame.vitals.items():
                if ch not in CHANNELS:
                    raise ValidationError("vitals", f"unknown channel {ch!r}")
                acc.add(ch, float(value))
                log.add(now, "vital", kind=ch, value=round(float(value), 4))
        keep = min(hr_window_next, rr_window_next)
        buf1.trim(keep)
        buf2.trim(keep)
    return log


def frames_from_chunks(chunks) -> list[Frame]:
    """Pair decoded datastore chunks into runner frames by timestamp."""
    from . import datastore as ds

    by_time: dict[int, Frame] = {}
    for chunk in chunks:
        t_s = chunk.timestamp_us / 1e6
        frame = by_time.setdefault(chunk.timestamp_us, Frame(t_s=t_s))
        if chunk.type_tag == ds.ChunkType.ACC_FRAME:
            site, fs, ax, ay, az = ds.unpack_acc_frame(chunk.payload)
            stream = AccStream(
                fs, ax, ay, az, Site.ACC1_xiphoid if site == 1 else Site.ACC2_sternal
            )
            if site == 1:
                frame.acc1 = stream
            else:
                frame.acc2 = stream
        elif chunk.type_tag == ds.ChunkType.VITALS:
            vitals = dict(ds.unpack_vitals(chunk.payload))
            frame.vitals = {**(frame.vitals or {}), **vitals}
    return [by_time[t] for t in sorted(by_time)]


def vitals_frames(
    times_s,
    hr=None,
    sbp=None,
    rr=None,
    temp=None,
) -> list[Frame]:
    """Direct vitals-level frames (no DSP); None channels are omitted."""
    named = {"hr_bpm": hr, "sbp_mmhg": sbp, "rr_brpm": rr, "temp_c": temp}
    frames = []
    for i, t in enumerate(times_s):
        vitals = {ch: float(arr[i]) for ch, arr in named.items() if arr is not None}
        frames.append(Frame(t_s=float(t), vitals=vitals or None))
    return frames
