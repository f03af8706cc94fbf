"""Wearable seismocardiography vital-sign stack.

Synthetic chest-acceleration generation, heartbeat/respiration/pulse-
transit DSP, cuffless blood-pressure calibration, a quantizable
convolutional sepsis-risk model, duty-cycled streaming with consensus
alarms, onset labeling and screening metrics, an energy budget model,
and a framed binary recording format.
"""

__version__ = "0.1.0"

from .bp import BpModel, ErrorStats, SubjectRecord, fit, loo_evaluate
from .dsp import (
    SignalWindow,
    VitalEstimate,
    VitalKind,
    beat_envelope,
    extract_beats,
    heart_rate,
    pulse_transit_time,
    respiratory_rate,
)
from .errors import ScgVitalsError
from .labeling import (
    Metrics,
    OnsetLabel,
    PatientEpisode,
    PatientResult,
    evaluate,
    include,
    label_onset,
    suspicion_window,
)
from .pipeline import EventLog, Frame, Schedule, run_stream
from .power import PowerProfile, TaskSpec, average_power, battery_lifetime
from .quant import QuantModel, calibrate, qforward
from .siggen import AccStream, ScgConfig, generate_scg
from .tcn import TcnModel, VitalSeries, forward, receptive_field

__all__ = [
    "AccStream",
    "BpModel",
    "ErrorStats",
    "EventLog",
    "Frame",
    "Metrics",
    "OnsetLabel",
    "PatientEpisode",
    "PatientResult",
    "PowerProfile",
    "QuantModel",
    "ScgConfig",
    "ScgVitalsError",
    "Schedule",
    "SignalWindow",
    "SubjectRecord",
    "TaskSpec",
    "TcnModel",
    "VitalEstimate",
    "VitalKind",
    "VitalSeries",
    "average_power",
    "battery_lifetime",
    "beat_envelope",
    "calibrate",
    "evaluate",
    "extract_beats",
    "fit",
    "forward",
    "generate_scg",
    "heart_rate",
    "include",
    "label_onset",
    "loo_evaluate",
    "pulse_transit_time",
    "qforward",
    "receptive_field",
    "respiratory_rate",
    "run_stream",
    "suspicion_window",
    "__version__",
]
