"""Pulse-transit-time to systolic-blood-pressure calibration.

A single pooled linear model over (PTT, SBP) pairs from a calibration
cohort, evaluated leave-one-subject-out: each subject is predicted by a
line fitted to everyone else.  Errors are signed, estimate minus
reference, so the mean exposes bias and the SD the spread.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFitError, ParameterError, ValidationError


@dataclass(frozen=True)
class BpModel:
    """SBP = slope * PTT_ms + intercept."""

    slope: float
    intercept: float

    def __post_init__(self):
        if not (np.isfinite(self.slope) and np.isfinite(self.intercept)):
            raise ValidationError("model", "slope/intercept must be finite")


@dataclass
class SubjectRecord:
    subject_id: str
    segments: list[tuple[float, float]]  # (mean_ptt_ms, reference_sbp_mmhg)

    def __post_init__(self):
        if not self.segments:
            raise ValidationError("segments", "need at least one segment")
        for ptt, _ in self.segments:
            if not ptt > 0:
                raise ValidationError("segments", f"PTT must be > 0, got {ptt}")


@dataclass(frozen=True)
class ErrorStats:
    mean_mmhg: float
    sd_mmhg: float
    n: int


def _pool(records: list[SubjectRecord]) -> tuple[np.ndarray, np.ndarray]:
    ptt = np.array([p for r in records for p, _ in r.segments], dtype=float)
    sbp = np.array([s for r in records for _, s in r.segments], dtype=float)
    return ptt, sbp


def fit(records: list[SubjectRecord]) -> BpModel:
    """Ordinary least squares over all pooled (PTT, SBP) pairs."""
    ptt, sbp = _pool(records)
    if len(ptt) < 2 or np.ptp(ptt) == 0.0:
        raise DegenerateFitError("need >= 2 pooled points with distinct PTT")
    slope, intercept = np.polyfit(ptt, sbp, 1)
    return BpModel(float(slope), float(intercept))


def estimate(model: BpModel, ptt_ms: float) -> float:
    if not ptt_ms > 0:
        raise ParameterError(f"PTT must be > 0, got {ptt_ms}")
    return model.slope * ptt_ms + model.intercept


def loo_evaluate(records: list[SubjectRecord]) -> ErrorStats:
    """Leave-one-subject-out error statistics; n subjects, n fits."""
    if len(records) < 3:
        raise ParameterError(f"need >= 3 subjects, got {len(records)}")
    errors = []
    for i, held_out in enumerate(records):
        model = fit(records[:i] + records[i + 1 :])
        for ptt, sbp in held_out.segments:
            errors.append(estimate(model, ptt) - sbp)
    err = np.array(errors)
    return ErrorStats(float(err.mean()), float(err.std(ddof=1)), len(err))


def read_subjects_csv(path: str) -> list[SubjectRecord]:
    """Parse `subject_id,ptt_ms,sbp_mmhg` rows, one record per subject."""
    by_subject: dict[str, list[tuple[float, float]]] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        required = {"subject_id", "ptt_ms", "sbp_mmhg"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValidationError("csv", f"header must contain {sorted(required)}")
        for row in reader:
            by_subject.setdefault(row["subject_id"], []).append(
                (float(row["ptt_ms"]), float(row["sbp_mmhg"]))
            )
    return [SubjectRecord(sid, segs) for sid, segs in by_subject.items()]


def write_subjects_csv(path: str, records: list[SubjectRecord]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["subject_id", "ptt_ms", "sbp_mmhg"])
        for r in records:
            for ptt, sbp in r.segments:
                writer.writerow([r.subject_id, f"{ptt:.6g}", f"{sbp:.6g}"])


def synthetic_cohort(
    n_subjects: int = 10,
    segments_per_subject: int = 10,
    slope: float = -1.5,
    intercept: float = 160.0,
    noise_sd: float = 5.0,
    seed: int = 0,
) -> list[SubjectRecord]:
    """Cohort with a linear PTT-SBP relation plus Gaussian reference noise."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_subjects):
        ptts = rng.uniform(20.0, 80.0, size=segments_per_subject)
        sbps = slope * ptts + intercept + rng.normal(0.0, noise_sd, size=segments_per_subject)
        records.append(SubjectRecord(f"S{i:02d}", list(zip(ptts.tolist(), sbps.tolist()))))
    return records
