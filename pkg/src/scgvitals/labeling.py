"""Sepsis-3 onset labeling, cohort filtering, and screening metrics.

An episode is EMR-style data for one stay: hourly SOFA scores, antibiotic
administration times, and vital streams.  Onset is the earliest hour
inside any antibiotic suspicion window where the hourly SOFA delta
reaches 2.  Inclusion rules mirror a standard adult-ICU screen: stay of
at least 24 h, age 18+, no antibiotics in the first 7 h, and for
positives an onset at hour 4 or later.  The evaluator reduces
per-patient alarm outcomes to sensitivity, specificity, and median
time-to-sepsis with a seeded bootstrap confidence interval.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import LabelingError, UndefinedMetricError, ValidationError
from .pipeline import CHANNELS, Frame, Schedule, run_stream

SUSPICION_BEFORE_H = 48.0
SUSPICION_AFTER_H = 24.0
SOFA_DELTA = 2
MIN_LOS_H = 24.0
MIN_AGE_Y = 18.0
EARLY_ABX_H = 7.0
MIN_ONSET_H = 4.0
TRAIN_CAP_H = 48.0
WARMUP_H = 4.0
VITALS_PERIOD_S = 30.0

HEALTHY_VITALS = {"hr_bpm": 75.0, "sbp_mmhg": 120.0, "rr_brpm": 14.0, "temp_c": 36.8}
SEPTIC_VITALS = {"hr_bpm": 108.0, "sbp_mmhg": 92.0, "rr_brpm": 25.0, "temp_c": 39.3}
VITAL_JITTER = {"hr_bpm": 2.0, "sbp_mmhg": 3.0, "rr_brpm": 1.0, "temp_c": 0.1}


@dataclass
class PatientEpisode:
    """One stay: hourly SOFA, antibiotic times, and 30 s vital streams."""

    patient_id: str
    age_years: float
    los_hours: float
    sofa: np.ndarray  # hourly, index = hour from admission
    antibiotic_times_h: list[float]
    vitals: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.sofa = np.asarray(self.sofa, dtype=float)
        if not self.los_hours > 0:
            raise ValidationError("los_hours", "must be > 0")
        if len(self.sofa) < int(self.los_hours) + 1:
            raise ValidationError(
                "sofa", f"{len(self.sofa)} hourly scores < stay of {self.los_hours} h"
            )
        for t in self.antibiotic_times_h:
            if not 0 <= t <= self.los_hours:
                raise ValidationError("antibiotic_times_h", f"{t} outside stay")


@dataclass(frozen=True)
class OnsetLabel:
    positive: bool
    onset_hour: float | None
    window_labels: tuple

    def __post_init__(self):
        if self.positive != (self.onset_hour is not None):
            raise ValidationError("onset_hour", "defined iff positive")
        if not self.positive and any(self.window_labels):
            raise ValidationError("window_labels", "1 labels require a positive episode")


def suspicion_window(abx_time_h: float) -> tuple[float, float]:
    """Infection-suspicion interval around one antibiotic administration."""
    if abx_time_h < 0:
        raise ValidationError("abx_time_h", "must be >= 0")
    return (max(0.0, abx_time_h - SUSPICION_BEFORE_H), abx_time_h + SUSPICION_AFTER_H)


def label_onset(
    ep: PatientEpisode,
    stride_min: int = 30,
    baseline: str = "delta",
) -> OnsetLabel:
    """Earliest qualifying SOFA rise inside any suspicion window.

    baseline="delta" (canonical) uses the hour-over-hour first
    difference; baseline="window-min" measures each hour against the
    running minimum since the window opened.
    """
    if baseline not in ("delta", "window-min"):
        raise ValidationError("baseline", f"unknown mode {baseline!r}")
    hours = min(len(ep.sofa) - 1, int(ep.los_hours))
    if not np.all(np.isfinite(ep.sofa[: hours + 1])):
        raise LabelingError(f"{ep.patient_id}: SOFA series has gaps")
    onset = None
    for abx in sorted(ep.antibiotic_times_h):
        start, end = suspicion_window(abx)
        if baseline == "delta":
            lo = max(1, int(np.ceil(start)))
            hi = min(hours, int(np.floor(end)))
            for h in range(lo, hi + 1):
                if ep.sofa[h] - ep.sofa[h - 1] >= SOFA_DELTA:
                    onset = float(h)
                    break
        else:
            lo = max(0, int(np.ceil(start)))
            hi = min(hours, int(np.floor(end)))
            running = np.inf
            for h in range(lo, hi + 1):
                running = min(running, ep.sofa[h])
                if ep.sofa[h] - running >= SOFA_DELTA:
                    onset = float(h)
                    break
        if onset is not None:
            break
    stride_h = stride_min / 60.0
    n_windows = (
        int(np.floor((ep.los_hours - WARMUP_H) / stride_h)) + 1
        if ep.los_hours >= WARMUP_H
        else 0
    )
    labels = tuple([1 if onset is not None else 0] * n_windows)
    return OnsetLabel(onset is not None, onset, labels)


def include(ep: PatientEpisode, label: OnsetLabel) -> tuple[bool, str | None]:
    """Inclusion decision with the first failing rule's name."""
    if ep.los_hours < MIN_LOS_H:
        return False, "los<24h"
    if ep.age_years < MIN_AGE_Y:
        return False, "age<18"
    if any(t < EARLY_ABX_H for t in ep.antibiotic_times_h):
        return False, "early-antibiotics"
    if label.positive and label.onset_hour < MIN_ONSET_H:
        return False, "onset<4h"
    return True, None


def truncate_stay(ep: PatientEpisode, cap_h: float = TRAIN_CAP_H) -> PatientEpisode:
    """Training-split cap: clip the stay (SOFA, abx, vitals) at cap_h."""
    if ep.los_hours <= cap_h:
        return ep
    n_samples = int(round(cap_h * 3600.0 / VITALS_PERIOD_S))
    return PatientEpisode(
        patient_id=ep.patient_id,
        age_years=ep.age_years,
        los_hours=cap_h,
        sofa=ep.sofa[: int(cap_h) + 1].copy(),
        antibiotic_times_h=[t for t in ep.antibiotic_times_h if t <= cap_h],
        vitals={ch: v[:n_samples].copy() for ch, v in ep.vitals.items()},
    )


def rebalance(
    episodes: list[PatientEpisode],
    labels: list[OnsetLabel],
    positive_frac: float = 0.139,
    seed: int = 0,
) -> list[int]:
    """Indices of a control-subsampled cohort hitting the target balance.

    Keeps every positive and draws controls without replacement so that
    positives make up positive_frac of the result (rounded down).
    """
    if not 0 < positive_frac < 1:
        raise ValidationError("positive_frac", "must be in (0, 1)")
    pos = [i for i, lab in enumerate(labels) if lab.positive]
    neg = [i for i, lab in enumerate(labels) if not lab.positive]
    if not pos:
        raise ValidationError("labels", "no positive episodes to balance around")
    n_neg = min(len(neg), int(len(pos) * (1.0 - positive_frac) / positive_frac))
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(len(neg), size=n_neg, replace=False).tolist())
    return sorted(pos + [neg[i] for i in chosen])


# ------------------------------------------------------------------ metrics


@dataclass(frozen=True)
class PatientResult:
    patient_id: str
    positive: bool
    onset_hour: float | None
    alarm_hour: float | None


@dataclass(frozen=True)
class Metrics:
    sensitivity: float
    specificity: float
    median_time_to_sepsis_h: float | None
    ci: dict
    n_positive: int
    n_negative: int


def _metric_values(results: list[PatientResult]):
    pos = [r for r in results if r.positive]
    neg = [r for r in results if not r.positive]
    sens = sum(1 for r in pos if r.alarm_hour is not None) / len(pos) if pos else None
    spec = sum(1 for r in neg if r.alarm_hour is None) / len(neg) if neg else None
    tts = [
        r.onset_hour - r.alarm_hour
        for r in pos
        if r.alarm_hour is not None and r.onset_hour is not None
    ]
    med = float(np.median(tts)) if tts else None
    return sens, spec, med


def evaluate(
    results: list[PatientResult],
    n_boot: int = 1000,
    seed: int = 0,
) -> Metrics:
    """Cohort screening metrics with seeded bootstrap 95% CIs.

    Time to sepsis is onset_hour - alarm_hour per alarmed positive, so
    early alarms score positive hours.
    """
    n_pos = sum(1 for r in results if r.positive)
    n_neg = len(results) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"need both classes, got {n_pos} positive / {n_neg} negative"
        )
    # canonical order makes the bootstrap CIs permutation-invariant too
    results = sorted(results, key=lambda r: r.patient_id)
    sens, spec, med = _metric_values(results)
    rng = np.random.default_rng(seed)
    boot = {"sensitivity": [], "specificity": [], "median_time_to_sepsis_h": []}
    for _ in range(n_boot):
        idx = rng.integers(0, len(results), size=len(results))
        s, p, m = _metric_values([results[i] for i in idx])
        if s is not None:
            boot["sensitivity"].append(s)
        if p is not None:
            boot["specificity"].append(p)
        if m is not None:
            boot["median_time_to_sepsis_h"].append(m)
    ci = {}
    for name, vals in boot.items():
        if vals:
            lo, hi = np.percentile(vals, [2.5, 97.5])
            ci[name] = (float(lo), float(hi))
        else:
            ci[name] = None
    return Metrics(sens, spec, med, ci, n_pos, n_neg)


# ---------------------------------------------------------- synthetic data


def synthetic_episode(
    patient_id: str,
    septic: bool,
    seed,
    los_hours: float = 48.0,
    onset_hour: float = 30.0,
    drift_hours: float = 6.0,
    drift_end_lead_h: float = 6.0,
) -> PatientEpisode:
    """One construction-ground-truth episode with 30 s vital streams.

    Septic episodes ramp every vital from healthy to septic over
    drift_hours, finishing drift_end_lead_h before onset_hour (vitals
    deteriorate ahead of the charted SOFA jump), carry a SOFA jump of 2
    at the onset hour, and an antibiotic time placing the onset inside
    its suspicion window.
    """
    rng = np.random.default_rng(seed)
    n = int(round(los_hours * 3600.0 / VITALS_PERIOD_S))
    t_h = np.arange(n) * VITALS_PERIOD_S / 3600.0
    vitals = {}
    ramp_start = onset_hour - drift_end_lead_h - drift_hours
    for ch in CHANNELS:
        base = np.full(n, HEALTHY_VITALS[ch])
        if septic:
            ramp = np.clip((t_h - ramp_start) / drift_hours, 0.0, 1.0)
            base = base + ramp * (SEPTIC_VITALS[ch] - HEALTHY_VITALS[ch])
        vitals[ch] = base + rng.normal(0.0, VITAL_JITTER[ch], size=n)
    hours = int(los_hours) + 1
    steps = rng.integers(-1, 2, size=hours)  # walk keeps hourly deltas < 2
    sofa = np.clip(np.cumsum(steps), 0, 1).astype(float)
    if septic:
        h = int(round(onset_hour))
        sofa[h:] = sofa[h - 1] + SOFA_DELTA
        abx = max(EARLY_ABX_H, onset_hour - float(rng.uniform(0.0, 20.0)))
        abx_times = [float(abx)]
    else:
        abx_times = []
    return PatientEpisode(
        patient_id=patient_id,
        age_years=float(rng.uniform(20.0, 90.0)),
        los_hours=los_hours,
        sofa=sofa.astype(float),
        antibiotic_times_h=abx_times,
        vitals=vitals,
    )


def synthetic_cohort(
    n: int,
    seed: int = 0,
    positive_frac: float = 0.35,
) -> list[PatientEpisode]:
    """Deterministic mixed cohort; episode i is septic iff i mod round(1/frac) == 0."""
    period = max(1, int(round(1.0 / positive_frac)))
    episodes = []
    for i in range(n):
        septic = i % period == 0
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        los = float(rng.uniform(36.0, 60.0))
        onset = float(rng.uniform(12.0, los - 8.0))
        episodes.append(
            synthetic_episode(
                f"P{i:04d}",
                septic,
                np.random.SeedSequence([seed, i, 1]),
                los_hours=los,
                onset_hour=onset if septic else 30.0,
            )
        )
    return episodes


def episode_frames(ep: PatientEpisode) -> list[Frame]:
    """Vitals-level runner frames at the episode's native 30 s cadence."""
    lens = {len(v) for v in ep.vitals.values()}
    if len(lens) != 1:
        raise ValidationError("vitals", "channel streams must have equal length")
    n = lens.pop()
    frames = []
    for i in range(n):
        frames.append(
            Frame(
                t_s=i * VITALS_PERIOD_S,
                vitals={ch: float(ep.vitals[ch][i]) for ch in ep.vitals},
            )
        )
    return frames


def screen_episode(
    ep: PatientEpisode,
    model,
    label: OnsetLabel | None = None,
    k: int = 8,
    stride_min: int = 30,
) -> tuple[PatientResult, "object"]:
    """Stream one episode through the runner and reduce to alarm outcome.

    Returns the per-patient result plus the full event log for audit.
    """
    if label is None:
        label = label_onset(ep, stride_min=stride_min)
    schedule = Schedule(nn_stride_min=stride_min)
    log = run_stream(schedule, model, episode_frames(ep), k=k)
    alarms = log.of_type("alarm")
    alarm_h = alarms[0].t / 3600.0 if alarms else None
    return (
        PatientResult(ep.patient_id, label.positive, label.onset_hour, alarm_h),
        log,
    )


# ------------------------------------------------------------------ CSV I/O


CSV_HEADER = ["patient_id", "age", "hour", "sofa", "hr", "rr", "sbp", "temp", "abx_flag"]


def write_episodes_csv(path: str, episodes: list[PatientEpisode]) -> None:
    """Hourly-row export; vitals are averaged per hour."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_HEADER)
        for ep in episodes:
            hours = int(ep.los_hours) + 1
            per_hour = int(round(3600.0 / VITALS_PERIOD_S))
            abx_hours = {int(np.floor(t)) for t in ep.antibiotic_times_h}
            for h in range(hours):
                sl = slice(h * per_hour, (h + 1) * per_hour)
                row = [ep.patient_id, f"{ep.age_years:.1f}", h, f"{ep.sofa[h]:g}"]
                for ch in ("hr_bpm", "rr_brpm", "sbp_mmhg", "temp_c"):
                    v = ep.vitals.get(ch)
                    seg = v[sl] if v is not None else None
                    if seg is not None and len(seg) == 0 and len(v):
                        seg = v[-per_hour:]  # stay ends on the hour: hold last
                    row.append(f"{float(np.mean(seg)):.4f}" if seg is not None and len(seg) else "")
                row.append(1 if h in abx_hours else 0)
                w.writerow(row)


def read_episodes_csv(path: str) -> list[PatientEpisode]:
    """Inverse of write_episodes_csv; hourly vitals are held for 30 s frames."""
    rows_by_patient: dict[str, list[dict]] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CSV_HEADER:
            raise ValidationError("csv", f"header must be {CSV_HEADER}")
        for row in reader:
            rows_by_patient.setdefault(row["patient_id"], []).append(row)
    episodes = []
    per_hour = int(round(3600.0 / VITALS_PERIOD_S))
    for pid, rows in rows_by_patient.items():
        rows.sort(key=lambda r: int(r["hour"]))
        hours = len(rows)
        sofa = np.array([float(r["sofa"]) for r in rows])
        abx = [float(int(r["hour"])) for r in rows if r["abx_flag"] == "1"]
        vitals = {}
        mapping = {"hr": "hr_bpm", "rr": "rr_brpm", "sbp": "sbp_mmhg", "temp": "temp_c"}
        for col, ch in mapping.items():
            if all(r[col] != "" for r in rows):
                hourly = np.array([float(r[col]) for r in rows])
                vitals[ch] = np.repeat(hourly, per_hour)
        episodes.append(
            PatientEpisode(
                patient_id=pid,
                age_years=float(rows[0]["age"]),
                los_hours=float(hours - 1) if hours > 1 else 0.5,
                sofa=sofa,
                antibiotic_times_h=abx,
                vitals=vitals,
            )
        )
    return episodes
