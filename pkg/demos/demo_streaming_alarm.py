"""Streaming monitor on one deteriorating patient: reports to alarm.

Feeds a 48-hour episode through the duty-cycled runner.  The network
scores a 4-hour vitals window every 30 minutes; eight consecutive
positives latch the alarm.
"""

from scgvitals import labeling
from scgvitals.pipeline import Schedule, run_stream
from scgvitals.tcn import threshold_demo_model


def main():
    ep = labeling.synthetic_episode("P01", septic=True, seed=9, onset_hour=30.0)
    label = labeling.label_onset(ep)
    print(f"episode {ep.patient_id}: {len(ep.vitals['hr_bpm'])} vitals samples, "
          f"charted onset at hour {label.onset_hour}")

    schedule = Schedule(nn_stride_min=30)
    log = run_stream(schedule, threshold_demo_model(), labeling.episode_frames(ep), k=8)

    reports = log.of_type("report")
    preds = log.of_type("prediction")
    alarms = log.of_type("alarm")
    print(f"{len(log.events)} events: {len(reports)} reports, "
          f"{len(preds)} predictions, {len(alarms)} alarm")

    # --- probability timeline around the flip --------------------------
    flip = next(i for i, p in enumerate(preds) if p.payload["label"] == 1)
    lo, hi = max(0, flip - 3), min(len(preds), flip + 9)
    print("window-score timeline (hour, probability, label):")
    for p in preds[lo:hi]:
        mark = " <- first positive" if p is preds[flip] else ""
        print(f"  h {p.t / 3600.0:6.2f}  p {p.payload['probability']:.4f}  "
              f"{p.payload['label']}{mark}")

    # --- alarm summary -------------------------------------------------
    alarm_h = alarms[0].t / 3600.0
    first_pos_h = preds[flip].t / 3600.0
    print(f"alarm latched at hour {alarm_h:.2f} "
          f"(first positive {first_pos_h:.2f} + 7 strides of 0.5 h)")
    print(f"lead time before charted onset: {label.onset_hour - alarm_h:.2f} h")


if __name__ == "__main__":
    main()
