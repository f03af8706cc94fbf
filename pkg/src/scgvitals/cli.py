"""Command-line front end wiring generation, DSP, models, and budgets.

Exit codes: 0 success, 1 domain error, 2 usage error.  Every invocation
prints its resolved configuration to stderr; all randomness derives
from the single --seed flag.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import bp, datastore as ds, labeling, power
from .errors import ScgVitalsError, ValidationError
from .pipeline import (
    CHANNELS,
    Schedule,
    frames_from_chunks,
    load_jsonl,
    run_stream,
)
from .quant import (
    QMODEL_MAGIC,
    calibrate,
    load_qmodel,
    save_qmodel,
    weight_payload_bytes,
)
from .siggen import ScgConfig, generate_scg
from .tcn import (
    INPUT_LEN,
    MODEL_MAGIC,
    load_model,
    random_model,
    receptive_field,
    save_model,
    threshold_demo_model,
)

log = logging.getLogger("scgvitals")


def _resolve(args, path):
    if path is None or os.path.isabs(path):
        return path
    return os.path.join(args.out_dir, path) if args.out_dir else path


def _write_json(args, path, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(_resolve(args, path), "w") as f:
            f.write(text)


def _load_any_model(args, spec: str):
    """Model argument: literal "demo", "random", or a saved model path."""
    if spec == "demo":
        return threshold_demo_model()
    if spec == "random":
        return random_model(seed=args.seed)
    path = _resolve(args, spec)
    with open(path, "rb") as f:
        magic = f.read(4)
    return load_qmodel(path) if magic == QMODEL_MAGIC else load_model(path)


# ------------------------------------------------------------------ siggen


def cmd_siggen(args) -> int:
    if args.cohort is not None:
        episodes = labeling.synthetic_cohort(args.cohort, seed=args.seed)
        out = _resolve(args, args.out_csv or "cohort.csv")
        labeling.write_episodes_csv(out, episodes)
        n_pos = sum(1 for ep in episodes if ep.antibiotic_times_h)
        print(f"wrote {len(episodes)} episodes ({n_pos} septic) to {out}")
        return 0
    cfg = ScgConfig(
        fs=args.fs,
        duration=args.duration,
        hr_bpm=args.hr,
        rr_brpm=args.rr,
        ptt_ms=args.ptt_ms,
        snr_db=args.snr_db,
        seed=args.seed,
    )
    acc1, acc2, truth = generate_scg(cfg)
    chunks = ds.chunk_acc_streams(acc1, acc2)
    out = _resolve(args, args.out)
    ds.write_bundle_file(out, chunks)
    if args.truth_out:
        _write_json(
            args,
            args.truth_out,
            {
                "beat_times_s": [round(float(t), 6) for t in truth.beat_times],
                "rr_hz": round(truth.rr_hz, 6),
                "ptt_ms": truth.ptt_ms,
            },
        )
    print(f"wrote {len(chunks)} chunks ({os.path.getsize(out)} bytes) to {out}")
    return 0


# ------------------------------------------------------------------ vitals


def cmd_vitals_extract(args) -> int:
    bundle = ds.read_bundle_file(_resolve(args, args.infile))
    frames = frames_from_chunks(bundle.chunks)
    events = run_stream(
        Schedule(), threshold_demo_model(), frames, mcu_proxy=args.mcu_proxy
    )
    out = _resolve(args, args.out)
    rows = events.of_type("vital")
    with open(out, "w") as f:
        f.write("t_s,kind,value\n")
        for e in rows:
            f.write(f"{e.t},{e.payload['kind']},{e.payload['value']}\n")
    print(f"wrote {len(rows)} vitals to {out}")
    return 0


# ---------------------------------------------------------------------- bp


def cmd_bp_fit(args) -> int:
    records = bp.read_subjects_csv(_resolve(args, args.csv))
    model = bp.fit(records)
    _write_json(
        args,
        args.out,
        {
            "slope_mmhg_per_ms": round(model.slope, 6),
            "intercept_mmhg": round(model.intercept, 6),
            "n_subjects": len(records),
            "n_segments": sum(len(r.segments) for r in records),
        },
    )
    return 0


def cmd_bp_loo(args) -> int:
    records = bp.read_subjects_csv(_resolve(args, args.csv))
    stats = bp.loo_evaluate(records)
    _write_json(
        args,
        args.out,
        {
            "mean_mmhg": round(stats.mean_mmhg, 6),
            "sd_mmhg": round(stats.sd_mmhg, 6),
            "n": stats.n,
        },
    )
    return 0


# -------------------------------------------------------------------- model


def _calibration_windows(seed: int, n: int) -> list[np.ndarray]:
    """Seeded vitals windows spanning the healthy-to-septic range."""
    rng = np.random.default_rng(seed)
    lo = np.array([labeling.HEALTHY_VITALS[c] for c in CHANNELS])
    hi = np.array([labeling.SEPTIC_VITALS[c] for c in CHANNELS])
    jitter = np.array([labeling.VITAL_JITTER[c] for c in CHANNELS])
    samples = []
    for i in range(n):
        frac = i / max(1, n - 1)
        ramp = np.clip(
            np.linspace(frac - 0.5, frac + 0.5, INPUT_LEN)[:, None], 0.0, 1.0
        )
        base = lo + ramp * (hi - lo)
        noisy = base + rng.normal(0.0, jitter, size=(INPUT_LEN, len(lo)))
        samples.append(noisy.T.copy())  # calibrate wants channel-major windows
    return samples


def cmd_model_init(args) -> int:
    model = (
        threshold_demo_model() if args.kind == "demo" else random_model(seed=args.seed)
    )
    out = _resolve(args, args.out)
    save_model(model, out)
    print(f"wrote {args.kind} model to {out} ({os.path.getsize(out)} bytes)")
    return 0


def cmd_model_quantize(args) -> int:
    model = load_model(_resolve(args, args.model))
    qm = calibrate(model, _calibration_windows(args.seed, args.calib_windows))
    out = _resolve(args, args.out)
    save_qmodel(qm, out)
    ratio = weight_payload_bytes(model) / weight_payload_bytes(qm)
    print(f"wrote quantized model to {out} (weight payload ratio {ratio:g}x)")
    return 0


def cmd_model_inspect(args) -> int:
    path = _resolve(args, args.model)
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == MODEL_MAGIC:
        model = load_model(path)
        info = {
            "format": "float32",
            "heads": len(model.heads),
            "layers_per_head": len(model.heads[0].blocks),
            "receptive_field_samples": receptive_field(model),
            "weight_payload_bytes": weight_payload_bytes(model),
        }
    elif magic == QMODEL_MAGIC:
        qm = load_qmodel(path)
        info = {
            "format": "int8",
            "heads": len(qm.heads),
            "layers_per_head": len(qm.heads[0].blocks),
            "weight_payload_bytes": weight_payload_bytes(qm),
        }
    else:
        raise ValidationError("model", f"unrecognized magic {magic!r}")
    info["file_bytes"] = os.path.getsize(path)
    _write_json(args, args.out, info)
    return 0


# ---------------------------------------------------------------------- run


def cmd_run(args) -> int:
    model = _load_any_model(args, args.model)
    schedule = Schedule(nn_stride_min=args.stride_min)
    if args.cohort:
        episodes = labeling.read_episodes_csv(_resolve(args, args.cohort))
        out_dir = _resolve(args, args.events_dir or "events")
        os.makedirs(out_dir, exist_ok=True)
        for ep in episodes:
            events = run_stream(
                schedule, model, labeling.episode_frames(ep), k=args.consensus_k
            )
            events.write(os.path.join(out_dir, f"{ep.patient_id}.jsonl"))
            alarms = events.of_type("alarm")
            status = f"alarm at {alarms[0].t / 3600.0:.2f} h" if alarms else "no alarm"
            print(f"{ep.patient_id}: {len(events.events)} events, {status}")
        return 0
    if args.infile is None:
        raise ValidationError("run", "need --in bundle or --cohort csv")
    bundle = ds.read_bundle_file(_resolve(args, args.infile))
    frames = frames_from_chunks(bundle.chunks)
    events = run_stream(
        schedule, model, frames, k=args.consensus_k, mcu_proxy=args.mcu_proxy
    )
    out = _resolve(args, args.out)
    events.write(out)
    print(f"wrote {len(events.events)} events to {out}")
    return 0


# -------------------------------------------------------------- label / eval


def cmd_label(args) -> int:
    episodes = labeling.read_episodes_csv(_resolve(args, args.csv))
    out = {}
    n_pos = n_excl = 0
    for ep in episodes:
        try:
            lab = labeling.label_onset(
                ep, stride_min=args.stride_min, baseline=args.baseline
            )
        except ScgVitalsError as e:
            out[ep.patient_id] = {"rejected": str(e)}
            n_excl += 1
            continue
        keep, reason = labeling.include(ep, lab)
        out[ep.patient_id] = {
            "positive": lab.positive,
            "onset_hour": lab.onset_hour,
            "included": keep,
            "reason": reason,
        }
        n_pos += lab.positive and keep
        n_excl += not keep
    _write_json(args, args.out, out)
    print(f"labeled {len(episodes)} episodes: {n_pos} positive, {n_excl} excluded")
    return 0


def cmd_eval(args) -> int:
    with open(_resolve(args, args.labels)) as f:
        labels = json.load(f)
    events_dir = _resolve(args, args.events)
    results = []
    for pid in sorted(labels):
        entry = labels[pid]
        if entry.get("rejected") or not entry.get("included", False):
            continue
        path = os.path.join(events_dir, f"{pid}.jsonl")
        alarms = load_jsonl(path).of_type("alarm")
        alarm_h = alarms[0].t / 3600.0 if alarms else None
        results.append(
            labeling.PatientResult(pid, entry["positive"], entry["onset_hour"], alarm_h)
        )
    metrics = labeling.evaluate(results, n_boot=args.n_boot, seed=args.seed)
    _write_json(
        args,
        args.out,
        {
            "sensitivity": round(metrics.sensitivity, 6),
            "specificity": round(metrics.specificity, 6),
            "median_time_to_sepsis_h": metrics.median_time_to_sepsis_h,
            "ci": {
                k: [round(v[0], 4), round(v[1], 4)] if v else None
                for k, v in metrics.ci.items()
            },
            "n_positive": metrics.n_positive,
            "n_negative": metrics.n_negative,
        },
    )
    return 0


# -------------------------------------------------------------------- power


def cmd_power_estimate(args) -> int:
    profile = (
        power.read_profile(_resolve(args, args.profile))
        if args.profile
        else power.wearable_profile()
    )
    if args.stride_min is not None:
        profile = power.with_nn_stride(profile, args.stride_min)
    avg = power.average_power(profile)
    _write_json(
        args,
        args.out,
        {
            "average_power_mw": round(avg, 6),
            "battery_lifetime_h": round(power.battery_lifetime(profile), 2),
            "battery_capacity_mah": profile.battery_capacity_mah,
            "battery_voltage_v": profile.battery_voltage_v,
        },
    )
    return 0


def cmd_power_curve(args) -> int:
    profile = (
        power.read_profile(_resolve(args, args.profile))
        if args.profile
        else power.wearable_profile()
    )
    try:
        strides = [float(s) for s in args.strides.split(",") if s]
    except ValueError as e:
        raise ValidationError("strides", str(e)) from e
    curve = power.lifetime_curve(profile, strides)
    lines = ["stride_min,lifetime_h"] + [f"{s:g},{h:.2f}" for s, h in curve]
    text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        with open(_resolve(args, args.out), "w") as f:
            f.write(text)
    return 0


# --------------------------------------------------------------------- data


def cmd_data_pack(args) -> int:
    events = load_jsonl(_resolve(args, args.events))
    chunks = []
    for e in events.events:
        ts_us = round(e.t * 1e6)
        if e.type == "vital":
            payload = ds.pack_vitals({e.payload["kind"]: e.payload["value"]})
            chunks.append(ds.Chunk(ds.ChunkType.VITALS, ts_us, payload))
        elif e.type == "report":
            values = {c: e.payload[c] for c in CHANNELS if c in e.payload}
            chunks.append(ds.Chunk(ds.ChunkType.VITALS, ts_us, ds.pack_vitals(values)))
        elif e.type == "prediction":
            payload = ds.pack_prediction(e.payload["probability"], e.payload["label"])
            chunks.append(ds.Chunk(ds.ChunkType.PREDICTION, ts_us, payload))
        else:
            payload = ds.pack_event(e.to_json())
            chunks.append(ds.Chunk(ds.ChunkType.EVENT, ts_us, payload))
    out = _resolve(args, args.out)
    ds.write_bundle_file(out, chunks)
    print(f"wrote {len(chunks)} chunks ({os.path.getsize(out)} bytes) to {out}")
    return 0


def cmd_data_unpack(args) -> int:
    bundle = ds.read_bundle_file(_resolve(args, args.infile))
    lines = []
    for chunk in bundle.chunks:
        row = {"t": chunk.timestamp_us / 1e6, "type": chunk.type_tag.name.lower()}
        if chunk.type_tag == ds.ChunkType.ACC_FRAME:
            site, fs, ax, _, _ = ds.unpack_acc_frame(chunk.payload)
            row.update(site=site, fs=fs, n=len(ax))
        elif chunk.type_tag == ds.ChunkType.VITALS:
            row["values"] = ds.unpack_vitals(chunk.payload)
        elif chunk.type_tag == ds.ChunkType.PREDICTION:
            prob, label = ds.unpack_prediction(chunk.payload)
            row.update(probability=prob, label=label)
        else:
            row["text"] = ds.unpack_event(chunk.payload)
        lines.append(json.dumps(row, sort_keys=True, separators=(",", ":")))
    text = "\n".join(lines) + "\n" if lines else ""
    if args.out is None:
        sys.stdout.write(text)
    else:
        with open(_resolve(args, args.out), "w") as f:
            f.write(text)
    return 0


def cmd_data_inspect(args) -> int:
    path = _resolve(args, args.infile)
    bundle = ds.read_bundle_file(path)
    counts: dict[str, int] = {}
    for chunk in bundle.chunks:
        name = chunk.type_tag.name.lower()
        counts[name] = counts.get(name, 0) + 1
    times = [c.timestamp_us for c in bundle.chunks]
    _write_json(
        args,
        args.out,
        {
            "chunks": len(bundle.chunks),
            "counts": counts,
            "file_bytes": os.path.getsize(path),
            "t_first_s": min(times) / 1e6 if times else None,
            "t_last_s": max(times) / 1e6 if times else None,
            "crc": "ok",
        },
    )
    return 0


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="scgvitals",
        description="Chest-accelerometer vitals, onset inference, and power budgeting",
    )
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--out-dir", default=None, help="directory for relative outputs")
    sub = p.add_subparsers(dest="command", required=True)

    sg = sub.add_parser("siggen", help="synthesize a dual-site recording or a cohort")
    sg.add_argument("--fs", type=float, default=120.0)
    sg.add_argument("--duration", type=float, default=60.0, help="seconds")
    sg.add_argument("--hr", type=float, default=72.0)
    sg.add_argument("--rr", type=float, default=15.0)
    sg.add_argument("--ptt-ms", type=float, default=41.7)
    sg.add_argument("--snr-db", type=float, default=12.0)
    sg.add_argument("--out", default="scg.icx")
    sg.add_argument("--truth-out", default=None, help="also write generation facts")
    sg.add_argument("--cohort", type=int, default=None, help="episode count (CSV mode)")
    sg.add_argument("--out-csv", default=None)
    sg.set_defaults(func=cmd_siggen)

    vi = sub.add_parser("vitals", help="vital-sign extraction").add_subparsers(
        dest="vitals_command", required=True
    )
    ve = vi.add_parser("extract", help="bundle to per-window vitals CSV")
    ve.add_argument("--in", dest="infile", required=True)
    ve.add_argument("--out", default="vitals.csv")
    ve.add_argument("--mcu-proxy", action="store_true")
    ve.set_defaults(func=cmd_vitals_extract)

    bps = sub.add_parser("bp", help="transit-time blood-pressure calibration")
    bpsub = bps.add_subparsers(dest="bp_command", required=True)
    bf = bpsub.add_parser("fit", help="pooled linear fit")
    bf.add_argument("--csv", required=True)
    bf.add_argument("--out", default=None)
    bf.set_defaults(func=cmd_bp_fit)
    bl = bpsub.add_parser("loo", help="leave-one-subject-out error stats")
    bl.add_argument("--csv", required=True)
    bl.add_argument("--out", default=None)
    bl.set_defaults(func=cmd_bp_loo)

    mo = sub.add_parser("model", help="detector model files")
    mosub = mo.add_subparsers(dest="model_command", required=True)
    mi = mosub.add_parser("init", help="write a fresh model file")
    mi.add_argument("--kind", choices=("demo", "random"), default="demo")
    mi.add_argument("--out", default="model.tcnm")
    mi.set_defaults(func=cmd_model_init)
    mq = mosub.add_parser("quantize", help="calibrate and write the int8 twin")
    mq.add_argument("--model", required=True)
    mq.add_argument("--out", default="model.tcnq")
    mq.add_argument("--calib-windows", type=int, default=16)
    mq.set_defaults(func=cmd_model_quantize)
    mins = mosub.add_parser("inspect", help="structure and payload summary")
    mins.add_argument("--model", required=True)
    mins.add_argument("--out", default=None)
    mins.set_defaults(func=cmd_model_inspect)

    rn = sub.add_parser("run", help="streaming runner over a bundle or cohort")
    rn.add_argument("--in", dest="infile", default=None, help="acc bundle (.icx)")
    rn.add_argument("--cohort", default=None, help="episode CSV (one log per patient)")
    rn.add_argument("--model", default="demo", help='"demo", "random", or a file')
    rn.add_argument("--out", default="events.jsonl")
    rn.add_argument("--events-dir", default=None)
    rn.add_argument("--stride-min", type=int, default=30, choices=(10, 30, 60))
    rn.add_argument("--consensus-k", type=int, default=8)
    rn.add_argument("--mcu-proxy", action="store_true")
    rn.set_defaults(func=cmd_run)

    lb = sub.add_parser("label", help="onset labels and inclusion decisions")
    lb.add_argument("--csv", required=True)
    lb.add_argument("--out", default="labels.json")
    lb.add_argument("--stride-min", type=int, default=30)
    lb.add_argument("--baseline", choices=("delta", "window-min"), default="delta")
    lb.set_defaults(func=cmd_label)

    ev = sub.add_parser("eval", help="screening metrics from labels plus event logs")
    ev.add_argument("--labels", required=True)
    ev.add_argument("--events", required=True, help="directory of <patient>.jsonl")
    ev.add_argument("--out", default=None)
    ev.add_argument("--n-boot", type=int, default=1000)
    ev.set_defaults(func=cmd_eval)

    pw = sub.add_parser("power", help="average power and battery lifetime")
    pwsub = pw.add_subparsers(dest="power_command", required=True)
    pe = pwsub.add_parser("estimate")
    pe.add_argument("--profile", default=None, help="profile file (default: built-in)")
    pe.add_argument("--stride-min", type=float, default=None)
    pe.add_argument("--out", default=None)
    pe.set_defaults(func=cmd_power_estimate)
    pc = pwsub.add_parser("curve")
    pc.add_argument("--profile", default=None)
    pc.add_argument("--strides", default="2,10,30,60", help="minutes, comma-separated")
    pc.add_argument("--out", default=None)
    pc.set_defaults(func=cmd_power_curve)

    da = sub.add_parser("data", help="framed chunk bundles")
    dasub = da.add_subparsers(dest="data_command", required=True)
    dp = dasub.add_parser("pack", help="event log to bundle")
    dp.add_argument("--events", required=True)
    dp.add_argument("--out", default="events.icx")
    dp.set_defaults(func=cmd_data_pack)
    du = dasub.add_parser("unpack", help="bundle to JSON lines")
    du.add_argument("--in", dest="infile", required=True)
    du.add_argument("--out", default=None)
    du.set_defaults(func=cmd_data_unpack)
    di = dasub.add_parser("inspect", help="bundle summary")
    di.add_argument("--in", dest="infile", required=True)
    di.add_argument("--out", default=None)
    di.set_defaults(func=cmd_data_inspect)

    return p


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(message)s")
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print(f"config: {json.dumps(resolved, sort_keys=True)}", file=sys.stderr)
    try:
        return args.func(args)
    except ScgVitalsError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
