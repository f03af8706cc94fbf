"""Risk network in float and int8: same answer, a quarter of the bytes.

Runs the four-head network on a healthy and a deteriorating vitals window,
quantizes it, and compares probabilities and serialized sizes.
"""

import os
import tempfile

import numpy as np

from scgvitals import labeling
from scgvitals.pipeline import CHANNELS
from scgvitals.quant import calibrate, qforward, save_qmodel, weight_payload_bytes
from scgvitals.tcn import INPUT_LEN, forward, receptive_field, save_model, threshold_demo_model


def vitals_window(rng, frac):
    """A 4-hour window ramped frac of the way from healthy to septic."""
    lo = np.array([labeling.HEALTHY_VITALS[c] for c in CHANNELS])
    hi = np.array([labeling.SEPTIC_VITALS[c] for c in CHANNELS])
    jit = np.array([labeling.VITAL_JITTER[c] for c in CHANNELS])
    ramp = np.clip(np.linspace(frac - 0.5, frac + 0.5, INPUT_LEN)[:, None], 0.0, 1.0)
    return (lo + ramp * (hi - lo) + rng.normal(0.0, jit, (INPUT_LEN, len(lo)))).T.copy()


def main():
    model = threshold_demo_model()
    arch = [(b.weights.shape[2], b.dilation) for b in model.heads[0].blocks]
    print(f"network: {len(model.heads)} heads, layers (kernel, dilation) = {arch}")
    print(f"receptive field: {receptive_field([(k, d, 2) for k, d in arch])} "
          f"samples of each 480-sample channel")

    rng = np.random.default_rng(5)
    calib = [vitals_window(rng, i / 15) for i in range(16)]
    qm = calibrate(model, calib)

    # --- probabilities on both ends of the range -----------------------
    print(f"{'window':>12} {'float':>9} {'int8':>9}")
    for name, frac in (("healthy", 0.0), ("drifting", 0.6), ("septic", 1.0)):
        w = vitals_window(rng, frac)
        print(f"{name:>12} {forward(model, w):9.4f} {qforward(qm, w):9.4f}")

    # --- serialized size -----------------------------------------------
    with tempfile.TemporaryDirectory() as d:
        fpath = os.path.join(d, "f.bin")
        qpath = os.path.join(d, "q.bin")
        save_model(model, fpath)
        save_qmodel(qm, qpath)
        pf, pq = weight_payload_bytes(model), weight_payload_bytes(qm)
        print(f"weight payload: {pf} -> {pq} bytes ({pf / pq:.0f}x smaller)")
        print(f"file size:      {os.path.getsize(fpath)} -> "
              f"{os.path.getsize(qpath)} bytes")


if __name__ == "__main__":
    main()
