"""Framed binary log: pack a monitoring session, read it back, corrupt it.

Every chunk carries a tag, a microsecond timestamp, a length, and a CRC-32,
so a damaged byte anywhere is caught and named instead of producing
silently wrong vitals.
"""

import os
import tempfile

from scgvitals import datastore as ds
from scgvitals.errors import CrcMismatchError, TruncatedError


def main():
    chunks = [
        ds.Chunk(ds.ChunkType.VITALS, 30_000_000,
                 ds.pack_vitals({"hr_bpm": 71.5, "rr_brpm": 14.2})),
        ds.Chunk(ds.ChunkType.VITALS, 60_000_000,
                 ds.pack_vitals({"hr_bpm": 72.0, "rr_brpm": 14.0,
                                 "sbp_mmhg": 118.0, "temp_c": 36.7})),
        ds.Chunk(ds.ChunkType.PREDICTION, 14_400_000_000,
                 ds.pack_prediction(0.91, 1)),
        ds.Chunk(ds.ChunkType.EVENT, 14_400_000_000,
                 ds.pack_event('{"type":"alarm","k":8}')),
    ]

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "session.icx")
        ds.write_bundle_file(path, chunks)
        size = os.path.getsize(path)
        print(f"packed {len(chunks)} chunks into {size} bytes "
              f"({size / len(chunks):.0f} bytes each, header + CRC included)")

        # --- read back --------------------------------------------------
        bundle = ds.read_bundle_file(path)
        for c in bundle.chunks:
            t = c.timestamp_us / 1e6
            if c.type_tag == ds.ChunkType.VITALS:
                print(f"  t={t:8.1f}s vitals     {ds.unpack_vitals(c.payload)}")
            elif c.type_tag == ds.ChunkType.PREDICTION:
                prob, label = ds.unpack_prediction(c.payload)
                print(f"  t={t:8.1f}s prediction p={prob:.4f} label={label}")
            else:
                print(f"  t={t:8.1f}s event      {ds.unpack_event(c.payload)}")

        # --- flip one payload byte --------------------------------------
        raw = bytearray(open(path, "rb").read())
        raw[len(raw) // 2] ^= 0xFF
        try:
            ds.read_bundle(bytes(raw))
        except CrcMismatchError as e:
            print(f"one flipped byte: rejected with CrcMismatchError ({e})")

        # --- cut the file short -----------------------------------------
        try:
            ds.read_bundle(bytes(raw[: len(raw) - 5]))
        except (TruncatedError, CrcMismatchError) as e:
            print(f"truncated file:   rejected with {type(e).__name__} ({e})")


if __name__ == "__main__":
    main()
