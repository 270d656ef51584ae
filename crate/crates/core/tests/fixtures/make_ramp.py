"""Writes ramp3x3.hvtd: a 3x3 f32 tensor holding 0..8, row-major."""
import struct

with open("ramp3x3.hvtd", "wb") as f:
    f.write(b"HVTD")
    f.write(struct.pack("<BBB", 1, 1, 2))
    f.write(struct.pack("<II", 3, 3))
    f.write(struct.pack("<9f", *range(9)))
