#!/usr/bin/env python3
# Copyright 2026 The AttriBank Authors
# SPDX-License-Identifier: Apache-2.0
"""Writes tests/data/golden_d3.atrb with an independent struct-based writer."""
import struct
import sys

D = 3
TOKENS = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
RECORDS = [  # label, task_id, embedding
    (0, 0, [0.5, 0.25, -1.0]),
    (1, 1, [-0.5, 2.0, 0.125]),
    (0, 0, [1.5, -0.75, 0.0]),
    (1, 1, [0.0, 0.0, 3.0]),
]

out = bytearray(b"ATRB")
out += struct.pack("<IIII", 1, D, len(TOKENS), len(RECORDS))
for t in TOKENS:
    out += struct.pack("<%df" % D, *t)
for label, task, emb in RECORDS:
    out += struct.pack("<II", label, task) + struct.pack("<%df" % D, *emb)
path = sys.argv[1] if len(sys.argv) > 1 else "tests/data/golden_d3.atrb"
with open(path, "wb") as f:
    f.write(out)
