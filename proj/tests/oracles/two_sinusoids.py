# Copyright 2026 The stepsep Authors
# SPDX-License-Identifier: Apache-2.0
"""Independent oracle for the ideal-separation delta metrics on two sinusoids."""

import numpy as np

EPS = 1e-8
RATE = 8000
N = 1000


def si_snr(est, ref):
    a = np.dot(est, ref) / np.dot(ref, ref)
    t = a * ref
    n = est - t
    return 10 * np.log10((np.dot(t, t) + EPS) / (np.dot(n, n) + EPS))


def sdr(est, ref):
    return 10 * np.log10(np.dot(ref, ref) / (np.dot(est - ref, est - ref) + EPS))


t = np.arange(N) / RATE
s1 = (0.5 * np.sin(2 * np.pi * 300 * t)).astype(np.float32).astype(np.float64)
s2 = (0.5 * np.sin(2 * np.pi * 1100 * t + 0.3)).astype(np.float32).astype(np.float64)
mix = (s1.astype(np.float32) + s2.astype(np.float32)).astype(np.float64)
print("input snr", 10 * np.log10(np.dot(s1, s1) / np.dot(s2, s2)))
d_si = np.mean([si_snr(s, s) - si_snr(mix, s) for s in (s1, s2)])
d_sdr = np.mean([sdr(s, s) - sdr(mix, s) for s in (s1, s2)])
print(f"delta_si_snr {d_si:.6f}")
print(f"delta_sdr {d_sdr:.6f}")
