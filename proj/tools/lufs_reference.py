# Copyright 2026 the levelsep authors
# License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#
# Independent integrated-loudness meter used to freeze reference constants
# for the C++ tests. Uses the published 48 kHz K-weighting coefficients and
# 400 ms gated blocks (75% overlap, -70 absolute / -10 relative gates).

import numpy as np
from scipy.signal import lfilter

SHELF_B = [1.53512485958697, -2.69169618940638, 1.19839281085285]
SHELF_A = [1.0, -1.69065929318241, 0.73248077421585]
HIPASS_B = [1.0, -2.0, 1.0]
HIPASS_A = [1.0, -1.99004745483398, 0.99007225036621]


def integrated_lufs_48k(x):
    sr = 48000
    y = lfilter(HIPASS_B, HIPASS_A, lfilter(SHELF_B, SHELF_A, x))
    block = int(0.4 * sr)
    hop = block // 4
    if len(y) < block:
        raise ValueError("signal shorter than one 400 ms block")
    powers = []
    for start in range(0, len(y) - block + 1, hop):
        seg = y[start:start + block]
        powers.append(np.mean(seg * seg))
    powers = np.array(powers)
    l = -0.691 + 10.0 * np.log10(np.maximum(powers, 1e-30))
    above_abs = powers[l > -70.0]
    if len(above_abs) == 0:
        return float("-inf")
    rel_gate = -0.691 + 10.0 * np.log10(np.mean(above_abs)) - 10.0
    kept = powers[(l > -70.0) & (l > rel_gate)]
    if len(kept) == 0:
        return float("-inf")
    return -0.691 + 10.0 * np.log10(np.mean(kept))


def main():
    sr = 48000
    t = np.arange(int(2.0 * sr)) / sr
    sine = np.sin(2 * np.pi * 997.0 * t)
    print(f"997 Hz full-scale sine @48k: {integrated_lufs_48k(sine):.6f} LUFS")
    print(f"997 Hz at -20 dBFS   @48k: {integrated_lufs_48k(0.1 * sine):.6f} LUFS")


if __name__ == "__main__":
    main()
