"""Pure-Python (numpy-vectorized) PWM sampling kernel.

Fallback used when the compiled extension is unavailable. Must stay
bit-identical to vmcsim._pwm_cy: same splitmix64 stream, same phase
comparison, same ring bookkeeping.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0


def _phase(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * _INV_2_53


def fill_samples(ring, head, filled, ones, seed, pos, count, duty_spp, spp):
    """Append ``count`` line samples to the FIFO ring.

    Sample n (absolute index) belongs to PWM period n // spp at slot
    n % spp and reads high iff slot + phase(period) < duty_spp, where
    phase(period) is one uniform draw per period. Returns the updated
    (head, filled, ones, pos) counters; ring is mutated in place.
    """
    cap = ring.shape[0]
    if count <= 0:
        return head, filled, ones, pos
    if count > cap:
        # Only the last `cap` samples can survive in the queue.
        pos += count - cap
        count = cap

    n = np.arange(pos, pos + count, dtype=np.uint64)
    spp_u = np.uint64(spp)
    j = n // spp_u
    s = (n - j * spp_u).astype(np.float64)
    phi = _phase((np.uint64(seed) + (j + np.uint64(1)) * _GAMMA))
    bits = ((s + phi) < duty_spp).astype(np.uint8)

    idx = (head + np.arange(count)) % cap
    spill = filled + count - cap
    if spill > 0:
        # The last `spill` writes land on live samples (oldest first).
        ones += int(bits.sum()) - int(ring[idx[count - spill :]].sum())
        filled = cap
    else:
        ones += int(bits.sum())
        filled += count
    ring[idx] = bits
    head = (head + count) % cap
    return head, filled, ones, pos + count
