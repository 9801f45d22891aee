"""Counter-based random streams for reproducible Monte Carlo.

Standard normals are produced by inverse-CDF transform of Philox counter
output, so draw ``i`` of a given seed is the same number no matter how the
work is partitioned across chunks or workers.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

__all__ = ["stream_uniforms", "stream_normals"]

_U64_SHIFT = np.uint64(11)
_U53_SCALE = 2.0**-53


def stream_uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """Uniforms in the open interval (0, 1) at stream positions
    [start, start+count) of the Philox stream keyed by seed."""
    bg = np.random.Philox(key=np.uint64(seed & (2**64 - 1)))
    if start:
        bg.advance(start)
    raw = bg.random_raw(count)
    # 53-bit mantissa, offset by half an ulp so 0 and 1 are unreachable
    return ((raw >> _U64_SHIFT).astype(np.float64) + 0.5) * _U53_SCALE


def stream_normals(seed: int, start: int, count: int) -> np.ndarray:
    """Standard normals via inverse CDF of the counter-based uniform stream."""
    return ndtri(stream_uniforms(seed, start, count))
