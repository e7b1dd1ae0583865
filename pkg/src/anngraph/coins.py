"""Counter-based coins: a uniform [0, 1) value that is a pure function of (seed, i, j).

Each directed pair gets its own coin, so graphs built from the same seed at
different retention probabilities are nested (an edge kept at delta is kept
at every delta' >= delta). The mixer is SplitMix64's finalizer applied twice:
once to key the source row, once to key the target within that row.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_TARGET_KEY = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TO_UNIT = 2.0**-53


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def coin_block(seed: int, rows, targets) -> np.ndarray:
    """Coin matrix of shape ``(len(rows), len(targets))``; row r equals ``coin_row(seed, rows[r], targets)``."""
    rows = np.asarray(rows, dtype=np.uint64)
    js = np.asarray(targets, dtype=np.uint64)
    base = np.uint64(seed & _MASK)
    keys = _mix(base + _GAMMA * (rows + np.uint64(1)))
    z = _mix(keys[:, None] ^ _mix(js * _GAMMA + _TARGET_KEY)[None, :])
    return (z >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def coin_row(seed: int, i: int, targets) -> np.ndarray:
    """Coins c(seed, i, j) for every j in ``targets`` (self-pairs are not special-cased)."""
    return coin_block(seed, [i], targets)[0]


def coin_flip(seed: int, i: int, j: int) -> float:
    if i == j:
        raise ValueError(f"coins are defined only for i != j (got i = j = {i})")
    if i < 0 or j < 0:
        raise ValueError("coin indices must be non-negative")
    return float(coin_row(seed, i, [j])[0])
