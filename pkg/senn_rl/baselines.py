"""Strongest-signal heuristic used as the reference line for trained agents."""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

DISCONNECT_THRESHOLD = 0.2


def heuristic_policy(obs: ArrayLike, n_bs: int, threshold: float = DISCONNECT_THRESHOLD) -> int:
    """Pick one toggle action from a single UE observation.

    Rules, in order: connect to the strongest-SNR BS if not yet connected;
    otherwise drop the first connected BS whose observed SNR is below
    ``threshold``; otherwise do nothing.
    """
    vector = np.asarray(obs, dtype=np.float64)
    connected = vector[:n_bs] > 0.5
    snr = vector[n_bs : 2 * n_bs]
    strongest = int(np.argmax(snr))
    if not connected[strongest]:
        return strongest + 1
    weak = np.flatnonzero(connected & (snr < threshold))
    if weak.size:
        return int(weak[0]) + 1
    return 0


def heuristic_actions(observations: ArrayLike, n_bs: int, threshold: float = DISCONNECT_THRESHOLD) -> NDArray[np.int64]:
    batch = np.atleast_2d(np.asarray(observations, dtype=np.float64))
    return np.array([heuristic_policy(row, n_bs, threshold) for row in batch], dtype=np.int64)
