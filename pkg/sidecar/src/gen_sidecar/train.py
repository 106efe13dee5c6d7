"""Shared training utilities."""

from __future__ import annotations


def stabilized(losses: list[float], window: int, tol: float) -> bool:
    """True once the moving average of the loss has stopped moving.

    Compares the mean over the most recent ``window`` epochs with the mean
    over the ``window`` before it; a relative change of at most ``tol``
    counts as a plateau. Needs two full windows of history before it can
    fire.
    """
    if len(losses) < 2 * window:
        return False
    recent = sum(losses[-window:]) / window
    prev = sum(losses[-2 * window:-window]) / window
    if prev == 0.0:
        return recent == 0.0
    return abs(recent - prev) <= tol * abs(prev)
