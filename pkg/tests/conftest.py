"""Shared fixtures: an in-memory engine and a deterministic clock."""

from __future__ import annotations

import datetime as dt

import pytest

from factograph.engine import Engine


class TickingClock:
    """Deterministic clock: advances one millisecond per call.

    Two engines driven by the same operation sequence against two instances
    of this clock produce byte-identical timestamps, which the equivalence
    tests rely on.
    """

    def __init__(self, start: dt.datetime | None = None):
        self._now = start or dt.datetime(2026, 3, 2, 9, 0, 0, tzinfo=dt.timezone.utc)

    def __call__(self) -> dt.datetime:
        self._now += dt.timedelta(milliseconds=1)
        return self._now


@pytest.fixture()
def engine():
    eng = Engine(":memory:")
    yield eng
    eng.close()


@pytest.fixture()
def clocked():
    eng = Engine(":memory:", clock=TickingClock(), token_secret="test-secret")
    yield eng
    eng.close()


def edx_csv(pairs) -> bytes:
    """Build an EDX composition CSV from (element, percent) pairs."""
    lines = ["Element,AtomicPercent"]
    for element, percent in pairs:
        lines.append(f"{element},{percent}")
    return ("\r\n".join(lines) + "\r\n").encode("utf-8")
