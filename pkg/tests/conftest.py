import functools

import pytest
from hypothesis import settings

from upb_locc.engine import run_protocol
from upb_locc.finisher import leaf_finisher
from upb_locc.protocols import build_protocol
from upb_locc.upb import build_upb

settings.register_profile("pkg", max_examples=40, deadline=None)
settings.load_profile("pkg")

MATRIX = [("T1", 3), ("T2", 3), ("T3", 3)] + [(t, d) for t in ("T4", "T5", "T6") for d in range(3, 9)]


@functools.lru_cache(maxsize=None)
def upb(d):
    return build_upb(d)


@functools.lru_cache(maxsize=None)
def report(theorem, d, finisher=False):
    """Shared protocol runs; the finisher variant is the expensive one."""
    return run_protocol(
        build_protocol(theorem, d), upb(d), name=theorem, finisher=leaf_finisher if finisher else None
    )


@pytest.fixture
def run_report():
    return report
