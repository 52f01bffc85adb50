import functools
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gfspec.grid import make_grid
from gfspec.kernels import (OffspringDist, TotalRate, age_structured_model, mitosis_model,
                            self_similar_model)
from gfspec.operators import assemble
from gfspec.spectral import eigentriple

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

MODELS = {
    "mitosis": (lambda: mitosis_model(TotalRate.constant(1.0)), 20.0),
    "self_similar": (lambda: self_similar_model(1.0, OffspringDist.uniform()), 10.0),
    "age_structured": (lambda: age_structured_model(TotalRate.exponential(3.0, 1.0)), 20.0),
}


@functools.lru_cache(maxsize=None)
def built(name: str, N: int):
    """(model, grid, operator, eigentriple), cached across the session."""
    factory, L = MODELS[name]
    m = factory()
    g = make_grid(L, N)
    op = assemble(m, g)
    return m, g, op, eigentriple(op)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
