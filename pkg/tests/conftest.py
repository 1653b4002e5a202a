import numpy as np
import pytest

from hjbounds.bounds import BoundEvaluator
from hjbounds.characteristics import precompute
from hjbounds.config import preset

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str):
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        tr.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def ex6_config():
    return preset("paper-example-6")


@pytest.fixture(scope="session")
def ex6_system(ex6_config):
    return ex6_config.build_system()


@pytest.fixture(scope="session")
def ex6_bundle(ex6_config):
    c = ex6_config
    return precompute(c.build_system(), c.build_cost(), c.levels, c.counts, c.build_grid(), seed=c.seed)


@pytest.fixture(scope="session")
def ex6_eval(ex6_bundle):
    return BoundEvaluator(ex6_bundle)


@pytest.fixture(scope="session")
def desk_config():
    return preset("double-integrator")


@pytest.fixture(scope="session")
def desk_bundle(desk_config):
    c = desk_config
    return precompute(c.build_system(), c.build_cost(), c.levels, c.counts, c.build_grid(), seed=c.seed)


@pytest.fixture(scope="session")
def desk_eval(desk_bundle):
    return BoundEvaluator(desk_bundle)


@pytest.fixture(scope="session")
def desk_lf(desk_config):
    from hjbounds.oracle import lf_with_estimate

    c = desk_config
    return lf_with_estimate(c.build_system(), c.build_cost(), [(-2.0, 2.0, 201)] * 2, 0.0, cfl=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
