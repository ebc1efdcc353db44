import numpy as np
import pytest

from mimetic_cloud.cloud import generate_cloud
from mimetic_cloud.geometry import (BcTag, all_tagged, perforated_square, segment_boundary,
                                    tag_boundary, unit_square)
from mimetic_cloud.mmd import build_meshless_context


def make_cloud(N, domain=None, tag=BcTag.NEUMANN, perturbation=0.2, seed=1):
    domain = domain or unit_square()
    segs = tag_boundary(segment_boundary(domain, 1.0 / N), all_tagged(tag))
    return generate_cloud(domain, segs, 1.0 / N, perturbation_fraction=perturbation, seed=seed), domain


def make_context(N, domain=None, tag=BcTag.NEUMANN, perturbation=0.2, seed=1, **kw):
    cloud, domain = make_cloud(N, domain, tag, perturbation, seed)
    return build_meshless_context(cloud, domain, need_gradient=True, **kw)


@pytest.fixture(scope="session")
def square_neumann_16():
    return make_context(16)


@pytest.fixture(scope="session")
def square_dirichlet_16():
    return make_context(16, tag=BcTag.DIRICHLET)


@pytest.fixture(scope="session")
def perforated_neumann_16():
    return make_context(16, domain=perforated_square())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion."""
    def _report(number, ok, detail):
        ACCEPTANCE_LINES.append((number, f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"))
        print(ACCEPTANCE_LINES[-1][1])
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES, key=lambda t: t[0]):
            terminalreporter.write_line(line)
