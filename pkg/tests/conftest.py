"""Shared fixtures and the acceptance summary printed after the run."""

import numpy as np
import pytest

from anydiff import GmmPrior, make_linear_schedule


def iso_prior(means, var=0.25, labels=None):
    """Equal-weight mixture of isotropic Gaussians at the given means."""
    means = np.asarray(means, dtype=float)
    k, dim = means.shape
    covs = np.stack([var * np.eye(dim)] * k)
    return GmmPrior(np.full(k, 1.0 / k), means, covs, labels)


@pytest.fixture(scope="session")
def linear_schedule():
    return make_linear_schedule(1000)


@pytest.fixture(scope="session")
def four_mode_prior():
    # modes at distance 3 from the origin, one per quadrant
    m = 3.0 / np.sqrt(2.0)
    return iso_prior([[m, m], [m, -m], [-m, m], [-m, -m]], labels=[0, 1, 2, 3])


@pytest.fixture(scope="session")
def tight_prior():
    # same layout shrunk to unit distance: modes overlap long enough that
    # mid-budget previews still distinguish the samplers
    m = 1.0 / np.sqrt(2.0)
    return iso_prior([[m, m], [m, -m], [-m, m], [-m, -m]], labels=[0, 1, 2, 3])


@pytest.fixture(scope="session")
def identified_prior():
    # observing the first coordinate pins down the component exactly
    return iso_prior([[-6.0, -3.0], [-2.0, -1.0], [2.0, 1.0], [6.0, 3.0]])


@pytest.fixture(scope="session")
def two_class_prior():
    return iso_prior([[-4.0], [4.0]], labels=[0, 1])


_ACCEPTANCE: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    if report.when == "call":
        _ACCEPTANCE[name] = report.outcome
    elif report.outcome != "passed":  # setup/teardown error or skip
        _ACCEPTANCE.setdefault(name, report.outcome)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        tag, _, rest = name.removeprefix("test_").partition("_")
        outcome = _ACCEPTANCE[name]
        word = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"[{tag}] {rest.replace('_', '-')}: {word}")
