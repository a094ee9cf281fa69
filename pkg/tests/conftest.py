import os

import pytest
from hypothesis import HealthCheck, settings

from vbmo.geometry import Domain

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def disk():
    return Domain.disk(N=256)


@pytest.fixture(scope="session")
def disk128():
    return Domain.disk(N=128)


@pytest.fixture(scope="session")
def disk64():
    return Domain.disk(N=64)


@pytest.fixture(scope="session")
def ellipse():
    return Domain.ellipse(N=256)


@pytest.fixture(scope="session")
def star():
    return Domain.star(N=256)


@pytest.fixture(scope="session")
def shapes(disk, ellipse, star):
    return [disk, ellipse, star]


@pytest.fixture(scope="session")
def mixed_result(disk):
    from vbmo.decompose import helmholtz_decompose
    from vbmo.samples import mixed_field
    v = mixed_field(disk.grid)
    return v, helmholtz_decompose(v, disk)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


_criteria = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        _criteria[props["criterion"]] = (props["title"], report.passed, props.get("detail", ""))


def pytest_runtest_setup(item):
    m = item.get_closest_marker("criterion")
    if m is not None:
        item.user_properties += [("criterion", m.args[0]), ("title", m.args[1])]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, ok, detail = _criteria[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {title}" + (f"  ({detail})" if detail else ""))
