import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from havok import analysis, model as hm, systems  # noqa: E402

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@dataclass
class LorenzRun:
    traj: object
    series: object
    model: object
    dec: object
    forcing: object
    activity: object


@pytest.fixture(scope="session")
def lorenz():
    """Lorenz reference configuration: m=200000, dt=0.001, x measured, q=100, r=15."""
    traj = systems.simulate(systems.default_spec("lorenz"))
    ts = systems.measure(traj, "x")
    model, dec = hm.fit(ts, 100, 15, source="lorenz")
    f = hm.extract_forcing(model, ts)
    return LorenzRun(traj, ts, model, dec, f, analysis.activity(f, analysis.LORENZ_THRESHOLD))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ------------------------------------------------------

_CRITERIA = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else ""
    _CRITERIA.append((str(mark.args[0]), mark.args[1], "PASS" if rep.passed else "FAIL", detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, status, detail in sorted(_CRITERIA, key=lambda c: (len(c[0]), c[0])):
        terminalreporter.write_line(f"{status} [{num}] {title}: {detail}")
