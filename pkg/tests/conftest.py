import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from tariffsim import demand_response, model_core, system_cases  # noqa: E402
from tariffsim.model_core import FlexibilityParams, LoadSeries, build_time_index  # noqa: E402

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.register_profile("stress", parent=settings.get_profile("default"), max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# Every response the library produces is passed to check_response; wrap the
# copies imported by the solver modules (tests that feed deliberately invalid
# results call the original) and record the worst residual of the session.
ENVELOPE = {"checked": 0, "worst": 0.0}


def _tracked(check):
    def tracked_check(load, result, flex, index, *args, **kwargs):
        residuals = model_core.envelope_residuals(load, result, flex, index)
        ENVELOPE["checked"] += 1
        ENVELOPE["worst"] = max(ENVELOPE["worst"], *residuals.values())
        return check(load, result, flex, index, *args, **kwargs)

    return tracked_check


for _module in (demand_response, system_cases):
    _module.check_response = _tracked(_module.check_response)

# criterion number -> summary line, filled by test_acceptance
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE and not ENVELOPE["checked"]:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
    terminalreporter.write_line(
        f"envelope over the whole session: {ENVELOPE['checked']} responses checked, "
        f"worst residual {ENVELOPE['worst']:.3e} (limit 1e-07)"
    )


@pytest.fixture
def day_index():
    # a Monday in January: inside the winter peak window
    return build_time_index("2021-01-04", 1)


@pytest.fixture
def week_index():
    return build_time_index("2021-01-04", 7)


@pytest.fixture
def flex():
    return FlexibilityParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_fleet(rng, index, count, low=0.2, high=4.0, prefix="c"):
    return [
        LoadSeries(f"{prefix}{i:03d}", rng.uniform(low, high, index.hour_count))
        for i in range(count)
    ]
