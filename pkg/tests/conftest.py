import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("popdyn", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("popdyn")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# criterion number -> (passed, description, detail); filled by test_acceptance
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, desc, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {desc}"
                                    + (f"  [{detail}]" if detail else ""))
