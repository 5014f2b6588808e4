import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# Acceptance criteria report: test_acceptance.py records one line per
# criterion here; the terminal summary prints the block and a copy goes to
# acceptance_report.txt next to the test output.
ACCEPTANCE_LINES: list = []


def record_criterion(name: str, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(f"{status} {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
    path = os.path.join(os.path.dirname(__file__), "..", "acceptance_report.txt")
    with open(os.path.abspath(path), "w") as fh:
        fh.write("\n".join(ACCEPTANCE_LINES) + "\n")


@pytest.fixture(scope="session")
def tiny_cohort_dir(tmp_path_factory):
    """20 CN + 20 AD at bandwidth 8, shared by filesystem-level tests."""
    from scnn.cohort import CohortSpec, generate_cohort, write_manifest

    out = tmp_path_factory.mktemp("cohort")
    spec = CohortSpec(counts={"CN": 20, "MCI-s": 0, "MCI-p": 0, "AD": 20},
                      bandwidth=8, seed=123)
    records = generate_cohort(spec, str(out))
    write_manifest(records, str(out / "manifest.csv"))
    return str(out)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
