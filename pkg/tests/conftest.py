import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_hermitian(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (a + a.conj().T) / 2


# acceptance criteria report: tests record checks here, the summary prints one line per criterion
ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    def record(criterion: int, check: str, ok: bool, detail: str):
        ACCEPTANCE.setdefault(criterion, []).append((check, bool(ok), detail))
        assert ok, f"criterion {criterion} [{check}]: {detail}"

    return record


def pytest_sessionstart(session):
    import time

    session.config._randsense_t0 = time.perf_counter()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    import time

    if not ACCEPTANCE and "test_acceptance" not in " ".join(config.args):
        return
    elapsed = time.perf_counter() - config._randsense_t0
    # criterion 10: every property test outside the acceptance module passes, and the full suite is fast
    failed = [r.nodeid for r in terminalreporter.stats.get("failed", []) if "test_acceptance.py" not in r.nodeid]
    passed = [r for r in terminalreporter.stats.get("passed", []) if "test_acceptance.py" not in r.nodeid]
    if passed or failed:
        ACCEPTANCE.setdefault(10, []).append(("property suites", not failed, f"{len(passed)} passed, {len(failed)} failed" + (f": {', '.join(failed)}" if failed else "")))
        ACCEPTANCE[10].append(("suite time < 900 s", elapsed < 900, f"{elapsed:.0f} s"))
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[crit]
        ok = all(c[1] for c in checks)
        detail = "; ".join(f"{'ok' if c[1] else 'FAILED'} {c[0]} ({c[2]})" for c in checks)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {crit}: {detail}")
