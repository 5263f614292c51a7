import numpy as np
import pytest


def random_spd(rng, d, kappa=None):
    """Random SPD matrix; with ``kappa`` the spectrum spans [1, kappa]."""
    if kappa is None:
        g = rng.standard_normal((d, d))
        return g.T @ g + 1e-3 * np.eye(d) + 0.5 * np.eye(d)
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    lam = np.concatenate([[1.0, kappa], rng.uniform(1.0, kappa, d - 2)]) if d >= 2 else np.array([1.0])
    a = (q * lam) @ q.T
    return 0.5 * (a + a.T)


def with_spectrum(rng, lam):
    d = len(lam)
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    a = (q * np.asarray(lam, dtype=float)) @ q.T
    return 0.5 * (a + a.T)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when not in ("setup", "call"):
        return
    n, title = marker.args
    entry = CRITERIA.setdefault(n, {"title": title, "ok": True})
    if call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception):
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        entry = CRITERIA[n]
        status = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"{status} {n:2d} {entry['title']}")
