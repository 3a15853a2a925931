import pytest

from geoleak import kernels

BACKENDS = ["python"] + (["cython"] if kernels.compiled is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per available kernel implementation."""
    impl = kernels.fallback if request.param == "python" else kernels.compiled
    for name in ("haversine_many", "neighbor_lists", "dbscan_expand", "nearest_in_window"):
        monkeypatch.setattr(kernels, name, getattr(impl, name))
    return request.param


ACCEPTANCE: list[str] = []


def record(number, title, ok, detail=""):
    """Store one acceptance verdict line; printed again in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] AC{number:02d} {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
