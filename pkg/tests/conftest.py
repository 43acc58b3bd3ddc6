import pytest

from dynattn import kernels

_criteria = []


@pytest.fixture
def criterion():
    """Record a one-line pass/fail result for an acceptance criterion."""

    def record(label, ok, detail=""):
        _criteria.append((label, bool(ok), detail))
        return ok

    return record


@pytest.fixture(params=sorted(kernels.available()))
def backend(request, monkeypatch):
    """Run a test once per importable kernel backend."""
    mod = kernels.available()[request.param]
    for name in ("query_entry", "k_column", "bool_matmul"):
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return request.param


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in _criteria:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip())
