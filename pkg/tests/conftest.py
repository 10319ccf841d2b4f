import os
import tempfile

import pytest

# keep cusp-form bases across test processes; harmless if the directory disappears
os.environ.setdefault("TWISTAVG_CACHE_DIR", os.path.join(tempfile.gettempdir(), "twistavg-cache"))
os.makedirs(os.environ["TWISTAVG_CACHE_DIR"], exist_ok=True)

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def record():
    def _record(name: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE[name] = (bool(ok), detail)
        return bool(ok)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda x: int(x[2:])):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}  {detail}")
