import contextlib
import time

ACCEPTANCE: dict = {}


@contextlib.contextmanager
def criterion(number: int, title: str):
    """Record PASS/FAIL for one acceptance criterion and print it."""
    t0 = time.perf_counter()
    status = "FAIL"
    try:
        yield
        status = "PASS"
    finally:
        line = f"criterion {number}: {status}  {title}  ({time.perf_counter() - t0:.2f}s)"
        ACCEPTANCE[number] = line
        print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
