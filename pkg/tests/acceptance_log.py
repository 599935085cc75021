"""Collects one verdict line per acceptance criterion for the terminal summary."""

RESULTS: dict[int, tuple[bool, str, str]] = {}


def record(number: int, title: str, passed: bool, detail: str) -> bool:
    RESULTS[number] = (bool(passed), title, detail)
    print(line(number))
    return bool(passed)


def line(number: int) -> str:
    passed, title, detail = RESULTS[number]
    return f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
