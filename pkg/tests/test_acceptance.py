"""Acceptance criteria, one test each, with their runtime limits.

Each test prints a single ``PASS``/``FAIL`` line with the measured values.
Run directly (``python3 tests/test_acceptance.py``) for just those lines.
"""

import sys

import pytest

from replenish.verify import SUITES

# (number, title, suite, seconds allowed)
CRITERIA = [
    (1, "hard-instance ratio", "hard_instance", 1.0),
    (2, "LP upper-bounds OPT", "lemma41", 30.0),
    (3, "sandwich inequalities", "sandwich", 5.0),
    (4, "coupling identity", "coupling", 30.0),
    (5, "fallback rate", "fallback", 120.0),
    (6, "Chernoff tail", "chernoff", 30.0),
    (7, "Adwords trend", "trend", 300.0),
    (8, "worked examples", "appendix", 1.0),
    (9, "zero-replenishment identity", "identity", 10.0),
    (10, "attenuated rounding", "lemma42", 120.0),
]


def evaluate(number, title, suite, limit):
    report = SUITES[suite]()
    in_time = report.seconds < limit
    ok = report.passed and in_time
    failed = [c.name for c in report.checks if not c.passed]
    summary = "; ".join(f"{c.name}={c.measured}" for c in report.checks[-3:])
    line = (f"{'PASS' if ok else 'FAIL'} criterion {number:2d} {title}: {len(report.checks)} checks, "
            f"{report.seconds:.2f}s (limit {limit:g}s)"
            + (f", failed {failed}" if failed else "") + f" | {summary}")
    return ok, line


@pytest.mark.parametrize("number, title, suite, limit", CRITERIA, ids=[f"c{n}-{s}" for n, _, s, _ in CRITERIA])
def test_criterion(number, title, suite, limit, capsys):
    ok, line = evaluate(number, title, suite, limit)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    results = [evaluate(*row) for row in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
