"""Collects one line per acceptance criterion; printed by the conftest summary hook."""

LINES = []


def record(number, title, passed, detail):
    LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} ({detail})")
    return passed
