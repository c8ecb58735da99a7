"""Per-criterion verdict lines, printed in the pytest terminal summary."""
LINES: dict[int, str] = {}


def record(number: int, title: str, passed: bool, detail: str, seconds: float) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} -- {detail} ({seconds:.1f} s)"
    LINES[number] = line
    print(line)
