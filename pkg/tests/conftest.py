"""Shared pytest hooks: a per-criterion summary for the acceptance suite."""

_CRITERIA = {
    "test_criterion_1": ("1", "cost-formula exactness"),
    "test_criterion_2": ("2", "parameter-count oracle"),
    "test_criterion_3": ("3", "contrastive loss closed forms and invariances"),
    "test_criterion_4": ("4", "scaling-law fit recovery"),
    "test_criterion_5": ("5", "crossover algebra and threshold rule"),
    "test_criterion_6": ("6", "end-to-end planner oracle"),
    "test_criterion_7_": ("7", "rank correlation"),
    "test_criterion_7b": ("7b", "published run-data correlation (optional input)"),
    "test_criterion_8": ("8", "determinism"),
}


def pytest_terminal_summary(terminalreporter):
    lines = {}
    for outcome in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(outcome, []):
            name = getattr(report, "location", ("", "", ""))[2]
            matches = [p for p in _CRITERIA if name.startswith(p)]
            if matches:
                prefix = max(matches, key=len)
                number, label = _CRITERIA[prefix]
                status = "PASS" if outcome == "passed" else outcome.upper()
                lines[number] = f"[{status}] acceptance {number}: {label}"
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
