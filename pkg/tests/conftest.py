"""Echo the acceptance-criterion result lines after the run.

The acceptance tests print one ``criterion N PASS`` line each; pytest
captures those, so this hook re-emits them (and a FAIL line for any failed
criterion) in a summary block that survives default capture.
"""

import re

_CRITERION = re.compile(r"test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = {}
    for reports in terminalreporter.stats.values():
        for rep in reports:
            if getattr(rep, "when", None) != "call":
                continue
            m = _CRITERION.search(getattr(rep, "nodeid", ""))
            if m is None:
                continue
            n = int(m.group(1))
            if rep.failed:
                lines[n] = f"criterion {n} FAIL: see traceback above"
                continue
            for line in getattr(rep, "capstdout", "").splitlines():
                if line.startswith(f"criterion {n} "):
                    lines[n] = line
    if lines:
        terminalreporter.section("acceptance summary")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
