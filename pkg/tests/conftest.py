from __future__ import annotations

import helpers


def pytest_terminal_summary(terminalreporter):
    if not helpers.ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in range(1, 13):
        if cid not in helpers.ACCEPTANCE:
            tr.write_line(f"criterion {cid:2d}: NOT RUN")
            continue
        ok, detail = helpers.ACCEPTANCE[cid]
        tr.write_line(f"criterion {cid:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
