import re

CRITERIA = {
    1: "gradient correctness of every loss",
    2: "mixture fit matches multi-restart oracle",
    3: "contrastive loss matches direct-sum oracle",
    4: "positive/negative selection semantics",
    5: "calibration identity and suppression",
    6: "teacher EMA exactness, no teacher gradients",
    7: "component ablation ordering and gap",
    8: "byte-identical metrics for identical config and seed",
    9: "pseudo-label accuracy improves over training",
}

_outcomes = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    m = re.search(r"::test_criterion_(\d+)", report.nodeid)
    if m:
        n = int(m.group(1))
        _outcomes[n] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        status = "PASS" if _outcomes[n] == "passed" else "FAIL"
        terminalreporter.write_line(
            f"criterion {n} ({CRITERIA[n]}): {status}")
