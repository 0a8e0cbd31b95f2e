import pytest

from fanflow.panel import build_panel

CRITERIA = {
    1: "panel oracle equivalence",
    2: "graph oracle equivalence",
    3: "state taxonomy",
    4: "statistics correctness",
    5: "reported-value consistency",
    6: "directional synthetic reproduction",
    7: "robustness sweep",
    8: "performance",
    9: "determinism",
}
_outcomes: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and not report.failed):
        return
    _outcomes.setdefault(marker.args[0], []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        seen = set(_outcomes[n])
        verdict = "FAIL" if "failed" in seen else "PASS" if "passed" in seen else "SKIP"
        terminalreporter.write_line(f"criterion {n} ({CRITERIA[n]}): {verdict}")


@pytest.fixture(scope="session")
def acceptance_corpus():
    from fanflow.synth import acceptance_config, generate
    events, roster = generate(acceptance_config())
    return events, roster, build_panel(events, roster)
