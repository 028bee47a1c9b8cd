import pytest

from ecc_bench import ingestion, merging, scenario


@pytest.fixture(scope="session")
def default_scenario():
    return scenario.generate(scenario.load_config())


@pytest.fixture(scope="session")
def scenario_states(default_scenario):
    return ingestion.states_from_records(default_scenario.traces, ingestion.WindowSpec(),
                                         default_scenario.graph)


@pytest.fixture(scope="session")
def scenario_merged(scenario_states):
    return merging.merge(scenario_states)


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" in rep.nodeid and rep.when == "call" or (
                    outcome == "error" and "test_acceptance.py" in rep.nodeid):
                rows.append((rep.nodeid.split("::")[-1], "PASS" if outcome == "passed" else "FAIL"))
    if rows:
        terminalreporter.section("acceptance criteria")
        for name, status in sorted(rows):
            terminalreporter.write_line(f"{status}  {name}")
