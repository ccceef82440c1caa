import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import TABLE  # noqa: E402

from cirdiff import CirParams, DiffModel  # noqa: E402

def table_model(date: str) -> DiffModel:
    t = TABLE[date]
    return DiffModel(CirParams(*t["x"]), CirParams(*t["y"]))


@pytest.fixture(scope="session")
def model_2019():
    return table_model("2019-12-30")


@pytest.fixture(scope="session")
def model_2020():
    return table_model("2020-11-30")


@pytest.fixture
def acceptance_line(request):
    """Collects one PASS/FAIL line per acceptance criterion for the summary."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])
    return lines.append


def pytest_terminal_summary(terminalreporter, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def paths_2019(model_2019):
    """Desk-scale path set: delta 1/256, 10^4 paths, 30y, integer years recorded."""
    from cirdiff import SimConfig, simulate

    cfg = SimConfig(horizon=30.0, paths=10_000, seed=0, record_every=256, trace_paths=4)
    return simulate(model_2019, cfg)
