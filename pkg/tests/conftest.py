import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
DESK_SEEDS = (0, 1, 2)

# (criterion, passed, detail) lines collected by test_acceptance
ACCEPTANCE: list[tuple[int, bool, str]] = []


@pytest.fixture(scope="session")
def desk_study(tmp_path_factory):
    """Three-seed desk trend study shared by the acceptance and desk tests."""
    from legr.manifest import load_manifest
    from legr.study import summarize, trend_trial

    base = load_manifest(CONFIGS / "desk.json")
    trials = [trend_trial(base.with_seed(s)) for s in DESK_SEEDS]
    summary = summarize(trials, base.sweep.zetas)
    out = tmp_path_factory.mktemp("desk") / "summary.json"
    out.write_text(json.dumps(summary, indent=2, default=str))
    return base, trials, summary


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance")
    for n, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
