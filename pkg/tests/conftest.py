from __future__ import annotations

import json
from pathlib import Path

import pytest

from helishape.corpus import standard_corpus
from helishape.geometry import rasterize

ORACLES = json.loads((Path(__file__).parent / "oracles" / "frozen.json").read_text())


@pytest.fixture(scope="session")
def oracles() -> dict:
    return ORACLES


@pytest.fixture(scope="session")
def corpus() -> dict:
    return standard_corpus()


@pytest.fixture(scope="session")
def coarse_corpus(corpus) -> dict:
    return {name: rasterize(spec, 0.1) for name, spec in corpus.items()}


@pytest.fixture(scope="session")
def acceptance(request):
    """Recorder for acceptance criteria: ``acceptance(n, title, passed, detail)``."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        lines.append((number, f"criterion {number} {'PASS' if passed else 'FAIL'}: {title}"
                              + (f" ({detail})" if detail else "")))
        return passed

    return record


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, text in sorted(lines):
            terminalreporter.write_line(text)
