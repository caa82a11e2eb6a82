import numpy as np
import pytest

from geostat.corpus import Corpus, Picture

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion."""

    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


def make_corpus(records) -> Corpus:
    """records: (id, lat, lon, ts, tags)"""
    return Corpus([Picture(pid, lat, lon, ts, tuple(tags)) for pid, lat, lon, ts, tags in records])


@pytest.fixture(scope="session")
def small_synth():
    from geostat.synth import SynthConfig, generate

    return generate(SynthConfig(seed=3, tiles=2, events=16, background_pictures=1500, train_queries=10))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
