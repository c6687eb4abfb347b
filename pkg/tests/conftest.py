"""Shared fixtures: bundled worlds and a tiny hand-rolled graph."""

from __future__ import annotations

import contextlib
import pathlib

import pytest

from stepqa.environment import Environment, WorldTruth, load_world_truth

WORLDS = pathlib.Path(__file__).resolve().parent.parent / "worlds"

# Acceptance verdicts, filled in by the criterion() blocks in
# test_acceptance.py and echoed after the run so the pass/fail line for
# each criterion survives pytest's output capture.
acceptance_results: dict[int, tuple[bool, str]] = {}


@contextlib.contextmanager
def criterion(number: int, description: str):
    try:
        yield
    except BaseException:
        acceptance_results[number] = (False, description)
        raise
    acceptance_results[number] = (True, description)


def pytest_terminal_summary(terminalreporter):
    if not acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(acceptance_results):
        ok, description = acceptance_results[number]
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {verdict} - {description}")


@pytest.fixture(scope="session")
def demo_path() -> pathlib.Path:
    return WORLDS / "demo_house.json"


@pytest.fixture()
def demo_truth(demo_path) -> WorldTruth:
    return load_world_truth(demo_path)


@pytest.fixture()
def demo_env(demo_truth) -> Environment:
    return Environment(demo_truth)


@pytest.fixture()
def clear_truth() -> WorldTruth:
    return load_world_truth(WORLDS / "clutter_clear.json")


@pytest.fixture()
def occluded_truth() -> WorldTruth:
    return load_world_truth(WORLDS / "clutter_occluded.json")
