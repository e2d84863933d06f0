"""Shared fixtures: the motivating log, its rules, and case-study material."""

from __future__ import annotations

from pathlib import Path

import pytest

from rulemine.declare import parse_rules
from rulemine.event_log import parse_variants
from rulemine.tree import activity, sequence, silent, xor

DATA = Path(__file__).parent / "data"


def read(name: str) -> str:
    return (DATA / name).read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def motivating_log():
    return parse_variants(read("motivating_log.variants"))


@pytest.fixture(scope="session")
def motivating_rules():
    return parse_rules(read("motivating_rules.txt"))


@pytest.fixture(scope="session")
def case_study_log():
    return parse_variants(read("case_study_log.variants"))


@pytest.fixture(scope="session")
def case_study_initial_rules():
    return parse_rules(read("case_study_initial_rules.txt"))


@pytest.fixture(scope="session")
def case_study_feedback_rules():
    return parse_rules(read("case_study_feedback_rules.txt"))


@pytest.fixture(scope="session")
def reference_tree():
    """Hand-built claim-application model used by serialization/semantics tests."""
    return sequence(
        activity("A-created"),
        xor(
            activity("A-canceled"),
            sequence(
                activity("Doc-checked"),
                activity("Hist-checked"),
                xor(activity("A-accepted"), activity("A-rejected")),
            ),
        ),
    )


@pytest.fixture()
def data_dir() -> Path:
    return DATA
