"""Shared fixtures; puts src/ on the import path the way main.py does"""

import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from source_model import ConsumerClass, Population  # noqa: E402

REPO_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
SCENARIOS_DIR = os.path.join(REPO_ROOT, "scenarios")


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for name in list(os.environ):
        if name.startswith("STORAGE_SIZING_"):
            monkeypatch.delenv(name, raising=False)


@pytest.fixture
def single_user():
    """One normalized consumer with chi = 0.5"""
    return Population.single(1, ConsumerClass.normalized(0.5))


@pytest.fixture
def two_class():
    return Population(
        classes=(
            ConsumerClass(lam=0.5, mu=1.0, peak_demand=0.5),
            ConsumerClass(lam=0.7, mu=1.0, peak_demand=1.0),
        ),
        counts=(4, 3),
    )


@pytest.fixture
def four_class_classes():
    return tuple(
        ConsumerClass(lam=lam, mu=1.0, peak_demand=peak)
        for lam, peak in ((0.3, 0.2), (0.5, 0.4), (0.7, 0.6), (0.9, 0.8))
    )


@pytest.fixture
def scenarios_dir():
    return SCENARIOS_DIR
