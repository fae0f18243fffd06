import pytest

from config import DEFAULT_MAX_STATES, get_settings
from errors import ConfigurationError


def test_defaults():
    settings = get_settings()
    assert settings.results_dir == "sizing_results"
    assert settings.max_states == DEFAULT_MAX_STATES
    assert settings.max_dense_states == 5000
    assert settings.workers == 4
    assert settings.tariff_book_path is None


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("STORAGE_SIZING_WORKERS", "2")
    monkeypatch.setenv("STORAGE_SIZING_RESULTS_DIR", "/tmp/elsewhere")
    settings = get_settings()
    assert settings.workers == 2
    assert settings.results_dir == "/tmp/elsewhere"


@pytest.mark.parametrize("raw", ["four", "0", "-3"])
def test_bad_integer(monkeypatch, raw):
    monkeypatch.setenv("STORAGE_SIZING_MAX_STATES", raw)
    with pytest.raises(ConfigurationError, match="STORAGE_SIZING_MAX_STATES"):
        get_settings()
