import pytest

from app.config import get_settings, load_environment


@pytest.fixture
def clean_env(monkeypatch):
    for name in ("GRASP_WORKERS", "LOG_LEVEL"):
        monkeypatch.setenv(name, "")
        monkeypatch.delenv(name)
    yield
    get_settings.cache_clear()


def test_env_file_reaches_settings(tmp_path, clean_env):
    env_file = tmp_path / ".env"
    env_file.write_text("GRASP_WORKERS=3\nLOG_LEVEL=debug\n")
    assert load_environment(env_file)
    settings = get_settings()
    assert settings.GRASP_WORKERS == 3
    assert settings.LOG_LEVEL == "DEBUG"


def test_process_environment_wins_over_env_file(tmp_path, clean_env, monkeypatch):
    monkeypatch.setenv("GRASP_WORKERS", "2")
    env_file = tmp_path / ".env"
    env_file.write_text("GRASP_WORKERS=5\n")
    load_environment(env_file)
    assert get_settings().GRASP_WORKERS == 2


def test_missing_env_file_is_reported(tmp_path, clean_env):
    assert not load_environment(tmp_path / "absent.env")
