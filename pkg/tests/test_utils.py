import numpy as np
import pytest

from weylwalk.settings import get_settings, resolve_threads
from weylwalk.utils import (
    SWEEP_CHUNK,
    format_float,
    lexicographic_sign,
    pad3,
    parse_vector,
    spin1_generators,
    sweep,
)


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("WEYLWALK_THREADS", "3")
    monkeypatch.setenv("WEYLWALK_LOG_LEVEL", "debug")
    settings = get_settings()
    assert settings.threads == 3
    assert settings.log_level == "DEBUG"
    assert resolve_threads() == 3
    assert resolve_threads(2) == 2


def test_settings_overrides(monkeypatch):
    monkeypatch.delenv("WEYLWALK_THREADS", raising=False)
    assert get_settings(grid=32, tol=None).grid == 32
    assert resolve_threads() >= 1


def test_settings_reject_bad_values(monkeypatch):
    monkeypatch.setenv("WEYLWALK_LOG_LEVEL", "loud")
    with pytest.raises(ValueError):
        get_settings()
    monkeypatch.setenv("WEYLWALK_LOG_LEVEL", "INFO")
    with pytest.raises(ValueError):
        get_settings(grid=4)


def test_parse_vector():
    assert np.array_equal(parse_vector("0.1, 0,-2"), [0.1, 0.0, -2.0])
    with pytest.raises(ValueError):
        parse_vector("1,,2")
    with pytest.raises(ValueError):
        parse_vector("1,inf")
    with pytest.raises(ValueError):
        parse_vector("1,2", length=3)
    with pytest.raises(ValueError):
        parse_vector("one")


def test_spin1_generators_commutation():
    j = spin1_generators()
    assert np.allclose(j[0] @ j[1] - j[1] @ j[0], 1j * j[2])
    assert np.allclose(sum(g @ g for g in j), 2 * np.eye(3))


def test_sweep_preserves_order():
    points = np.arange(3 * SWEEP_CHUNK + 17, dtype=float).reshape(-1, 1)
    result = sweep(lambda p: p[:, 0] * 2, points, threads=3)
    assert np.array_equal(result, 2 * points[:, 0])
    assert sweep(lambda p: p[:, 0], np.zeros((0, 1))).shape == (0,)


def test_pad3():
    assert pad3(np.ones((4, 1))).shape == (4, 3)
    assert np.array_equal(pad3([1.0, 2.0]), [1.0, 2.0, 0.0])


def test_format_float_round_trips():
    for value in (0.1, 1 / 3, 1e-300, -2.5):
        assert float(format_float(value)) == value


def test_lexicographic_sign():
    assert lexicographic_sign([np.array([0.0, -1.0]), np.array([1e-20, 2.0]), np.zeros(2)]) == [-1.0, 1.0, 1.0]
